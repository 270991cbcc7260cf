"""Play the revocation game at sim-tiny with each built-in adversary.

    python3 demos/revocation_game.py [trials]
"""
import sys

from revoca.dual_regev import PKE_ADVERSARIES, keygen, revoke, run_pke_experiment
from revoca.harness import PRESETS
from revoca.rng import stream

params = PRESETS["sim-tiny"]
trials = int(sys.argv[1]) if len(sys.argv) > 1 else 2000

pk, key, msk = keygen(params, stream(0, "demo"))
print(f"A={pk.A.tolist()} y={pk.y.tolist()} key support={len(key.state)}")
print(f"honest return verdict: {revoke(msk, pk, key, params, stream(1, 'demo')).value}")

for name in PKE_ADVERSARIES:
    st = run_pke_experiment(name, params, trials, seed=0)
    print(f"{name:>18}: valid={st.valid_rate:.3f} success={st.success_rate:.3f} +- {st.std_error:.3f}")
