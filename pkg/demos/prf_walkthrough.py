"""Generate a revocable PRF key, evaluate it from the quantum key, then revoke."""
import numpy as np

from revoca.lattice import SchemeParams
from revoca.prf import eval_quantum, margin_check, prf, prf_gen, prf_revoke
from revoca.rng import stream

params = SchemeParams(n=1, m=4, q=4093, sigma=3.0, p=2)
k, qk, msk = prf_gen(params, stream(0, "s"))
print(f"ell={params.ell} coset support={len(qk.state)}")

rng = stream(1, "demo/prf")
key = qk
for _ in range(5):
    x = rng.integers(0, 2, size=params.ell)
    ok, slack = margin_check(k, key.state, x, params)
    out, key = eval_quantum(key, x, params, rng)
    print(f"x={''.join(map(str, x[:12]))}...  prf={prf(k, x, params)}  eval={out}  margin ok={ok} slack={slack}")

print("verdict after 5 evaluations:", prf_revoke(msk, qk, key, params, rng).value)
