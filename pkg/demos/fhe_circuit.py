"""Evaluate a NAND-only XOR under DualGSW and watch the tracked noise."""
import numpy as np

from revoca.dual_regev import keygen
from revoca.gsw import NandCircuit, eval_nand, gsw_decrypt, gsw_encrypt, gsw_margin
from revoca.lattice import SchemeParams
from revoca.rng import stream

q = 1048573
params = SchemeParams(n=1, m=4, q=q, sigma=2.0, alpha=1 / q, beta=1 / q, L=3)
rng = stream(0, "demo/fhe")
pk, key, _ = keygen(params, rng, "classical")

circ = NandCircuit.parse("""
in a
in b
gate t = NAND(a,b)
gate u = NAND(a,t)
gate v = NAND(b,t)
gate o = NAND(u,v)
out o
""")
print(f"margin {gsw_margin(q):.2f}, depth {circ.depth}")
for a in (0, 1):
    for b in (0, 1):
        wires = {"a": gsw_encrypt(pk, a, params, rng, key.x0), "b": gsw_encrypt(pk, b, params, rng, key.x0)}
        for g, (x, y) in circ.gates.items():
            wires[g] = eval_nand(wires[x], wires[y], params)
        noise = {g: int(np.abs(wires[g].trace.err).max()) for g in circ.gates}
        print(f"{a} xor {b} = {gsw_decrypt(key, wires['o'], q)}   |noise| per gate {noise}")
