"""Key-revocable DualGSW leveled FHE over NAND gates.

Keys are the Dual-Regev keys, so revocation is inherited unchanged.  A
ciphertext of mu satisfies (-x, 1) C = mu (-x, 1) G + err; with ``trace_key``
set at encryption the integer row ``err`` is carried alongside and updated
through every gate by the exact recurrence::

    err' = -mu0 * err1 - err0 @ G^{-1}(C1)
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from . import coset
from .dual_regev import DrDecKey, DrPublicKey, decode_bit, keygen  # noqa: F401  (shared keys)
from .lattice import (
    ParameterError, SchemeParams, centered, gadget_inv, gadget_matrix, matmul_mod, mod,
    sample_discrete_gaussian, uniform,
)


class DepthError(ParameterError):
    """Evaluation would exceed the FHE depth bound L."""


@dataclass(frozen=True, eq=False)
class NoiseTrace:
    mu: int
    err: np.ndarray  # exact integer row of length N


@dataclass(frozen=True, eq=False)
class GswCiphertext:
    C: np.ndarray
    level: int = 0
    trace: NoiseTrace | None = field(default=None, repr=False)


def secret_row(x0, q: int) -> np.ndarray:
    return np.concatenate([mod(-np.asarray(x0, dtype=np.int64), q), [1]])


def gsw_encrypt(pk: DrPublicKey, bit: int, params: SchemeParams, rng: np.random.Generator,
                trace_key=None) -> GswCiphertext:
    """[A^T S + E ; y^T S + e] + bit * G with S uniform n x N."""
    if bit not in (0, 1):
        raise ParameterError("plaintext must be a bit")
    n, m, q, N = params.n, params.m, params.q, params.N_gadget
    S = uniform((n, N), q, rng)
    E = sample_discrete_gaussian(m, params.alpha * q, q, rng, size=N).T  # columns ~ D_{Z^m}
    e = sample_discrete_gaussian(N, params.beta * q, q, rng)
    top = mod(matmul_mod(pk.A.T, S, q) + E, q)
    bot = mod(matmul_mod(pk.y[None, :], S, q) + e[None, :], q)
    C = mod(np.vstack([top, bot]) + bit * gadget_matrix(m + 1, q), q)
    trace = None
    if trace_key is not None:
        x0 = np.asarray(trace_key, dtype=np.int64)
        err = -(centered(x0, q) @ centered(E, q)) + centered(e, q)
        trace = NoiseTrace(bit, err.astype(np.int64))
    return GswCiphertext(C, 0, trace)


def eval_nand(ct0: GswCiphertext, ct1: GswCiphertext, params: SchemeParams) -> GswCiphertext:
    """G - C0 G^{-1}(C1)."""
    if ct0.level >= params.L or ct1.level >= params.L:
        raise DepthError(f"inputs at level {ct0.level}/{ct1.level} with depth bound L={params.L}")
    q, m = params.q, params.m
    if ct0.C.shape != (m + 1, params.N_gadget) or ct1.C.shape != ct0.C.shape:
        raise ParameterError("ciphertext shape mismatch")
    bits = gadget_inv(ct1.C, q)
    C = mod(gadget_matrix(m + 1, q) - matmul_mod(ct0.C, bits, q), q)
    trace = None
    if ct0.trace is not None and ct1.trace is not None:
        t0, t1 = ct0.trace, ct1.trace
        err = -t0.mu * t1.err - t0.err @ bits
        trace = NoiseTrace(1 - t0.mu * t1.mu, err)
    return GswCiphertext(C, max(ct0.level, ct1.level) + 1, trace)


def secret_side_noise(ct: GswCiphertext, x0, mu: int, q: int) -> np.ndarray:
    """c((-x,1) C - mu (-x,1) G): the noise row recomputed from the key."""
    s = secret_row(x0, q)
    G = gadget_matrix(ct.C.shape[0], q)
    return centered(matmul_mod(s[None, :], ct.C, q)[0] - mu * matmul_mod(s[None, :], G, q)[0], q)


def gsw_decrypt(deckey, ct: GswCiphertext, q: int) -> int:
    """Classical decryption from the last column: (-x,1) C_N = mu 2^{k-1} + noise."""
    x0 = deckey.x0 if isinstance(deckey, DrDecKey) else deckey
    v = int(secret_row(x0, q) @ ct.C[:, -1]) % q
    return _decode_last_column(v, q)


def _decode_last_column(v: int, q: int) -> int:
    # the q/4 rule; correct while the noise stays below gsw_margin(q)
    return decode_bit(v, q)


def gsw_margin(q: int) -> float:
    """Noise magnitude the last-column decoding tolerates for both plaintexts.

    The scaled bit is 2^{k-1} mod q, so a sensible q sits just below a power
    of two; for q = 5 the margin is negative and decryption cannot work.
    """
    k = (q - 1).bit_length()
    top = abs(int(centered(pow(2, k - 1, q), q)))
    return min(q / 4, top - q / 4)


def gsw_decrypt_quantum(deckey: DrDecKey, ct: GswCiphertext, params: SchemeParams,
                        rng: np.random.Generator, purified: bool = False):
    """Measure (-x,1) C_N over the coset state; returns (bit, post-key)."""
    if not deckey.quantum:
        raise ParameterError("needs a quantum key")
    q, st = params.q, deckey.state
    col = ct.C[:, -1]
    v = coset.linear_outcomes(st, col[:-1], int(col[-1]), q)
    p = st.probabilities()
    decoded = np.array([_decode_last_column(int(t), q) for t in v], dtype=int)
    if purified:
        pb = np.bincount(decoded, weights=p, minlength=2)
        b = int(rng.choice(2, p=pb / pb.sum()))
        mask = decoded == b
    else:
        dist = np.bincount(v, weights=p, minlength=q)
        val = int(rng.choice(q, p=dist / dist.sum()))
        b = _decode_last_column(val, q)
        mask = v == val
    post = st if bool(np.all(mask)) else coset.condition(st, mask)
    return b, DrDecKey(state=post)


# ------------------------------------------------------------ circuits

_GATE = re.compile(r"^gate\s+(\S+)\s*=\s*NAND\(\s*([^,\s]+)\s*,\s*([^)\s]+)\s*\)$")


@dataclass
class NandCircuit:
    inputs: list
    gates: dict  # id -> (a, b), insertion order is topological
    out: str

    @classmethod
    def parse(cls, text: str) -> "NandCircuit":
        inputs, gates, out = [], {}, None
        for ln, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("in "):
                inputs.append(line[3:].strip())
                continue
            if line.startswith("out "):
                if out is not None:
                    raise ParameterError(f"line {ln}: more than one output")
                out = line[4:].strip()
                continue
            mt = _GATE.match(line)
            if not mt:
                raise ParameterError(f"line {ln}: cannot parse {raw!r}")
            gid, a, b = mt.groups()
            known = set(inputs) | set(gates)
            for w in (a, b):
                if w not in known:
                    raise ParameterError(f"line {ln}: wire {w!r} used before definition")
            if gid in known:
                raise ParameterError(f"line {ln}: wire {gid!r} redefined")
            gates[gid] = (a, b)
        if out is None:
            raise ParameterError("netlist has no output")
        if out not in inputs and out not in gates:
            raise ParameterError(f"output {out!r} is undefined")
        return cls(inputs, gates, out)

    def to_netlist(self) -> str:
        lines = [f"in {w}" for w in self.inputs]
        lines += [f"gate {g} = NAND({a},{b})" for g, (a, b) in self.gates.items()]
        lines.append(f"out {self.out}")
        return "\n".join(lines) + "\n"

    def depths(self) -> dict:
        d = {w: 0 for w in self.inputs}
        for g, (a, b) in self.gates.items():
            d[g] = max(d[a], d[b]) + 1
        return d

    @property
    def depth(self) -> int:
        return self.depths()[self.out]

    def evaluate_plain(self, bits) -> int:
        val = dict(zip(self.inputs, (int(b) for b in bits)))
        for g, (a, b) in self.gates.items():
            val[g] = 1 - (val[a] & val[b])
        return val[self.out]


def eval_circuit(cts, circuit: NandCircuit, params: SchemeParams) -> GswCiphertext:
    """Gate-by-gate NAND evaluation in netlist (topological) order."""
    if circuit.depth > params.L:
        raise DepthError(f"circuit depth {circuit.depth} exceeds L={params.L}")
    if isinstance(cts, dict):
        val = dict(cts)
    else:
        cts = list(cts)
        if len(cts) != len(circuit.inputs):
            raise ParameterError("wrong number of input ciphertexts")
        val = dict(zip(circuit.inputs, cts))
    needed = _cone(circuit)
    for g, (a, b) in circuit.gates.items():
        if g in needed:
            val[g] = eval_nand(val[a], val[b], params)
    return val[circuit.out]


def _cone(circuit: NandCircuit) -> set:
    need, todo = set(), [circuit.out]
    while todo:
        w = todo.pop()
        if w in need or w not in circuit.gates:
            continue
        need.add(w)
        todo.extend(circuit.gates[w])
    return need
