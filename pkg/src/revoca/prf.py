"""Shift-hiding key tables and the revocable PRF built on them.

Table cell ``phi(i, j, tau)`` for bit ``b`` holds ``S A + E + M`` with S, E
small Gaussian matrices and M either zero or a single entry
``(b xor r_phi) * 2**tau`` at position (i, j).  Summing the cells selected by
an input x gives ``S_x A + E_x + M_x``; the PRF rounds ``S_x y`` to Z_p.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import coset
from .coset import PureState, Verdict
from .dual_regev import (
    Adversary, DrMasterSecret, ExperimentAbort, TrialRecord, _check_state, junk_state, run_trials,
    summarize,
)
from .lattice import (
    ParameterError, SchemeParams, centered, gen_trap, log2q, mod, round_to_p,
    sample_discrete_gaussian,
)
from .rng import stream


def phi(i: int, j: int, tau: int, params: SchemeParams) -> int:
    if not (0 <= i < params.n and 0 <= j < params.m and 0 <= tau < params.k):
        raise ParameterError(f"index ({i}, {j}, {tau}) out of range")
    return (i * params.m + j) * params.k + tau


def phi_inv(idx: int, params: SchemeParams) -> tuple[int, int, int]:
    if not 0 <= idx < params.ell:
        raise ParameterError(f"index {idx} out of range")
    ij, tau = divmod(idx, params.k)
    i, j = divmod(ij, params.m)
    return i, j, tau


@dataclass(frozen=True, eq=False)
class ShiftFunction:
    """Zero when ``r`` is None, otherwise the shift H_r."""

    r: np.ndarray | None = None

    @property
    def is_zero(self) -> bool:
        return self.r is None


ZERO = ShiftFunction()


def shift_matrix(F: ShiftFunction, b: int, i: int, j: int, tau: int, params: SchemeParams) -> np.ndarray:
    M = np.zeros((params.n, params.m), dtype=np.int64)
    if not F.is_zero:
        bit = int(b) ^ int(F.r[phi(i, j, tau, params)])
        M[i, j] = (bit << tau) % params.q
    return M


def _shift_table(F: ShiftFunction, params: SchemeParams) -> np.ndarray:
    n, m, k, q = params.n, params.m, params.k, params.q
    T = np.zeros((2, params.ell, n, m), dtype=np.int64)
    if F.is_zero:
        return T
    r = np.asarray(F.r, dtype=np.int64)
    if r.shape != (params.ell,):
        raise ParameterError("shift string must have length ell")
    for idx in range(params.ell):
        i, j, tau = phi_inv(idx, params)
        for b in (0, 1):
            T[b, idx, i, j] = ((b ^ int(r[idx])) << tau) % q
    return T


@dataclass(frozen=True, eq=False)
class ShiftHidingPK:
    A: np.ndarray
    table: np.ndarray  # (2, ell, n, m)


@dataclass(frozen=True, eq=False)
class ShiftHidingSK:
    S: np.ndarray  # (2, ell, n, n)
    E: np.ndarray  # (2, ell, n, m)


def kg(params: SchemeParams, A, F: ShiftFunction, rng: np.random.Generator,
       sigma: float | None = None, noiseless: bool = False):
    """Shift-hiding key pair.  ``sigma=0`` makes the table equal M exactly;
    ``noiseless`` keeps S Gaussian but sets every E to zero (debug mode)."""
    n, m, q, ell = params.n, params.m, params.q, params.ell
    sig = params.sigma if sigma is None else sigma
    A = np.asarray(A, dtype=np.int64)
    if A.shape != (n, m):
        raise ParameterError(f"A must be {n}x{m}")
    S = sample_discrete_gaussian(1, sig, q, rng, size=2 * ell * n * n).reshape(2, ell, n, n)
    E = sample_discrete_gaussian(1, sig, q, rng, size=2 * ell * n * m).reshape(2, ell, n, m)
    if noiseless:
        E = np.zeros_like(E)
    M = _shift_table(F, params)
    T = mod(np.einsum("bkij,jl->bkil", centered(S, q), A) + E + M, q)
    return ShiftHidingPK(A, T), ShiftHidingSK(S, E)


def _bits(x, ell: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64).reshape(-1)
    if x.shape != (ell,) or np.any((x != 0) & (x != 1)):
        raise ParameterError(f"input must be {ell} bits")
    return x


def shift_eval(pk: ShiftHidingPK, x, q: int) -> np.ndarray:
    """Sum of the table cells selected by x."""
    ell = pk.table.shape[1]
    x = _bits(x, ell)
    return mod(np.sum(pk.table[x, np.arange(ell)], axis=0), q)


def recover_Sx(sk: ShiftHidingSK, x, q: int) -> np.ndarray:
    ell = sk.S.shape[1]
    x = _bits(x, ell)
    return mod(np.sum(sk.S[x, np.arange(ell)], axis=0), q)


def recover_Ex(sk: ShiftHidingSK, x, q: int) -> np.ndarray:
    """E_x as an exact integer matrix (centered entries summed)."""
    ell = sk.E.shape[1]
    x = _bits(x, ell)
    return np.sum(centered(sk.E[x, np.arange(ell)], q), axis=0)


def error_bound(params: SchemeParams) -> float:
    """(m sigma)^2 * n m ceil(log q)."""
    return (params.m * params.sigma) ** 2 * params.n * params.m * params.k


# ------------------------------------------------------------ the PRF

@dataclass(frozen=True, eq=False)
class PrfKey:
    pk: ShiftHidingPK
    sk: ShiftHidingSK
    y: np.ndarray


@dataclass(frozen=True, eq=False)
class QuantumPrfKey:
    pk: ShiftHidingPK
    state: PureState | None
    y: np.ndarray
    x0: np.ndarray | None = None  # classical-preimage mode

    @property
    def quantum(self) -> bool:
        return self.state is not None


def out_bits(params: SchemeParams) -> int:
    return params.n * log2q(params.p)


def encode_output(v, params: SchemeParams) -> np.ndarray:
    w = log2q(params.p)
    v = np.asarray(v, dtype=np.int64).reshape(-1)
    return ((v[:, None] >> np.arange(w)) & 1).reshape(-1).astype(np.int8)


def decode_output(bits, params: SchemeParams) -> np.ndarray:
    w = log2q(params.p)
    b = np.asarray(bits, dtype=np.int64).reshape(params.n, w)
    return b @ (1 << np.arange(w, dtype=np.int64))


def prf_gen(params: SchemeParams, rng: np.random.Generator, mode: str = "quantum",
            noiseless: bool = False):
    """GenTrap, shift-hiding keys for the zero function, and a coset-state key."""
    n, m, q, sigma = params.n, params.m, params.q, params.sigma
    pair = gen_trap(n, m, q, rng)
    pk, sk = kg(params, pair.A, ZERO, rng, noiseless=noiseless)
    if mode == "quantum":
        state, y = coset.gen_gauss(pair.A, sigma, q, rng)
        qk = QuantumPrfKey(pk, state, y)
    elif mode == "classical":
        x0 = sample_discrete_gaussian(m, sigma / math.sqrt(2), q, rng, radius=params.coset_radius)
        y = mod(pair.A @ x0, q)
        qk = QuantumPrfKey(pk, None, y, x0)
    else:
        raise ParameterError(f"unknown key mode {mode!r}")
    return PrfKey(pk, sk, y), qk, DrMasterSecret(pair)


def prf(k: PrfKey, x, params: SchemeParams) -> np.ndarray:
    """round_p(S_x y), as n * ceil(log2 p) little-endian bits."""
    Sx = recover_Sx(k.sk, x, params.q)
    return encode_output(round_to_p(Sx @ k.y, params.q, params.p), params)


def _eval_values(pk, vecs, x, params):
    Mx = shift_eval(pk, x, params.q)
    return round_to_p(vecs @ Mx.T, params.q, params.p)  # (K, n)


def eval_quantum(qk: QuantumPrfKey, x, params: SchemeParams, rng: np.random.Generator):
    """Measure round_p(M_x t) over the key; returns (bits, post-key)."""
    if not qk.quantum:
        vals = _eval_values(qk.pk, qk.x0[None, :], x, params)
        return encode_output(vals[0], params), qk
    st = qk.state
    vals = _eval_values(qk.pk, st.vecs, x, params)
    uniq, inv = np.unique(vals, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    pr = np.bincount(inv, weights=st.probabilities(), minlength=uniq.shape[0])
    j = int(rng.choice(len(pr), p=pr / pr.sum()))
    mask = inv == j
    post = st if bool(np.all(mask)) else coset.condition(st, mask)
    return encode_output(uniq[j], params), QuantumPrfKey(qk.pk, post, qk.y)


def rounding_slack(v, q: int, p: int) -> tuple[np.ndarray, np.ndarray]:
    """How far each entry can move down / up (mod q) without changing round_p."""
    v = mod(v, q).reshape(-1)
    lo = np.empty_like(v)
    hi = np.empty_like(v)
    h = q // 2
    for t, val in enumerate(v):
        c = (p * int(val) + h) // q
        first = -((-(c * q - h)) // p)  # smallest w with (p w + h) // q == c
        last = -((-((c + 1) * q - h)) // p) - 1
        first, last = max(first, 0), min(last, q - 1)
        down, up = int(val) - first, last - int(val)
        # cells p and 0 both round to 0 and touch across the wrap
        if c == 0:
            top_first = -((-(p * q - h)) // p)
            if top_first <= q - 1:
                down += q - top_first
        if c == p or (c == 0 and last == q - 1):
            up += -((-(q - h)) // p)
        lo[t], hi[t] = down, up
    return lo, hi


def margin_check(k: PrfKey, state: PureState, x, params: SchemeParams) -> tuple[bool, int]:
    """Whether every support vector t keeps S_x y + E_x t in the rounding cell of S_x y,
    via the sufficient condition -slack_down <= (E_x t)_i <= slack_up.

    Returns (ok, worst remaining slack)."""
    q = params.q
    v = mod(recover_Sx(k.sk, x, q) @ k.y, q)
    lo, hi = rounding_slack(v, q, params.p)
    Ex = recover_Ex(k.sk, x, q)
    d = centered(state.vecs, q) @ Ex.T  # (K, n) exact shifts
    room = np.minimum(hi[None, :] - d, lo[None, :] + d)
    worst = int(room.min())
    return worst >= 0, worst


def prf_revoke(msk: DrMasterSecret | None, qk: QuantumPrfKey, returned, params: SchemeParams,
               rng: np.random.Generator) -> Verdict:
    if msk is None:
        raise ParameterError("revocation needs the master secret")
    if isinstance(returned, QuantumPrfKey):
        returned = returned.state
    if returned is None or returned.dim_spec != (params.q, params.m):
        raise ParameterError("returned state has the wrong dimensions")
    ref = coset.build_coset_state(qk.pk.A, qk.y, params.sigma, params.q)
    verdict, _ = coset.revoke_project(returned, ref, rng)
    return verdict


# ------------------------------------------------------------ strong variant

def pqprf(K: bytes, x, nbits: int) -> np.ndarray:
    """Keyed blake2b mixer standing in for a post-quantum PRF (not a security claim)."""
    x = np.asarray(x, dtype=np.uint8).reshape(-1)
    out = b""
    ctr = 0
    while len(out) * 8 < nbits:
        out += hashlib.blake2b(np.packbits(x).tobytes() + ctr.to_bytes(4, "little"),
                               key=K, digest_size=64).digest()
        ctr += 1
    bits = np.unpackbits(np.frombuffer(out, dtype=np.uint8), bitorder="little")[:nbits]
    return bits.astype(np.int8)


@dataclass(frozen=True, eq=False)
class StrongKey:
    k: PrfKey
    K: bytes


@dataclass(frozen=True, eq=False)
class StrongQuantumKey:
    qk: QuantumPrfKey
    K: bytes


def strong_transform(k: PrfKey, qk: QuantumPrfKey, K: bytes):
    return StrongKey(k, K), StrongQuantumKey(qk, K)


def strong_prf(sk: StrongKey, x, params: SchemeParams) -> np.ndarray:
    return pqprf(sk.K, x, out_bits(params)) ^ prf(sk.k, x, params)


def strong_eval(sq: StrongQuantumKey, x, params, rng):
    val, post = eval_quantum(sq.qk, x, params, rng)
    return pqprf(sq.K, x, out_bits(params)) ^ val, StrongQuantumKey(post, sq.K)


def strong_revoke(msk, sq: StrongQuantumKey, returned, params, rng) -> Verdict:
    """K is simply discarded; revocation is that of the underlying key."""
    if isinstance(returned, StrongQuantumKey):
        returned = returned.qk
    return prf_revoke(msk, sq.qk, returned, params, rng)


# ------------------------------------------------------------ game

class PrfHonestRandom(Adversary):
    name = "honest-random"

    def return_state(self):
        return self.key.state

    def guess(self, challenge):
        return int(self.rng.integers(2))


class PrfMeasureAndKeep(Adversary):
    """Keeps one measured preimage t and evaluates round_p(M_x t) itself."""

    name = "measure-and-keep"

    def receive(self, pk, deckey, params):
        super().receive(pk, deckey, params)
        self.t = coset.measure(deckey.state, self.rng)

    def return_state(self):
        return coset.basis_state(self.params.q, self.params.m, self.t)

    def guess(self, challenge):
        xs, ys = challenge
        for x, yv in zip(xs, ys):
            mine = encode_output(_eval_values(self.key.pk, self.t[None, :], x, self.params)[0],
                                 self.params)
            if np.any(mine != yv):
                return 1
        return 0


class PrfDiscard(Adversary):
    name = "discard"

    def return_state(self):
        st = self.key.state
        return junk_state(st, self.key.pk.A, self.key.y, self.params.q)

    def guess(self, challenge):
        return int(self.rng.integers(2))


class PreEvaluate(Adversary):
    """Evaluates on ``j`` distinct inputs before returning the key, then
    answers from that table; a coin flip when no challenge input is in it."""

    name = "pre-evaluate-then-return"
    j = 8

    def receive(self, pk, deckey, params):
        super().receive(pk, deckey, params)
        ell = params.ell
        j = min(self.j, 2**ell)
        picks = self.rng.choice(2**ell, size=j, replace=False)
        self.table = {}
        key = deckey
        for v in picks:
            x = ((int(v) >> np.arange(ell)) & 1).astype(np.int64)
            val, key = eval_quantum(key, x, params, self.rng)
            self.table[x.tobytes()] = val
        self.held = key

    def return_state(self):
        return self.held.state

    def guess(self, challenge):
        xs, ys = challenge
        hit = False
        for x, yv in zip(xs, ys):
            t = self.table.get(np.asarray(x, dtype=np.int64).tobytes())
            if t is not None:
                hit = True
                if np.any(t != yv):
                    return 1
        return 0 if hit else int(self.rng.integers(2))


PRF_ADVERSARIES = {c.name: c for c in (PrfHonestRandom, PrfMeasureAndKeep, PrfDiscard, PreEvaluate)}


def prf_trial(adversary_cls, mu: int, params: SchemeParams, seed: int, index: int,
              noiseless: bool = False) -> TrialRecord:
    rng = stream(seed, "prf/challenger", index)
    adv = adversary_cls(stream(seed, "prf/adversary", index))
    k, qk, msk = prf_gen(params, rng, noiseless=noiseless)
    adv.receive(k.pk, qk, params)
    returned = adv.return_state()
    _check_state(returned, params)
    if not prf_revoke(msk, qk, returned, params, rng):
        return TrialRecord(index, False, -1, None, False)
    b = int(rng.integers(2))
    xs = rng.integers(0, 2, size=(mu, params.ell), dtype=np.int64)
    if b == 0:
        ys = [prf(k, x, params) for x in xs]
    else:
        # uniform over Z_p^n, so the b = 1 branch is not distinguishable by range alone
        ys = [encode_output(rng.integers(0, params.p, size=params.n), params) for _ in xs]
    g = adv.guess((xs, ys))
    if g not in (0, 1):
        raise ExperimentAbort(f"guess {g!r} is not a bit")
    return TrialRecord(index, True, b, int(g), g == b)


def run_prf_experiment(adversary, mu: int, params: SchemeParams, trials: int, seed: int,
                       noiseless: bool = False, threads: int | None = None):
    if isinstance(adversary, str):
        try:
            adversary = PRF_ADVERSARIES[adversary]
        except KeyError:
            raise ParameterError(f"unknown adversary {adversary!r}") from None
    recs = run_trials(lambda i: prf_trial(adversary, mu, params, seed, i, noiseless), trials, threads)
    return summarize(recs)
