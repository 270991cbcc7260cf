"""Executable reduction machinery and numeric lemma checks.

Everything here is exact enumeration at toy sizes: SIS verification, a
Goldreich-Levin style extractor over Z_q, the SIS pipeline driven by a
revocation adversary, and checks of the Gaussian/state inequalities the
security arguments lean on.  Each check yields a :class:`LemmaRecord`.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import coset
from .coset import PureState
from .lattice import ParameterError, centered, log2q, mod, rank_mod, rho


# ------------------------------------------------------------ records

@dataclass(frozen=True)
class LemmaRecord:
    name: str
    lhs: float
    rhs: float
    holds: bool

    def line(self) -> str:
        return f"lemma={self.name} lhs={self.lhs:.12g} rhs={self.rhs:.12g} holds={str(self.holds).lower()}"


# ------------------------------------------------------------ SIS

@dataclass(frozen=True, eq=False)
class SisInstance:
    A: np.ndarray
    beta: float
    q: int


def verify_sis(inst: SisInstance, x) -> bool:
    """Nonzero, in the kernel of A mod q, and ||c(x)|| <= beta."""
    c = centered(np.asarray(x, dtype=np.int64).reshape(-1), inst.q)
    if not np.any(c):
        return False
    if np.any(mod(np.asarray(inst.A) @ c, inst.q)):
        return False
    return float(c @ c) <= inst.beta**2 + 1e-9


# ------------------------------------------------------------ Goldreich-Levin

@dataclass(frozen=True, eq=False)
class PredictorOracle:
    """Guesses <x, r> mod q from (r, aux).  ``fn`` may take a batch of r rows
    when ``batched`` is set, which the extractor then uses."""

    fn: Callable
    agreement: float = 1.0
    batched: bool = False

    def __call__(self, r, aux):
        r = np.asarray(r, dtype=np.int64)
        if r.ndim == 1:
            return int(self.fn(r[None, :], aux)[0]) if self.batched else int(self.fn(r, aux))
        if self.batched:
            return np.asarray(self.fn(r, aux), dtype=np.int64)
        return np.array([int(self.fn(row, aux)) for row in r], dtype=np.int64)


def perfect_oracle(q: int) -> PredictorOracle:
    """aux is the planted vector itself."""
    return PredictorOracle(lambda R, x: mod(R @ np.asarray(x), q), 1.0, batched=True)


def corrupted_oracle(q: int, rate: float, salt: bytes = b"") -> PredictorOracle:
    """Perfect oracle except on a hash-selected ``rate`` fraction of r, where
    it answers a wrong (but fixed) value.  Pure in (r, aux)."""

    def fn(R, x):
        out = mod(R @ np.asarray(x), q)
        for t, r in enumerate(R):
            h = hashlib.blake2b(salt + np.ascontiguousarray(r, "<i8").tobytes(), digest_size=8).digest()
            u = int.from_bytes(h, "little")
            if (u % 10**6) < rate * 10**6:
                out[t] = (out[t] + 1 + (u >> 20) % (q - 1)) % q
        return out

    return PredictorOracle(fn, 1.0 - rate, batched=True)


def gl_extract(oracle: PredictorOracle, aux, m: int, q: int, rng: np.random.Generator,
               votes: int = 200, check=None):
    """Recover x from a predictor of r -> <x, r> by self-correction.

    Coordinate i is the strict-majority value of oracle(r + e_i) - oracle(r)
    over ``votes`` random r.  Returns None if some majority is not strict, or
    if ``check = (A, y)`` is given and A x != y.
    """
    x = np.empty(m, dtype=np.int64)
    for i in range(m):
        R = rng.integers(0, q, size=(votes, m), dtype=np.int64)
        Ri = R.copy()
        Ri[:, i] = (Ri[:, i] + 1) % q
        est = mod(oracle(Ri, aux) - oracle(R, aux), q)
        counts = np.bincount(est, minlength=q)
        best = int(np.argmax(counts))
        if 2 * counts[best] <= votes:
            return None
        x[i] = best
    if check is not None:
        A, y = check
        if np.any(mod(np.asarray(A) @ x, q) != mod(y, q)):
            return None
    return x


# ------------------------------------------------------------ SIS pipeline

class SisAdversary:
    """Receives (A, y, |psi_y>); returns a register plus a predictor and its aux."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def receive(self, A, y, state, q):
        self.A, self.y, self.state, self.q = A, y, state, q

    def returned(self):
        raise NotImplementedError

    def predictor(self):
        raise NotImplementedError


class KeepOnePreimage(SisAdversary):
    """Returns the key untouched; its side information is an independent
    sample x* of |alpha_x|^2, exposed through a perfect predictor."""

    def receive(self, A, y, state, q):
        super().receive(A, y, state, q)
        self.kept = coset.measure(state, self.rng)

    def returned(self):
        return self.state

    def predictor(self):
        return perfect_oracle(self.q), self.kept


class ReturnCollapsed(SisAdversary):
    """Measures, returns the collapsed basis state and predicts the same vector."""

    def receive(self, A, y, state, q):
        super().receive(A, y, state, q)
        self.kept = coset.measure(state, self.rng)

    def returned(self):
        return coset.basis_state(self.q, self.state.m, self.kept)

    def predictor(self):
        return perfect_oracle(self.q), self.kept


def sis_solver(A, adversary: SisAdversary, params, rng: np.random.Generator,
               extractor=None, votes: int = 16):
    """Short kernel vector from two preimages: one measured from the returned
    register, one extracted from the adversary's side information.

    Returns the solution or None (extractor failure, equal preimages, or a
    candidate that does not verify).
    """
    q, sigma = params.q, params.sigma
    A = np.asarray(A, dtype=np.int64)
    m = A.shape[1]
    state, y = coset.gen_gauss(A, sigma, q, rng)
    adversary.receive(A, y, state, q)
    x0 = coset.measure(adversary.returned(), rng)
    oracle, aux = adversary.predictor()
    extractor = extractor or gl_extract
    x1 = extractor(oracle, aux, m, q, rng, votes=votes, check=(A, y))
    if x1 is None:
        return None
    cand = mod(x1 - x0, q)
    inst = SisInstance(A, sigma * math.sqrt(2 * m), q)
    if not verify_sis(inst, cand):
        return None
    return cand


def collision_probability(state: PureState) -> float:
    p = state.probabilities()
    return float(np.sum(p * p))


def sis_success_oracle(A, sigma: float, q: int, extractor_rate: float = 1.0) -> float:
    """sum_y Pr[y] (1 - sum_x |alpha_x|^4) * extractor_rate for a fixed A."""
    ys, probs, _ = coset.syndrome_distribution(A, sigma, q)
    tot = 0.0
    for y, p in zip(ys, probs):
        st = coset.build_coset_state(A, y, sigma, q)
        tot += p * (1 - collision_probability(st))
    return tot * extractor_rate


# ------------------------------------------------------------ distinct pairs

def _gamma_trace(comps, kraus, mask) -> float:
    tot = 0.0
    for w, v in comps:
        for K in kraus:
            W = v @ K.T  # (x, x') amplitude of |x>|x'> after the channel
            tot += w * float(np.sum(np.abs(W[mask]) ** 2))
    return tot


def _distinct_pair_parts(rho_xy, psi, kraus, S):
    psi = np.asarray(psi, dtype=np.complex128)
    dX = psi.shape[0]
    S = sorted(set(int(s) for s in S))
    inS = np.zeros(dX, dtype=bool)
    inS[S] = True
    if np.any(np.abs(psi[~inS]) > 1e-12):
        raise ParameterError("psi must be supported on S")
    psi = psi / np.linalg.norm(psi)
    kraus = [np.asarray(K, dtype=np.complex128) for K in kraus]
    comps = []
    for w, v in rho_xy:
        v = np.asarray(v, dtype=np.complex128)
        comps.append((float(w), v / math.sqrt(np.vdot(v, v).real)))
    dY = comps[0][1].shape[1]
    for _, v in comps:
        if v.shape != (dX, dY):
            raise ParameterError("ensemble component has the wrong shape")
    for K in kraus:
        if K.shape != (dX, dY):
            raise ParameterError("Kraus operator has the wrong shape")
    mask = np.outer(inS, inS) & ~np.eye(dX, dtype=bool)
    # (Pi x I) applied to each component: psi (x) u with u = psi^dagger v
    us = [(w, psi.conj() @ v) for w, v in comps]
    proj = [(w, np.outer(psi, u)) for w, u in us]
    sig = sum(w * np.outer(u, u.conj()) for w, u in us)  # unnormalized sigma
    tr_pi = float(np.trace(sig).real)
    if tr_pi > 1e-15:
        es = sum(K @ (sig / tr_pi) @ K.conj().T for K in kraus)
        tr_s = float(np.sum(np.diag(es).real[inS]))
    else:
        tr_s = 0.0
    amax = float(np.max(np.abs(psi) ** 2))
    rhs = (1 - amax) * tr_pi * tr_s
    return comps, proj, kraus, mask, rhs


def distinct_pair_check(rho_xy, psi, kraus, S, tol: float = 1e-9):
    """Tr[Gamma rho] against (1 - max|alpha|^2) Tr[Pi rho_X] Tr[Pi_S E(sigma)].

    ``rho_xy`` is a list of (weight, dense dX x dY amplitude array); ``psi`` a
    length-dX vector supported on ``S``; ``kraus`` the channel Y -> X as dX x dY
    matrices.  Returns (lhs, rhs, holds).

    The inequality is not unconditional: Gamma and Pi (x) I need not commute,
    and random instances occasionally violate it (see
    :func:`distinct_pair_projected` for the part that always holds).
    """
    comps, _, kraus, mask, rhs = _distinct_pair_parts(rho_xy, psi, kraus, S)
    lhs = _gamma_trace(comps, kraus, mask)
    return lhs, rhs, bool(lhs >= rhs - tol)


def distinct_pair_projected(rho_xy, psi, kraus, S, tol: float = 1e-9):
    """Same right-hand side, but with rho replaced by (Pi x I) rho (Pi x I)."""
    _, proj, kraus, mask, rhs = _distinct_pair_parts(rho_xy, psi, kraus, S)
    lhs = _gamma_trace(proj, kraus, mask)
    return lhs, rhs, bool(lhs >= rhs - tol)


def random_isometry_kraus(d_in: int, d_out: int, env: int, rng: np.random.Generator):
    """Kraus operators of a Haar-ish random channel with ``env`` outputs."""
    Z = rng.normal(size=(d_out * env, d_in)) + 1j * rng.normal(size=(d_out * env, d_in))
    V, _ = np.linalg.qr(Z)
    return [V[k * d_out:(k + 1) * d_out] for k in range(env)]


def random_distinct_pair_instance(rng: np.random.Generator, dX: int = 6, dY: int = 4,
                                  size: int | None = None):
    S = np.sort(rng.choice(dX, size=int(rng.integers(1, dX + 1)), replace=False))
    psi = np.zeros(dX, dtype=np.complex128)
    psi[S] = rng.normal(size=S.size) + 1j * rng.normal(size=S.size)
    k = size or int(rng.integers(1, 17))
    w = rng.random(k)
    w /= w.sum()
    comps = [(wi, rng.normal(size=(dX, dY)) + 1j * rng.normal(size=(dX, dY))) for wi in w]
    # bias one component toward psi (x) something so Tr[Pi rho_X] is not tiny
    comps[0] = (comps[0][0], comps[0][1] + 3 * np.outer(psi, rng.normal(size=dY)))
    kraus = random_isometry_kraus(dY, dX, int(rng.integers(1, 4)), rng)
    return comps, psi, kraus, S


# ------------------------------------------------------------ Gaussian lemmas

def truncated_gaussian_pmf(m: int, sigma: float, q: int, radius: float | None = None):
    """(points, probabilities) of the truncated Gaussian on centered Z_q^m."""
    R = sigma * math.sqrt(m) if radius is None else radius
    pts = coset._ball(m, q, R)
    w = rho(pts, sigma)
    return pts, w / w.sum()


def noise_flooding_tv(m: int, sigma: float, e0, q: int):
    """Exact TV between the truncated Gaussian and its e0-shift (mod q)."""
    e0 = np.asarray(e0, dtype=np.int64).reshape(-1)
    if e0.shape != (m,):
        raise ParameterError("shift has the wrong length")
    pts, p = truncated_gaussian_pmf(m, sigma, q)
    P = np.zeros((q,) * m)
    Q = np.zeros((q,) * m)
    idx = tuple(mod(pts, q).T)
    np.add.at(P, idx, p)
    np.add.at(Q, tuple(mod(pts + e0, q).T), p)
    tv = 0.5 * float(np.abs(P - Q).sum())
    bound = 2 * (1 - math.exp(-2 * math.pi * math.sqrt(m) * float(np.linalg.norm(e0)) / sigma))
    return tv, bound, tv <= bound + 1e-12


def _lattice_points_in_box(A, q, m, half):
    r = int(math.ceil(half))
    vals = np.arange(-r, r + 1, dtype=np.int64)
    grids = np.meshgrid(*([vals] * m), indexing="ij")
    pts = np.stack([g.reshape(-1) for g in grids], axis=1)
    if A is not None:
        pts = pts[np.all(mod(pts @ np.asarray(A).T, q) == 0, axis=1)]
    return pts


def tail_bound(m: int, c: float) -> float:
    return (2 * math.pi * math.e * c * c) ** (m / 2) * math.exp(-math.pi * c * c * m)


def tail_mass_check(A, sigma: float, c: float, m: int | None = None, q: int | None = None, t=None,
                    limit: int = 2_000_000):
    """rho_sigma((L - t) outside radius c sqrt(m) sigma) / rho_sigma(L).

    ``A=None`` means L = Z^m; otherwise L is the q-ary kernel lattice of A.
    Points are enumerated in a box of half-width c sqrt(m) sigma + 10 sigma.
    """
    if A is not None:
        A = np.atleast_2d(np.asarray(A, dtype=np.int64))
        m = A.shape[1]
        if q is None:
            raise ParameterError("q is required with A")
    if m is None:
        raise ParameterError("m is required for Z^m")
    half = c * math.sqrt(m) * sigma + 10 * sigma
    if (2 * math.ceil(half) + 1) ** m > limit:
        raise ParameterError("lattice slice too large to enumerate")
    pts = _lattice_points_in_box(A, q, m, half)
    shift = np.zeros(m) if t is None else np.asarray(t, dtype=float)
    mass = rho(pts, sigma).sum()
    sh = pts - shift
    far = np.sum(sh * sh, axis=1) > (c * math.sqrt(m) * sigma) ** 2
    ratio = float(rho(sh[far], sigma).sum() / mass)
    bound = tail_bound(m, c)
    ok = c < (2 * math.pi) ** -0.5 or ratio <= bound + 1e-15
    return ratio, bound, bool(ok)


def max_amplitude_check(A, y, sigma: float, q: int, omega: float = 1.0, eps: float = 0.1):
    """Largest normalized Gaussian weight in a truncated coset (radius sigma sqrt(m)).

    With ``y=None`` the maximum also runs over every syndrome.  The bound
    2^{-m+1}(1+eps)/(1-eps) is only compared when m >= 2 n log q and
    sigma >= sqrt(log m) * omega; otherwise ``holds`` is reported as True
    and ``precond`` False.  Returns (max, bound, precond, holds).
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.int64))
    n, m = A.shape
    if rank_mod(A, q) < n:
        raise ParameterError("max-amplitude check needs a full-rank A")
    R = sigma * math.sqrt(m)
    ball = coset._ball(m, q, R)
    syn = mod(ball @ A.T, q)
    w = rho(ball, sigma)
    if y is None:
        _, inv = np.unique(syn, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        tot = np.bincount(inv, weights=w)
        mx = float(np.max(w / tot[inv]))
    else:
        hit = np.all(syn == mod(np.asarray(y).reshape(-1), q)[None, :], axis=1)
        if not np.any(hit):
            raise coset.EmptyCosetError("coset is empty within the radius")
        mx = float(w[hit].max() / w[hit].sum())
    bound = 2.0 ** (-m + 1) * (1 + eps) / (1 - eps)
    precond = m >= 2 * n * math.log2(q) and sigma >= math.sqrt(math.log2(m)) * omega if m > 1 else False
    holds = (mx <= bound) if precond else True
    return mx, bound, bool(precond), bool(holds)


# ------------------------------------------------------------ hybrids

def hybrid_advantage(eps) -> float:
    return float(sum(eps))


def synthetic_hybrid_game(success_probs, trials: int, rng: np.random.Generator):
    """Measure every hybrid of a Bernoulli hybrid chain.

    Returns (per-hop measured advantages, end-to-end measured advantage of
    the first hybrid over 1/2, its standard error).
    """
    ps = [float(p) for p in success_probs]
    hats = [rng.binomial(trials, p) / trials for p in ps]
    hops = [hats[i] - hats[i + 1] for i in range(len(ps) - 1)] + [hats[-1] - 0.5]
    direct = rng.binomial(trials, ps[0]) / trials - 0.5
    se = math.sqrt(sum(p * (1 - p) for p in ps) / trials + ps[0] * (1 - ps[0]) / trials)
    return hops, direct, se


# ------------------------------------------------------------ suite

def lemma_suite(params, rng: np.random.Generator, instances: int = 100) -> list[LemmaRecord]:
    """Every check over a small sweep; ``params`` supplies q and sigma for the Gaussian parts."""
    from .lattice import uniform

    recs: list[LemmaRecord] = []
    for _ in range(instances):
        inst = random_distinct_pair_instance(rng)
        lhs, rhs, ok = distinct_pair_check(*inst)
        recs.append(LemmaRecord("distinct-pair", lhs, rhs, ok))
        lhs, rhs, ok = distinct_pair_projected(*inst)
        recs.append(LemmaRecord("distinct-pair-projected", lhs, rhs, ok))
    q, sigma = params.q, params.sigma
    for m in (1, 2):
        for shift in range(0, 4):
            e0 = np.zeros(m, dtype=np.int64)
            e0[0] = shift
            tv, b, ok = noise_flooding_tv(m, sigma, e0, q)
            recs.append(LemmaRecord(f"noise-flooding[m={m},e0={shift}]", tv, b, ok))
    A = uniform((1, 3), q, rng)
    for m in (1, 2, 3):
        for c in (0.5, 1.0, 1.5):
            r, b, ok = tail_mass_check(None, sigma, c, m=m)
            recs.append(LemmaRecord(f"tail-mass[Z^{m},c={c}]", r, b, ok))
    for c in (0.5, 1.0, 1.5):
        r, b, ok = tail_mass_check(A[:, :3], sigma, c, q=q)
        recs.append(LemmaRecord(f"tail-mass[kernel,c={c}]", r, b, ok))
    n, m = params.n, params.m
    if q**(n * m) <= 10**5:
        for flat in np.ndindex(*(q,) * (n * m)):
            Am = np.array(flat, dtype=np.int64).reshape(n, m)
            if rank_mod(Am, q) < n:
                continue
            mx, b, pre, ok = max_amplitude_check(Am, None, params.sigma, q)
            tag = "on" if pre else "off"
            recs.append(LemmaRecord(f"max-amplitude[A={','.join(map(str, flat))};precond={tag}]",
                                    mx, b, ok))
    return recs
