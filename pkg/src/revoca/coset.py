"""Exact sparse simulation of Gaussian coset states over Z_q^m.

A state is a sorted array of basis vectors (canonical reps) with matching
complex amplitudes.  Basis vectors are matched between states through their
row bytes.  Mixed states are ensembles of ``(weight, PureState)``.
"""
from __future__ import annotations

import enum
import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .lattice import (
    ParameterError, ResourceError, TrapdoorPair, centered, invert_many, kernel_basis,
    mod, rank_mod, rho, solve_mod,
)

PRUNE = 1e-15
ENUM_BUDGET = 10**6
DENSE_LIMIT = 1 << 22


class EmptyCosetError(ValueError):
    """No coset vector satisfies the constraints."""


class DegradedFidelityWarning(UserWarning):
    """Simulated inversion failed on part of the support."""

    def __init__(self, distance: float, failed_weight: float):
        super().__init__(f"uncompute was lossy: failed weight {failed_weight:.3e}, "
                         f"trace distance {distance:.3e}")
        self.distance = distance
        self.failed_weight = failed_weight


class Verdict(enum.Enum):
    VALID = "Valid"
    INVALID = "Invalid"

    def __bool__(self):
        return self is Verdict.VALID


def _sort_rows(vecs: np.ndarray) -> np.ndarray:
    if vecs.shape[0] == 0:
        return np.arange(0)
    return np.lexsort(vecs.T[::-1])


def row_keys(vecs: np.ndarray) -> list[bytes]:
    v = np.ascontiguousarray(vecs, dtype="<i8")
    return [r.tobytes() for r in v]


@dataclass(frozen=True, eq=False)
class PureState:
    q: int
    m: int
    vecs: np.ndarray  # (K, m) canonical reps, lexicographically sorted, unique
    amps: np.ndarray  # (K,) complex

    @classmethod
    def build(cls, q: int, m: int, vecs, amps, normalize: bool = True) -> "PureState":
        """Merge duplicates, prune tiny amplitudes, sort and (optionally) normalize."""
        vecs = mod(np.asarray(vecs, dtype=np.int64).reshape(-1, m), q)
        amps = np.asarray(amps, dtype=np.complex128).reshape(-1)
        order = _sort_rows(vecs)
        vecs, amps = vecs[order], amps[order]
        if vecs.shape[0] > 1:
            new = np.any(vecs[1:] != vecs[:-1], axis=1)
            starts = np.concatenate([[0], np.nonzero(new)[0] + 1])
            amps = np.add.reduceat(amps, starts)
            vecs = vecs[starts]
        keep = np.abs(amps) >= PRUNE
        vecs, amps = vecs[keep], amps[keep]
        if normalize:
            nrm = np.linalg.norm(amps)
            if nrm == 0:
                raise ValueError("zero state")
            amps = amps / nrm
        return cls(q, m, vecs, amps)

    @property
    def dim_spec(self) -> tuple[int, int]:
        return (self.q, self.m)

    def __len__(self):
        return self.vecs.shape[0]

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def amplitude(self, x) -> complex:
        key = mod(x, self.q).astype("<i8").tobytes()
        for k, a in zip(row_keys(self.vecs), self.amps):
            if k == key:
                return complex(a)
        return 0j

    def as_dict(self) -> dict[bytes, complex]:
        return dict(zip(row_keys(self.vecs), self.amps))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))


@dataclass(frozen=True, eq=False)
class CosetState(PureState):
    """Gaussian coset state with its provenance (A, y, sigma, radius)."""

    A: np.ndarray = None
    y: np.ndarray = None
    sigma: float = 0.0
    radius: float = math.inf

    def plain(self) -> PureState:
        return PureState(self.q, self.m, self.vecs, self.amps)


@dataclass(frozen=True)
class Ensemble:
    """Mixed state as a weighted list of pure components (weights sum to 1)."""

    components: tuple

    @classmethod
    def of(cls, pairs) -> "Ensemble":
        pairs = [(float(w), s) for w, s in pairs if w > 0]
        tot = sum(w for w, _ in pairs)
        return cls(tuple((w / tot, s) for w, s in pairs))

    @property
    def dim_spec(self):
        return self.components[0][1].dim_spec


def components(state) -> list[tuple[float, PureState]]:
    if isinstance(state, Ensemble):
        return list(state.components)
    return [(1.0, state)]


def basis_state(q: int, m: int, x) -> PureState:
    return PureState.build(q, m, np.asarray(x)[None, :], [1.0])


def inner(a: PureState, b: PureState) -> complex:
    """<a|b>."""
    if a.dim_spec != b.dim_spec:
        raise ParameterError("dimension mismatch")
    da = a.as_dict()
    tot = 0j
    for k, amp in zip(row_keys(b.vecs), b.amps):
        if k in da:
            tot += np.conj(da[k]) * amp
    return complex(tot)


def fidelity(a, b: PureState) -> float:
    """<b| rho_a |b> for a pure or mixed ``a``."""
    return float(sum(w * abs(inner(b, s)) ** 2 for w, s in components(a)))


def trace_distance(a, b) -> float:
    """Trace distance.  Closed form for two pure states, exact spectral
    computation on the joint support when either side is an ensemble."""
    if not isinstance(a, Ensemble) and not isinstance(b, Ensemble):
        return math.sqrt(max(0.0, 1.0 - abs(inner(a, b)) ** 2))
    ca, cb = components(a), components(b)
    allv = np.vstack([s.vecs for _, s in ca + cb])
    allv = np.unique(allv, axis=0)
    lookup = {k: i for i, k in enumerate(row_keys(allv))}
    cols, signs = [], []
    for sgn, comps in ((1.0, ca), (-1.0, cb)):
        for w, s in comps:
            v = np.zeros(len(lookup), dtype=np.complex128)
            v[[lookup[k] for k in row_keys(s.vecs)]] = s.amps
            cols.append(math.sqrt(w) * v)
            signs.append(sgn)
    X = np.array(cols).T
    Qm, Rm = np.linalg.qr(X)
    M = Rm @ np.diag(signs) @ Rm.conj().T
    lam = np.linalg.eigvalsh((M + M.conj().T) / 2)
    return float(0.5 * np.sum(np.abs(lam)))


def measure(state, rng: np.random.Generator) -> np.ndarray:
    """Computational-basis measurement outcome."""
    comps = components(state)
    if len(comps) > 1:
        w = np.array([c[0] for c in comps])
        state = comps[rng.choice(len(comps), p=w / w.sum())][1]
    else:
        state = comps[0][1]
    p = state.probabilities()
    return state.vecs[rng.choice(len(p), p=p / p.sum())].copy()


def dump_state(state: PureState) -> str:
    """Text lines ``x_1,...,x_m : re im`` sorted by basis vector."""
    lines = []
    for v, a in zip(state.vecs, state.amps):
        lines.append(",".join(str(int(t)) for t in v) + f" : {a.real:.17g} {a.imag:.17g}")
    return "\n".join(lines) + ("\n" if lines else "")


# ------------------------------------------------------------ dense helpers

def _powers(q: int, m: int) -> np.ndarray:
    return q ** np.arange(m - 1, -1, -1, dtype=np.int64)


def to_dense(state: PureState) -> np.ndarray:
    q, m = state.dim_spec
    if q**m > DENSE_LIMIT:
        raise ResourceError(f"dense vector of size {q}^{m} exceeds the limit")
    v = np.zeros(q**m, dtype=np.complex128)
    v[state.vecs @ _powers(q, m)] = state.amps
    return v


def from_dense(q: int, m: int, v: np.ndarray, normalize: bool = True) -> PureState:
    idx = np.nonzero(np.abs(v) >= PRUNE)[0]
    vecs = np.stack(np.unravel_index(idx, (q,) * m), axis=1).astype(np.int64)
    return PureState.build(q, m, vecs, v[idx], normalize=normalize)


def qft(state: PureState) -> PureState:
    """FT|x> = q^{-m/2} sum_z w^{<x,z>} |z>, w = exp(2 pi i / q), on every qudit."""
    q, m = state.dim_spec
    d = to_dense(state).reshape((q,) * m)
    return from_dense(q, m, np.fft.ifftn(d, norm="ortho").reshape(-1))


def qft_inv(state: PureState) -> PureState:
    q, m = state.dim_spec
    d = to_dense(state).reshape((q,) * m)
    return from_dense(q, m, np.fft.fftn(d, norm="ortho").reshape(-1))


# ------------------------------------------------------------ cosets

def _box(m: int, q: int, radius: float) -> np.ndarray:
    lo, hi = -((q - 1) // 2), q // 2
    r = int(math.floor(radius)) if math.isfinite(radius) else hi - lo
    vals = np.arange(max(lo, -r), min(hi, r) + 1, dtype=np.int64)
    if vals.size**m > ENUM_BUDGET:
        raise ResourceError(f"ball enumeration of {vals.size}^{m} points exceeds budget")
    grids = np.meshgrid(*([vals] * m), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def _ball(m: int, q: int, radius: float) -> np.ndarray:
    """Centered vectors of Z_q^m with norm at most ``radius``."""
    pts = _box(m, q, radius)
    if math.isfinite(radius):
        pts = pts[np.sum(pts * pts, axis=1) <= radius * radius + 1e-9]
    return pts


def _box_size(m: int, q: int, radius: float) -> int:
    if not math.isfinite(radius):
        return q**m
    return min(2 * int(math.floor(radius)) + 1, q) ** m


def enumerate_coset(A, y, q: int, radius: float = math.inf, budget: int = ENUM_BUDGET) -> np.ndarray:
    """All x in Z_q^m with A x = y and ||c(x)|| <= radius, lexicographically sorted.

    Walks either the kernel lattice or the ball around 0, whichever is smaller.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.int64))
    m = A.shape[1]
    y = mod(np.asarray(y).reshape(-1), q)
    x0 = solve_mod(A, y, q)
    if x0 is None:
        return np.zeros((0, m), dtype=np.int64)
    d = m - rank_mod(A, q)
    via_kernel = q**d
    via_ball = _box_size(m, q, radius)
    if min(via_kernel, via_ball) > budget:
        raise ResourceError(f"coset enumeration needs min({via_kernel}, {via_ball}) > {budget} points")
    if via_kernel <= via_ball:
        basis = np.array(kernel_basis(A, q), dtype=np.int64).reshape(d, m)
        coeff = np.array(list(itertools.product(range(q), repeat=d)), dtype=np.int64).reshape(q**d, d)
        pts = mod(x0[None, :] + coeff @ basis, q)
        if math.isfinite(radius):
            c = centered(pts, q)
            pts = pts[np.sum(c * c, axis=1) <= radius * radius + 1e-9]
    else:
        ball = _ball(m, q, radius)
        hit = np.all(mod(ball @ A.T, q) == y[None, :], axis=1)
        pts = mod(ball[hit], q)
    return pts[_sort_rows(pts)]


def build_coset_state(A, y, sigma: float, q: int, radius: float | None = None) -> CosetState:
    """Normalized sum over the truncated coset of rho_sigma(x)|x>.  Default radius sigma*sqrt(m/2)."""
    A = np.atleast_2d(np.asarray(A, dtype=np.int64))
    m = A.shape[1]
    if radius is None:
        radius = sigma * math.sqrt(m / 2)
    pts = enumerate_coset(A, y, q, radius)
    return _coset_from_points(A, y, sigma, q, radius, pts)


def _coset_from_points(A, y, sigma, q, radius, pts) -> CosetState:
    m = A.shape[1]
    if pts.shape[0] == 0:
        raise EmptyCosetError("coset is empty within the radius")
    w = rho(centered(pts, q), sigma)
    if not np.any(w >= PRUNE):
        raise EmptyCosetError("all coset amplitudes underflow")
    base = PureState.build(q, m, pts, w)
    return CosetState(q, m, base.vecs, base.amps, A=A, y=mod(np.asarray(y).reshape(-1), q),
                      sigma=float(sigma), radius=float(radius))


def syndrome_distribution(A, sigma: float, q: int, radius: float | None = None):
    """Exact law of the measured syndrome in Gaussian-state preparation.

    Returns ``(ys, probs, ball)``: distinct syndromes, probabilities
    proportional to sum_{A x = y} rho_sigma(x)^2 over the ball, and the ball.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.int64))
    m = A.shape[1]
    if radius is None:
        radius = sigma * math.sqrt(m / 2)
    ball = _ball(m, q, radius)
    syn = mod(ball @ A.T, q)
    ys, inv = np.unique(syn, axis=0, return_inverse=True)
    w = rho(ball, sigma) ** 2
    probs = np.bincount(inv.reshape(-1), weights=w, minlength=ys.shape[0])
    return ys, probs / probs.sum(), ball


def gen_gauss(A, sigma: float, q: int, rng: np.random.Generator,
              radius: float | None = None) -> tuple[CosetState, np.ndarray]:
    """Prepare the Gaussian superposition, measure the syndrome y, return (|psi_y>, y)."""
    A = np.atleast_2d(np.asarray(A, dtype=np.int64))
    m = A.shape[1]
    if radius is None:
        radius = sigma * math.sqrt(m / 2)
    ys, probs, ball = syndrome_distribution(A, sigma, q, radius)
    y = ys[rng.choice(len(probs), p=probs)]
    hit = np.all(mod(ball @ A.T, q) == y[None, :], axis=1)
    pts = mod(ball[hit], q)
    return _coset_from_points(A, y, sigma, q, radius, pts[_sort_rows(pts)]), y


def dual_state(A, y, sigma: float, q: int) -> PureState:
    """Normalized sum_s sum_e rho_{q/sigma}(e) w^{<s,y>} |s^T A + e^T> over all s, e.

    The phase sign matches ``qft``: qft(|psi_y>) is close to this state.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.int64))
    n, m = A.shape
    if q ** (n + m) > ENUM_BUDGET * 16:
        raise ResourceError("dual state too large to build")
    y = mod(np.asarray(y).reshape(-1), q)
    S = np.array(list(itertools.product(range(q), repeat=n)), dtype=np.int64).reshape(-1, n)
    Ec = centered(np.array(list(itertools.product(range(q), repeat=m)), dtype=np.int64), q)
    phase = np.exp(2j * np.pi * (mod(S @ y, q) / q))
    amp_e = rho(Ec, q / sigma)
    v = np.zeros(q**m, dtype=np.complex128)
    pw = _powers(q, m)
    SA = S @ A
    for i in range(S.shape[0]):
        idx = mod(SA[i][None, :] + Ec, q) @ pw
        np.add.at(v, idx, phase[i] * amp_e)
    return from_dense(q, m, v)


def qsamp_gauss(pair: TrapdoorPair, y, sigma: float, *, noise_radius: float | None = None,
                decode_radius: float | None = None, reference_radius: float | None = None,
                warn_threshold: float = 1e-9):
    """Simulate preparing |psi_y> from the dual side with the trapdoor.

    Builds sum_{s,e} rho_{q/sigma}(e) w^{<s,y>} |s>|e>|s^T A + e^T>, uncomputes
    (s, e) by inverting the third register, drops the first two registers and
    applies the inverse QFT.  Where inversion fails or errs the leftover
    registers stay entangled, so the result is an ensemble in general.

    Returns ``(state, distance)`` with ``distance`` the trace distance to
    ``build_coset_state(A, y, sigma)``.
    """
    A, q = pair.A, pair.q
    n, m = A.shape
    y = mod(np.asarray(y).reshape(-1), q)
    if solve_mod(A, y, q) is None:
        raise EmptyCosetError("y is not in the column span of A")
    w = q / sigma
    if noise_radius is None:
        # every e whose amplitude survives pruning
        noise_radius = w * math.sqrt(math.log(1 / PRUNE) / math.pi)
    E = _ball(m, q, noise_radius)
    amp_e = rho(E, w)
    keep = amp_e >= PRUNE
    E, amp_e = E[keep], amp_e[keep]
    S = np.array(list(itertools.product(range(q), repeat=n)), dtype=np.int64).reshape(-1, n)
    if S.shape[0] * E.shape[0] > ENUM_BUDGET * 16:
        raise ResourceError("dual-side superposition exceeds budget")
    phase = np.exp(2j * np.pi * (mod(S @ y, q) / q))
    # all (s, e) terms
    si = np.repeat(np.arange(S.shape[0]), E.shape[0])
    ei = np.tile(np.arange(E.shape[0]), S.shape[0])
    B = mod(S[si] @ A + E[ei], q)
    amp = phase[si] * amp_e[ei]
    ub, binv = np.unique(B, axis=0, return_inverse=True)
    binv = binv.reshape(-1)
    Sd, Ed, ok = invert_many(pair, ub, decode_radius)
    ok_t = ok[binv]
    # leftover (s - s', e - e') on success, untouched (s, e) on failure
    ls = np.where(ok_t[:, None], mod(S[si] - Sd[binv], q), S[si])
    le = np.where(ok_t[:, None], mod(E[ei] - centered(Ed[binv], q), q), mod(E[ei], q))
    left = np.hstack([ls, le])
    total = float(np.sum(np.abs(amp) ** 2))
    zero = ~np.any(left != 0, axis=1)
    failed_weight = float(np.sum(np.abs(amp[~zero]) ** 2)) / total
    branches = []
    uleft, linv = np.unique(left, axis=0, return_inverse=True)
    linv = linv.reshape(-1)
    for j in range(uleft.shape[0]):
        sel = linv == j
        st = PureState.build(q, m, B[sel], amp[sel], normalize=False)
        wgt = float(np.sum(np.abs(st.amps) ** 2))
        if len(st) == 0 or wgt / total < PRUNE:
            continue
        st = qft_inv(PureState(q, m, st.vecs, st.amps / math.sqrt(wgt)))
        branches.append((wgt / total, st))
    if len(branches) == 1:
        out = branches[0][1]
    else:
        out = Ensemble.of(branches)
    ref = build_coset_state(A, y, sigma, q, reference_radius)
    dist = trace_distance(out, ref.plain())
    if failed_weight > warn_threshold:
        warnings.warn(DegradedFidelityWarning(dist, failed_weight), stacklevel=2)
    return out, dist


# ------------------------------------------------------------ measurements

def revoke_project(state, reference: PureState, rng: np.random.Generator):
    """Measure {|ref><ref|, I - |ref><ref|}; returns (Verdict, post-state)."""
    comps = components(state)
    if comps[0][1].dim_spec != reference.dim_spec:
        raise ParameterError("dimension mismatch between state and reference")
    if len(comps) > 1:
        w = np.array([c[0] for c in comps])
        state = comps[rng.choice(len(comps), p=w / w.sum())][1]
    else:
        state = comps[0][1]
    ov = inner(reference, state)
    p = min(1.0, abs(ov) ** 2)
    if rng.random() < p:
        ph = ov / abs(ov)
        return Verdict.VALID, PureState(reference.q, reference.m, reference.vecs, reference.amps * ph)
    q, m = state.dim_spec
    vecs = np.vstack([state.vecs, reference.vecs])
    amps = np.concatenate([state.amps, -ov * reference.amps])
    try:
        post = PureState.build(q, m, vecs, amps)
    except ValueError:
        post = state
    return Verdict.INVALID, post


def weak_revoke(state, A, y, q: int, radius: float, rng: np.random.Generator):
    """Measure in the computational basis; return x0 if it is a short coset vector, else None."""
    x0 = measure(state, rng)
    A = np.atleast_2d(np.asarray(A, dtype=np.int64))
    c = centered(x0, q)
    if np.all(mod(A @ x0, q) == mod(np.asarray(y).reshape(-1), q)) and float(c @ c) <= radius**2 + 1e-9:
        return x0
    return None


def linear_outcomes(state: PureState, c0, c1, q: int) -> np.ndarray:
    """v(x) = c1 - <c0, x> mod q for every support vector x."""
    return mod(int(c1) - state.vecs @ mod(c0, q), q)


def decrypt_distribution(state: PureState, ct) -> np.ndarray:
    """Pr[v] for v = c1 - <c0, x>, as a length-q array."""
    q = state.q
    v = linear_outcomes(state, ct.c0, ct.c1, q)
    return np.bincount(v, weights=state.probabilities(), minlength=q)


def condition(state: PureState, mask: np.ndarray) -> PureState:
    """Renormalized projection onto the support vectors selected by ``mask``."""
    return PureState.build(state.q, state.m, state.vecs[mask], state.amps[mask])
