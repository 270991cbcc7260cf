"""Modular linear algebra, discrete Gaussians, gadget matrices and trapdoors.

Matrices and vectors over Z_q are plain ``int64`` numpy arrays holding
canonical representatives in ``[0, q)``.  The modulus travels alongside as an
explicit argument.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

C_T = 4.0  # declared trapdoor decoding constant
EXHAUSTIVE_DECODE_LIMIT = 1 << 14  # q**n at or below this: decode by full search


class ParameterError(ValueError):
    """Invalid or inconsistent parameters."""


class ResourceError(RuntimeError):
    """A simulation would exceed its enumeration budget."""


@lru_cache(maxsize=None)
def is_prime(q: int) -> bool:
    from sympy import isprime

    return bool(isprime(q))


def log2q(q: int) -> int:
    """Bits per Z_q entry, i.e. ceil(log2 q)."""
    return (q - 1).bit_length()


@dataclass(frozen=True)
class SchemeParams:
    """Public parameters shared by every scheme.

    ``ell`` and ``N_gadget`` are derived, so they can never drift out of sync
    with ``(n, m, q)``.
    """

    n: int
    m: int
    q: int
    sigma: float
    alpha: float = 0.0
    beta: float = 0.0
    p: int = 2
    L: int = 3
    strict_mode: bool = False

    def __post_init__(self):
        for name in ("n", "m", "q", "p", "L"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise ParameterError(f"{name} must be an integer, got {v!r}")
        if self.n < 1 or self.m < 1:
            raise ParameterError("n and m must be positive")
        if self.q < 2 or not is_prime(self.q):
            raise ParameterError(f"q={self.q} is not prime")
        if not (2 <= self.p < self.q):
            raise ParameterError(f"need 2 <= p < q, got p={self.p}, q={self.q}")
        if not self.sigma > 0:
            raise ParameterError("sigma must be positive")
        # zero noise ratios are the noiseless debug mode
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (0.0 <= v < 1.0):
                raise ParameterError(f"{name} must lie in [0, 1), got {v}")
        if self.L < 0:
            raise ParameterError("L must be nonnegative")
        if self.strict_mode:
            if self.m < 2 * self.n * self.k:
                raise ParameterError(
                    f"strict mode needs m >= 2 n ceil(log q) = {2 * self.n * self.k}")
            lo, hi = math.sqrt(2 * self.m), self.q / math.sqrt(2 * self.m)
            if not (lo < self.sigma < hi):
                raise ParameterError(f"strict mode needs {lo:.3f} < sigma < {hi:.3f}")
            if self.alpha == 0.0 or self.beta == 0.0:
                raise ParameterError("strict mode forbids noiseless alpha/beta")

    @property
    def k(self) -> int:
        return log2q(self.q)

    @property
    def ell(self) -> int:
        return self.n * self.m * self.k

    @property
    def N_gadget(self) -> int:
        return (self.m + 1) * self.k

    @property
    def coset_radius(self) -> float:
        return self.sigma * math.sqrt(self.m / 2)

    def replace(self, **kw) -> "SchemeParams":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return SchemeParams(**d)


# ---------------------------------------------------------------- Z_q basics

def mod(a, q: int) -> np.ndarray:
    return np.mod(np.asarray(a, dtype=np.int64), q)


def centered(a, q: int) -> np.ndarray:
    """Representatives in (-q/2, q/2]."""
    r = np.mod(np.asarray(a, dtype=np.int64), q)
    return np.where(r > q // 2, r - q, r)


def matmul_mod(a, b, q: int) -> np.ndarray:
    """Exact ``a @ b mod q`` for nonnegative integer inputs.

    Uses a float64 BLAS product whenever every partial sum provably stays
    below 2**53, otherwise falls back to Python-int object arithmetic.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    amax = int(np.abs(a).max(initial=0))
    bmax = int(np.abs(b).max(initial=0))
    inner = a.shape[-1] if a.ndim else 1
    bound = amax * bmax * max(inner, 1)
    if bound < 2**53:
        out = a.astype(np.float64) @ b.astype(np.float64)
        return np.mod(out.astype(np.int64), q)
    if bound < 2**62:
        return np.mod(a @ b, q)
    out = a.astype(object) @ b.astype(object)
    return np.mod(out, q).astype(np.int64)


def gaussian_mass(x, sigma: float, q: int | None = None) -> float:
    """rho_sigma(x) = exp(-pi ||x||^2 / sigma^2), on centered reps if ``q`` is given."""
    if not sigma > 0:
        raise ParameterError("sigma must be positive")
    x = np.asarray(x, dtype=np.int64)
    if q is not None:
        x = centered(x, q)
    return float(np.exp(-math.pi * float(np.dot(x, x)) / sigma**2))


def rho(x: np.ndarray, sigma: float) -> np.ndarray:
    """Vectorised Gaussian measure along the last axis (integer input)."""
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-math.pi * np.sum(x * x, axis=-1) / sigma**2)


def sample_discrete_gaussian(m: int, sigma: float, q: int, rng: np.random.Generator,
                             radius: float | None = None, size: int | None = None) -> np.ndarray:
    """Truncated discrete Gaussian over Z_q^m.

    Coordinates come from an exact CDF table over ``|z| <= ceil(radius)``; a
    whole vector is redrawn until ``||x|| <= radius`` (default ``sigma*sqrt(m)``).
    ``sigma == 0`` is the degenerate width and always yields zeros.  With
    ``size`` the result has shape ``(size, m)``.
    """
    shape = (m,) if size is None else (size, m)
    if sigma == 0:
        return np.zeros(shape, dtype=np.int64)
    if not sigma > 0:
        raise ParameterError("sigma must be nonnegative")
    R = sigma * math.sqrt(m) if radius is None else float(radius)
    cut = int(math.ceil(R))
    lo, hi = -((q - 1) // 2), q // 2
    support = np.arange(max(-cut, lo), min(cut, hi) + 1, dtype=np.int64)
    w = rho(support[:, None], sigma)
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    rows = 1 if size is None else size
    out = np.empty((rows, m), dtype=np.int64)
    todo = np.arange(rows)
    R2 = R * R + 1e-9
    while todo.size:
        u = rng.random((todo.size, m))
        draw = support[np.minimum(np.searchsorted(cdf, u, side="right"), support.size - 1)]
        ok = np.sum(draw * draw, axis=1) <= R2
        out[todo[ok]] = draw[ok]
        todo = todo[~ok]
    out = np.mod(out, q)
    return out[0] if size is None else out


def uniform(shape, q: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, q, size=shape, dtype=np.int64)


def round_to_p(v, q: int, p: int) -> np.ndarray:
    """Componentwise round((p/q) v) mod p, ties rounded up."""
    if not 2 <= p < q:
        raise ParameterError("need 2 <= p < q")
    v = np.mod(np.asarray(v, dtype=np.int64), q)
    return np.mod((p * v + q // 2) // q, p)


# ------------------------------------------------------------ gadget, bits

def gadget_matrix(rows: int, q: int) -> np.ndarray:
    """G = I_rows (x) (1, 2, ..., 2^{k-1}); column ``i*k + j`` is 2^j e_i."""
    k = log2q(q)
    g = np.mod(1 << np.arange(k, dtype=np.int64), q)
    return np.kron(np.eye(rows, dtype=np.int64), g[None, :])


def gadget_apply(a, q: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    k = log2q(q)
    if a.shape[0] % k:
        raise ParameterError(f"length {a.shape[0]} is not a multiple of {k}")
    blocks = a.reshape((a.shape[0] // k, k) + a.shape[1:])
    w = (1 << np.arange(k, dtype=np.int64)).reshape((1, k) + (1,) * (a.ndim - 1))
    return np.mod(np.sum(blocks * w, axis=1), q)


def gadget_inv(M, q: int, rows: int | None = None) -> np.ndarray:
    """Little-endian bit decomposition of every entry; row ``i*k + j`` holds bit j of row i."""
    M = np.mod(np.asarray(M, dtype=np.int64), q)
    if rows is not None and M.shape[0] != rows:
        raise ParameterError(f"expected {rows} rows, got {M.shape[0]}")
    k = log2q(q)
    bits = (M[:, None, ...] >> np.arange(k).reshape((1, k) + (1,) * (M.ndim - 1))) & 1
    return bits.reshape((M.shape[0] * k,) + M.shape[1:])


def bindecomp(M, q: int) -> np.ndarray:
    """Row-major entries, little-endian bits, ceil(log2 q) bits each."""
    M = np.mod(np.asarray(M, dtype=np.int64), q)
    k = log2q(q)
    return ((M.reshape(-1)[:, None] >> np.arange(k)) & 1).reshape(-1).astype(np.int8)


def bindecomp_inv(bits, n: int, m: int, q: int) -> np.ndarray:
    k = log2q(q)
    b = np.asarray(bits, dtype=np.int64).reshape(n * m, k)
    return np.mod(b @ (1 << np.arange(k, dtype=np.int64)), q).reshape(n, m)


# ------------------------------------------------------ Gaussian elimination

def rref(A, q: int) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over the field Z_q and the pivot columns."""
    R = np.mod(np.array(A, dtype=np.int64), q)
    rows, cols = R.shape
    piv = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        nz = np.nonzero(R[r:, c])[0]
        if nz.size == 0:
            continue
        i = r + nz[0]
        R[[r, i]] = R[[i, r]]
        R[r] = np.mod(R[r] * pow(int(R[r, c]), -1, q), q)
        others = np.nonzero(R[:, c])[0]
        others = others[others != r]
        if others.size:
            R[others] = np.mod(R[others] - np.outer(R[others, c], R[r]), q)
        piv.append(c)
        r += 1
    return R, piv


def rank_mod(A, q: int) -> int:
    return len(rref(A, q)[1])


def kernel_basis(A, q: int) -> list[np.ndarray]:
    """Basis of {x : A x = 0 mod q}; has m - rank(A) vectors."""
    A = np.atleast_2d(np.asarray(A, dtype=np.int64))
    R, piv = rref(A, q)
    m = A.shape[1]
    basis = []
    for f in (c for c in range(m) if c not in piv):
        v = np.zeros(m, dtype=np.int64)
        v[f] = 1
        for r, pc in enumerate(piv):
            v[pc] = (-R[r, f]) % q
        basis.append(v)
    return basis


def solve_mod(A, y, q: int) -> np.ndarray | None:
    """Some x with A x = y mod q, or None when y is outside the column span."""
    A = np.atleast_2d(np.asarray(A, dtype=np.int64))
    y = np.mod(np.asarray(y, dtype=np.int64).reshape(-1), q)
    R, piv = rref(np.hstack([A, y[:, None]]), q)
    m = A.shape[1]
    if m in piv:
        return None
    x = np.zeros(m, dtype=np.int64)
    for r, pc in enumerate(piv):
        x[pc] = R[r, m]
    return x


# ---------------------------------------------------------------- trapdoors

@dataclass(frozen=True, eq=False)
class TrapdoorPair:
    """``A`` plus what is needed to invert LWE samples for it.

    kind ``"gadget"``: A = [Abar | G_n - Abar R], trapdoor R with A [R; I] = G_n.
    kind ``"enumeration"``: uniform A, inverted by exhaustive search over s
    (only sensible at toy sizes where a gadget block does not fit).
    """

    A: np.ndarray
    q: int
    kind: str
    R: np.ndarray | None = field(default=None)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[1]

    @property
    def decode_radius(self) -> float:
        """l2 radius q / (C_T sqrt(n ceil(log q))) inside which inversion is promised."""
        return self.q / (C_T * math.sqrt(self.n * log2q(self.q)))

    @property
    def accept_radius(self) -> float:
        """Largest error norm an inversion will report as success."""
        return self.q / (C_T * math.sqrt(2))


def _all_vectors(n: int, q: int) -> np.ndarray:
    return np.array(list(itertools.product(range(q), repeat=n)), dtype=np.int64).reshape(-1, n)


def min_distance(A, q: int) -> float:
    """lambda_1 of the q-ary lattice {s^T A} + q Z^m, by brute force over s."""
    A = np.asarray(A, dtype=np.int64)
    S = _all_vectors(A.shape[0], q)[1:]
    d = np.sqrt(np.min(np.sum(centered(S @ A, q) ** 2, axis=1), initial=float(q * q)))
    return float(min(d, q))


def gen_trap(n: int, m: int, q: int, rng: np.random.Generator, kind: str = "auto") -> TrapdoorPair:
    """Sample A close to uniform together with an inversion trapdoor.

    The gadget construction needs m >= n ceil(log q) + n.  ``kind="auto"``
    falls back to the enumeration trapdoor when that does not fit.
    """
    k = log2q(q)
    nbar = m - n * k
    if kind == "auto":
        kind = "gadget" if nbar >= n else "enumeration"
    if kind == "enumeration":
        if q**n > EXHAUSTIVE_DECODE_LIMIT * 64:
            raise ParameterError("enumeration trapdoor needs a tiny q**n")
        return TrapdoorPair(uniform((n, m), q, rng), q, "enumeration")
    if kind != "gadget":
        raise ParameterError(f"unknown trapdoor kind {kind!r}")
    if nbar < n:
        raise ParameterError(f"m={m} too small for a gadget trapdoor: need m >= {n * k + n}")
    G = gadget_matrix(n, q)
    for _ in range(64):
        Abar = uniform((n, nbar), q, rng)
        R = rng.integers(-1, 2, size=(nbar, n * k), dtype=np.int64)
        A = np.hstack([Abar, np.mod(G - Abar @ R, q)])
        pair = TrapdoorPair(A, q, "gadget", R)
        # where it's cheap, make the decoding radius an actual guarantee
        if q**n > EXHAUSTIVE_DECODE_LIMIT or min_distance(A, q) > 2 * pair.decode_radius:
            return pair
    raise ParameterError("could not sample a trapdoor with unique decoding")


def _nearest_codeword(B: np.ndarray, A: np.ndarray, q: int, chunk: int = 1 << 22) -> np.ndarray:
    """For each row b of B, the s minimising ||c(b - s A)|| over all of Z_q^n."""
    S = _all_vectors(A.shape[0], q)
    C = np.mod(S @ A, q)
    best = np.empty((B.shape[0], A.shape[0]), dtype=np.int64)
    step = max(1, chunk // max(1, C.size))
    for i in range(0, B.shape[0], step):
        d = centered(B[i:i + step, None, :] - C[None, :, :], q)
        best[i:i + step] = S[np.argmin(np.sum(d * d, axis=2), axis=1)]
    return best


def _gadget_decode(B: np.ndarray, pair: TrapdoorPair) -> np.ndarray:
    q, n = pair.q, pair.n
    k = log2q(q)
    nbar = pair.m - n * k
    Bp = np.mod(matmul_mod(B[:, :nbar], np.mod(pair.R, q), q) + B[:, nbar:], q)  # = s^T G + f
    g = np.mod(1 << np.arange(k, dtype=np.int64), q)
    cand = np.arange(q, dtype=np.int64)
    out = np.empty((B.shape[0], n), dtype=np.int64)
    for i in range(n):
        blk = Bp[:, i * k:(i + 1) * k]
        d = centered(blk[:, None, :] - np.mod(cand[:, None] * g[None, :], q)[None], q)
        out[:, i] = np.argmin(np.sum(d * d, axis=2), axis=1)
    return out


def invert_many(pair: TrapdoorPair, B, radius: float | None = None):
    """Vectorised inversion: returns (S, E, ok) for the rows of ``B``.

    A row counts as decoded when the recovered error has l2 norm at most
    ``radius`` (default ``pair.accept_radius``).
    """
    B = np.mod(np.atleast_2d(np.asarray(B, dtype=np.int64)), pair.q)
    if B.shape[1] != pair.m:
        raise ParameterError(f"expected length {pair.m}, got {B.shape[1]}")
    q = pair.q
    if q**pair.n <= EXHAUSTIVE_DECODE_LIMIT or pair.kind == "enumeration":
        S = _nearest_codeword(B, pair.A, q)
    else:
        S = _gadget_decode(B, pair)
    E = centered(B - S @ pair.A, q)
    r = pair.accept_radius if radius is None else radius
    ok = np.sum(E * E, axis=1) <= r * r + 1e-9
    return S, np.mod(E, q), ok


def invert(pair: TrapdoorPair, b, radius: float | None = None):
    """Recover (s, e) from b = s^T A + e^T, or None when decoding fails."""
    S, E, ok = invert_many(pair, np.asarray(b)[None, :], radius)
    if not ok[0]:
        return None
    return S[0], E[0]
