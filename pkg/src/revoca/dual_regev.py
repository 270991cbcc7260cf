"""Key-revocable Dual-Regev encryption and its 1-bit unpredictability game."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import coset
from .coset import CosetState, Ensemble, PureState, Verdict
from .lattice import (
    ParameterError, SchemeParams, TrapdoorPair, centered, gen_trap, mod,
    sample_discrete_gaussian, uniform,
)
from .rng import stream


@dataclass(frozen=True, eq=False)
class DrPublicKey:
    A: np.ndarray
    y: np.ndarray


@dataclass(frozen=True, eq=False)
class DrMasterSecret:
    trapdoor: TrapdoorPair


@dataclass(frozen=True, eq=False)
class DrDecKey:
    """Either a simulated quantum key ``state`` or a classical short preimage ``x0``."""

    state: PureState | None = None
    x0: np.ndarray | None = None

    @property
    def quantum(self) -> bool:
        return self.state is not None


@dataclass(frozen=True, eq=False)
class DualRegevCiphertext:
    c0: np.ndarray
    c1: int
    secrets: tuple | None = field(default=None, repr=False)  # (s, e, e') when kept


def decode_bit(v, q: int) -> int:
    """0 if v is closer to 0 than to q/2, i.e. |c(v)| < q/4."""
    return int(abs(int(centered(v, q))) * 4 >= q)


def keygen(params: SchemeParams, rng: np.random.Generator, mode: str = "quantum"):
    """(pk, deckey, msk).  Quantum mode prepares |psi_y>; classical mode keeps one short x0."""
    n, m, q, sigma = params.n, params.m, params.q, params.sigma
    pair = gen_trap(n, m, q, rng)
    if mode == "quantum":
        state, y = coset.gen_gauss(pair.A, sigma, q, rng)
        key = DrDecKey(state=state)
    elif mode == "classical":
        # matches the law of measuring |psi_y>: rho_sigma^2 = rho_{sigma/sqrt2}
        x0 = sample_discrete_gaussian(m, sigma / math.sqrt(2), q, rng, radius=params.coset_radius)
        y = mod(pair.A @ x0, q)
        key = DrDecKey(x0=x0)
    else:
        raise ParameterError(f"unknown key mode {mode!r}")
    return DrPublicKey(pair.A, y), key, DrMasterSecret(pair)


def encrypt(pk: DrPublicKey, bit: int, params: SchemeParams, rng: np.random.Generator,
            keep_secrets: bool = False) -> DualRegevCiphertext:
    """CT = (s^T A + e^T, s^T y + e' + bit * floor(q/2))."""
    if bit not in (0, 1):
        raise ParameterError("plaintext must be a bit")
    n, m, q = params.n, params.m, params.q
    s = uniform(n, q, rng)
    e = sample_discrete_gaussian(m, params.alpha * q, q, rng)
    e1 = sample_discrete_gaussian(1, params.beta * q, q, rng)[0]
    c0 = mod(s @ pk.A + e, q)
    c1 = int((int(s @ pk.y) + int(e1) + bit * (q // 2)) % q)
    return DualRegevCiphertext(c0, c1, (s, e, e1) if keep_secrets else None)


def decrypt_classical(x0, ct: DualRegevCiphertext, q: int) -> int:
    v = (ct.c1 - int(mod(ct.c0, q) @ mod(x0, q))) % q
    return decode_bit(v, q)


def decrypt_quantum(deckey: DrDecKey, ct: DualRegevCiphertext, params: SchemeParams,
                    rng: np.random.Generator, purified: bool = False):
    """Measure v = c1 - <c0, x> on the key; returns (bit, post-key).

    ``purified=True`` measures only the decoded bit, which leaves the key
    undisturbed whenever decryption is deterministic over its support.
    """
    if not deckey.quantum:
        raise ParameterError("decrypt_quantum needs a quantum key")
    st, q = deckey.state, params.q
    v = coset.linear_outcomes(st, ct.c0, ct.c1, q)
    p = st.probabilities()
    if purified:
        bits = (np.abs(centered(v, q)) * 4 >= q).astype(int)
        pb = np.bincount(bits, weights=p, minlength=2)
        b = int(rng.choice(2, p=pb / pb.sum()))
        mask = bits == b
    else:
        dist = np.bincount(v, weights=p, minlength=q)
        val = int(rng.choice(q, p=dist / dist.sum()))
        b = decode_bit(val, q)
        mask = v == val
    post = st if bool(np.all(mask)) else coset.condition(st, mask)
    return b, DrDecKey(state=post)


def reference_state(pk: DrPublicKey, params: SchemeParams) -> CosetState:
    return coset.build_coset_state(pk.A, pk.y, params.sigma, params.q)


def revoke(msk: DrMasterSecret | None, pk: DrPublicKey, state, params: SchemeParams,
           rng: np.random.Generator) -> Verdict:
    """Project the returned state onto |psi_y>."""
    if msk is None or msk.trapdoor is None:
        raise ParameterError("revocation needs the master secret")
    if isinstance(state, DrDecKey):
        state = state.state
    if state is None:
        raise ParameterError("nothing to revoke")
    if state.dim_spec != (params.q, params.m):
        raise ParameterError("returned state has the wrong dimensions")
    verdict, _ = coset.revoke_project(state, reference_state(pk, params), rng)
    return verdict


# ------------------------------------------------------------ multi-bit

def encrypt_multi(pk, bits, params, rng) -> list[DualRegevCiphertext]:
    return [encrypt(pk, int(b), params, rng) for b in bits]


def decrypt_multi(deckey: DrDecKey, cts, params, rng):
    """Decrypt each ciphertext in turn, reusing the key; returns (bits, post-key)."""
    out = []
    for ct in cts:
        if deckey.quantum:
            b, deckey = decrypt_quantum(deckey, ct, params, rng, purified=True)
        else:
            b = decrypt_classical(deckey.x0, ct, params.q)
        out.append(b)
    return out, deckey


revoke_multi = revoke


# ------------------------------------------------------------ game

class ExperimentAbort(RuntimeError):
    """The adversary broke the interface contract."""


class Adversary:
    """Game interface.  Subclasses override the hooks they care about."""

    name = "base"

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def receive(self, pk, deckey, params):
        self.pk, self.key, self.params = pk, deckey, params

    def choose_plaintext(self) -> int:
        return 0

    def return_state(self):
        raise NotImplementedError

    def guess(self, challenge) -> int:
        raise NotImplementedError


class HonestRandom(Adversary):
    """Returns the key untouched and guesses a fair coin."""

    name = "honest-random"

    def return_state(self):
        return self.key.state

    def guess(self, challenge):
        return int(self.rng.integers(2))


class MeasureAndKeep(Adversary):
    """Measures the key, returns the collapsed ket, decrypts with the kept preimage."""

    name = "measure-and-keep"

    def receive(self, pk, deckey, params):
        super().receive(pk, deckey, params)
        self.x0 = coset.measure(deckey.state, self.rng)

    def return_state(self):
        return coset.basis_state(self.params.q, self.params.m, self.x0)

    def guess(self, ct):
        bit = decrypt_classical(self.x0, ct, self.params.q)
        return 0 if bit == self.mu else 1

    def choose_plaintext(self):
        self.mu = 0
        return self.mu


def junk_state(state: PureState, A, y, q: int) -> PureState:
    """A basis state orthogonal to ``state``: outside the coset if possible."""
    m = state.m
    for x in np.ndindex(*(q,) * m):
        x = np.array(x, dtype=np.int64)
        if np.any(mod(A @ x, q) != mod(y, q)):
            return coset.basis_state(q, m, x)
    # A = 0: every vector is in the coset, so orthogonalise instead
    x = state.vecs[np.argmin(np.abs(state.amps))]
    b = coset.basis_state(q, m, x)
    ov = coset.inner(state, b)
    return PureState.build(q, m, np.vstack([b.vecs, state.vecs]),
                           np.concatenate([b.amps, -ov * state.amps]))


class Discard(Adversary):
    """Returns orthogonal junk and guesses a fair coin."""

    name = "discard"

    def return_state(self):
        return junk_state(self.key.state, self.pk.A, self.pk.y, self.params.q)

    def guess(self, challenge):
        return int(self.rng.integers(2))


PKE_ADVERSARIES = {cls.name: cls for cls in (HonestRandom, MeasureAndKeep, Discard)}


@dataclass
class TrialRecord:
    index: int
    valid: bool
    b: int
    guess: int | None
    success: bool


@dataclass
class GameStats:
    trials: int
    successes: int
    valid: int
    records: list = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials

    @property
    def valid_rate(self) -> float:
        return self.valid / self.trials

    @property
    def std_error(self) -> float:
        p = self.success_rate
        return math.sqrt(max(p * (1 - p), 1e-300) / self.trials)

    @property
    def valid_std_error(self) -> float:
        p = self.valid_rate
        return math.sqrt(max(p * (1 - p), 1e-300) / self.trials)


def _check_state(state, params):
    comps = coset.components(state) if isinstance(state, (PureState, Ensemble)) else None
    if not comps:
        raise ExperimentAbort(f"return_state produced {type(state).__name__}, not a state")
    for w, s in comps:
        if not isinstance(s, PureState) or s.dim_spec != (params.q, params.m):
            raise ExperimentAbort("returned state has the wrong register dimensions")


def pke_trial(adversary_cls, params: SchemeParams, seed: int, index: int,
              plaintext_after_revoke: bool = True) -> TrialRecord:
    rng = stream(seed, "pke/challenger", index)
    adv = adversary_cls(stream(seed, "pke/adversary", index))
    pk, key, msk = keygen(params, rng)
    adv.receive(pk, key, params)
    if not plaintext_after_revoke:
        mu = adv.choose_plaintext()
    returned = adv.return_state()
    _check_state(returned, params)
    verdict = revoke(msk, pk, returned, params, rng)
    if not verdict:
        # the challenger aborts: no challenge, no correct-guess event
        return TrialRecord(index, False, -1, None, False)
    if plaintext_after_revoke:
        mu = adv.choose_plaintext()
    if mu not in (0, 1):
        raise ExperimentAbort(f"plaintext {mu!r} is not a bit")
    b = int(rng.integers(2))
    if b == 0:
        ct = encrypt(pk, mu, params, rng)
    else:
        ct = DualRegevCiphertext(uniform(params.m, params.q, rng), int(rng.integers(params.q)))
    g = adv.guess(ct)
    if g not in (0, 1):
        raise ExperimentAbort(f"guess {g!r} is not a bit")
    return TrialRecord(index, True, b, int(g), g == b)


def run_trials(fn, trials: int, threads: int | None = None) -> list:
    """Run ``fn(i)`` for every trial index, optionally on a thread pool; results sorted by index."""
    if threads is None:
        import os
        threads = int(os.environ.get("REVOCA_THREADS", "1") or 1)
    if threads <= 1:
        return [fn(i) for i in range(trials)]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(trials)))


def summarize(records) -> GameStats:
    return GameStats(len(records), sum(r.success for r in records),
                     sum(r.valid for r in records), list(records))


def run_pke_experiment(adversary, params: SchemeParams, trials: int, seed: int,
                       plaintext_after_revoke: bool = True, threads: int | None = None) -> GameStats:
    """Play the revocation game ``trials`` times; ``adversary`` is a class or a built-in name."""
    if isinstance(adversary, str):
        try:
            adversary = PKE_ADVERSARIES[adversary]
        except KeyError:
            raise ParameterError(f"unknown adversary {adversary!r}") from None
    recs = run_trials(lambda i: pke_trial(adversary, params, seed, i, plaintext_after_revoke),
                      trials, threads)
    return summarize(recs)
