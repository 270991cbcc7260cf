import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from revoca.harness import PRESETS
from revoca.lattice import ParameterError, gen_trap, mod
from revoca.reductions import (
    KeepOnePreimage, LemmaRecord, ReturnCollapsed, SisInstance, corrupted_oracle,
    distinct_pair_check, distinct_pair_projected, gl_extract, hybrid_advantage, lemma_suite,
    max_amplitude_check, noise_flooding_tv, perfect_oracle, random_distinct_pair_instance,
    sis_solver, sis_success_oracle, synthetic_hybrid_game, tail_bound, tail_mass_check, verify_sis,
)
from revoca.rng import stream


# ------------------------------------------------------------ SIS

def test_verify_sis_examples():
    inst = SisInstance(np.array([[1, 2, 3]]), 3.0, 7)
    assert verify_sis(inst, [1, 0, 2])          # 1 + 6 = 7
    assert not verify_sis(inst, [0, 0, 0])
    assert not verify_sis(inst, [1, 1, 0])
    assert not verify_sis(inst, [2, 0, 4])      # in kernel, centered (2, 0, -3) has norm sqrt 13 > 3
    assert verify_sis(inst, [6, 0, 5])          # the negative of the first


# ------------------------------------------------------------ GL

@pytest.mark.parametrize("q,m", [(5, 2), (7, 1)])
def test_gl_perfect_exhaustive(q, m):
    rng = stream(q, "gl")
    orc = perfect_oracle(q)
    for x in itertools.product(range(q), repeat=m):
        out = gl_extract(orc, np.array(x), m, q, rng, votes=20)
        assert out is not None and tuple(out) == x


def test_gl_corrupted():
    q, m = 5, 2
    rng = stream(1, "gl")
    ok = 0
    for t in range(100):
        x = rng.integers(0, q, size=m)
        orc = corrupted_oracle(q, 0.10, salt=t.to_bytes(2, "little"))
        out = gl_extract(orc, x, m, q, rng, votes=200)
        ok += out is not None and np.array_equal(out, x)
    assert ok >= 99


def test_corrupted_oracle_is_pure_and_near_rate():
    orc = corrupted_oracle(7, 0.25, b"s")
    x = np.array([3, 1, 4])
    R = stream(2, "gl").integers(0, 7, size=(4000, 3))
    a, b = orc(R, x), orc(R, x)
    assert np.array_equal(a, b)
    wrong = np.mean(a != mod(R @ x, 7))
    assert abs(wrong - 0.25) < 0.03


def test_gl_check_rejects_wrong_coset():
    rng = stream(3, "gl")
    x = np.array([1, 2])
    out = gl_extract(perfect_oracle(5), x, 2, 5, rng, check=(np.array([[1, 0]]), np.array([3])))
    assert out is None


# ------------------------------------------------------------ SIS pipeline

SMALL = PRESETS["sim-small"]


def test_return_collapsed_never_solves():
    A = gen_trap(2, 5, 5, stream(1, "A")).A
    rng = stream(4, "sis")
    assert all(sis_solver(A, ReturnCollapsed(rng), SMALL, rng) is None for _ in range(50))


def test_keep_one_preimage_rate():
    A = gen_trap(2, 5, 5, stream(1, "A")).A
    want = sis_success_oracle(A, SMALL.sigma, 5)
    assert want == pytest.approx(0.7732, abs=5e-4)
    rng = stream(5, "sis")
    inst = SisInstance(A, SMALL.sigma * math.sqrt(10), 5)
    hits = 0
    for _ in range(1000):
        sol = sis_solver(A, KeepOnePreimage(rng), SMALL, rng)
        if sol is not None:
            assert verify_sis(inst, sol)
            hits += 1
    assert abs(hits / 1000 - want) < 4 * math.sqrt(want * (1 - want) / 1000)


# ------------------------------------------------------------ distinct pairs

def dense_distinct_pair(rho_xy, psi, kraus, S):
    """Independent dense evaluation of both sides on X (x) Y density matrices."""
    psi = np.asarray(psi, complex) / np.linalg.norm(psi)
    dX = psi.size
    vs = [(w, np.asarray(v, complex) / np.linalg.norm(v)) for w, v in rho_xy]
    dY = vs[0][1].shape[1]
    rho = sum(w * np.outer(v.reshape(-1), v.reshape(-1).conj()) for w, v in vs)
    out = sum(np.kron(np.eye(dX), K) @ rho @ np.kron(np.eye(dX), K).conj().T for K in kraus)
    gam = np.zeros(dX * dX)
    for a in S:
        for b in S:
            if a != b:
                gam[a * dX + b] = 1
    lhs = float(np.real(np.sum(np.diag(out) * gam)))
    Pi = np.kron(np.outer(psi, psi.conj()), np.eye(dY))
    pr = Pi @ rho @ Pi
    tr_pi = float(np.trace(pr).real)
    sig = np.einsum("xyxz->yz", pr.reshape(dX, dY, dX, dY)) / tr_pi
    es = sum(K @ sig @ K.conj().T for K in kraus)
    tr_s = float(np.sum(np.diag(es).real[list(S)]))
    rhs = (1 - float(np.max(np.abs(psi) ** 2))) * tr_pi * tr_s
    outp = sum(np.kron(np.eye(dX), K) @ pr @ np.kron(np.eye(dX), K).conj().T for K in kraus)
    lhs_proj = float(np.real(np.sum(np.diag(outp) * gam)))
    return lhs, lhs_proj, rhs


def test_distinct_pair_hand_example():
    psi = np.array([1, 1]) / math.sqrt(2)
    v = np.outer(psi, [0, 1])
    lhs, rhs, ok = distinct_pair_check([(1.0, v)], psi, [np.eye(2)], [0, 1])
    assert lhs == pytest.approx(0.5) and rhs == pytest.approx(0.5) and ok


def test_distinct_pair_basis_psi():
    v = np.array([[1, 0], [0, 0]])
    lhs, rhs, ok = distinct_pair_check([(1.0, v)], np.array([1, 0]), [np.eye(2)], [0, 1])
    assert lhs == 0 and rhs == 0 and ok


@given(st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_distinct_pair_matches_dense(seed):
    inst = random_distinct_pair_instance(stream(seed, "dp"))
    lhs, rhs, _ = distinct_pair_check(*inst)
    lp, rp, ok = distinct_pair_projected(*inst)
    dl, dlp, dr = dense_distinct_pair(*inst)
    assert lhs == pytest.approx(dl, abs=1e-10)
    assert lp == pytest.approx(dlp, abs=1e-10)
    assert rhs == pytest.approx(dr, abs=1e-10) and rp == pytest.approx(dr, abs=1e-10)
    assert ok


def test_distinct_pair_frozen_counterexample():
    # instance 97 of the seed-0 lemma suite violates the unprojected inequality
    rng = stream(0, "cli/lemmas")
    for _ in range(97):
        random_distinct_pair_instance(rng)
    inst = random_distinct_pair_instance(rng)
    lhs, rhs, ok = distinct_pair_check(*inst)
    dl, dlp, dr = dense_distinct_pair(*inst)
    assert lhs == pytest.approx(dl, abs=1e-10) and rhs == pytest.approx(dr, abs=1e-10)
    assert lhs == pytest.approx(0.20816, abs=1e-5)
    assert rhs == pytest.approx(0.21268, abs=1e-5)
    assert not ok
    assert distinct_pair_projected(*inst)[2]


def test_distinct_pair_rejects_bad_support():
    with pytest.raises(ParameterError):
        distinct_pair_check([(1.0, np.eye(2))], np.array([1, 1]), [np.eye(2)], [0])


# ------------------------------------------------------------ Gaussian checks

def test_noise_flooding_zero_shift():
    tv, b, ok = noise_flooding_tv(2, 2.0, [0, 0], 7)
    assert tv == 0 and ok


def test_noise_flooding_bruteforce():
    # m=1, sigma=3, e0=1 mod 11
    q, sigma = 11, 3.0
    zs = [z for z in range(-5, 6) if z * z <= sigma**2]
    w = np.array([math.exp(-math.pi * z * z / sigma**2) for z in zs])
    w /= w.sum()
    P, Q = np.zeros(q), np.zeros(q)
    for z, p in zip(zs, w):
        P[z % q] += p
        Q[(z + 1) % q] += p
    tv, b, ok = noise_flooding_tv(1, sigma, [1], q)
    assert tv == pytest.approx(0.5 * np.abs(P - Q).sum(), abs=1e-14)
    assert ok


def test_tail_mass_bruteforce_z1():
    sigma, c = 2.0, 1.5
    zs = np.arange(-60, 61)
    w = np.exp(-math.pi * zs**2 / sigma**2)
    want = w[np.abs(zs) > c * sigma].sum() / w.sum()
    r, b, ok = tail_mass_check(None, sigma, c, m=1)
    assert r == pytest.approx(want, rel=1e-12)
    assert b == pytest.approx(tail_bound(1, c)) and ok


def test_tail_mass_small_c_vacuous():
    r, b, ok = tail_mass_check(None, 2.0, 0.3, m=2)
    assert ok


def test_max_amplitude_example():
    mx, b, pre, ok = max_amplitude_check(np.array([[1, 1, 1, 1, 1, 2]]), None, 2.5, 3)
    assert mx == pytest.approx(0.025758577, abs=1e-8)
    assert b == pytest.approx(0.0381944, abs=1e-6)
    assert pre and ok


def test_max_amplitude_precondition_off_at_tiny():
    mx, b, pre, ok = max_amplitude_check(np.array([[1, 2, 3]]), None, 2.0, 7)
    assert not pre and ok


def test_max_amplitude_rank_check():
    with pytest.raises(ParameterError):
        max_amplitude_check(np.zeros((1, 3), dtype=int), None, 2.0, 7)


# ------------------------------------------------------------ hybrids and suite

def test_hybrid_advantage_sum():
    assert hybrid_advantage([0.1, 0.2, 0.05]) == pytest.approx(0.35)


def test_synthetic_hybrid_telescopes():
    hops, direct, se = synthetic_hybrid_game([0.8, 0.7, 0.6], 20000, stream(0, "hyb"))
    assert len(hops) == 3
    assert abs(hybrid_advantage(hops) - direct) < 4 * se
    assert abs(direct - 0.3) < 4 * se


def test_lemma_record_line():
    r = LemmaRecord("x", 0.5, 0.25, True)
    assert r.line() == "lemma=x lhs=0.5 rhs=0.25 holds=true"


def test_lemma_suite_shape():
    recs = lemma_suite(PRESETS["sim-tiny"], stream(0, "suite"), instances=5)
    names = [r.name for r in recs]
    assert names.count("distinct-pair") == 5 and names.count("distinct-pair-projected") == 5
    assert sum(n.startswith("max-amplitude") for n in names) == 342
    assert all(r.holds for r in recs if not r.name == "distinct-pair")
