import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmfpool.linalg import frobenius_norm
from nmfpool.nmf import NmfConfig, NmfFactors, factorize, initial_factors, multiplicative_step, nmf_objective


def random_nonneg(seed, n=10, m=10):
    return np.random.default_rng(seed).random((n, m))


def test_objective_cases():
    rng = np.random.default_rng(0)
    w, h = rng.random((5, 2)), rng.random((2, 4))
    a = w @ h
    assert nmf_objective(a, NmfFactors(w, h)) < 1e-12
    assert nmf_objective(a, NmfFactors(np.zeros((5, 2)), np.zeros((2, 4)))) == frobenius_norm(a)
    b = rng.random((5, 4))
    assert nmf_objective(b, NmfFactors(w, h)) == frobenius_norm(b - w @ h)


def test_step_fixed_point():
    rng = np.random.default_rng(1)
    w, h = rng.random((6, 2)) + 0.1, rng.random((2, 6)) + 0.1
    f = multiplicative_step(w @ h, NmfFactors(w, h))
    assert f.final_objective < 1e-10


def test_step_rejects_negative_input():
    with pytest.raises(ValueError):
        multiplicative_step(-np.ones((3, 3)), NmfFactors(np.ones((3, 1)), np.ones((1, 3))))


def test_single_step_monotone_and_nonnegative():
    for seed in range(100):
        a = random_nonneg(seed)
        w, h = initial_factors(a, 3, seed)
        before = nmf_objective(a, NmfFactors(w, h))
        f = multiplicative_step(a, NmfFactors(w, h))
        assert f.final_objective <= before + 1e-10
        assert f.w.min() >= 0 and f.h.min() >= 0


def test_initialization_range_and_determinism():
    a = random_nonneg(3, 7, 5)
    w, h = initial_factors(a, 2, 9)
    s = np.sqrt(a.mean() / 2)
    assert w.shape == (7, 2) and h.shape == (2, 5)
    assert w.min() > 0 and w.max() <= s and h.min() > 0 and h.max() <= s
    w2, h2 = initial_factors(a, 2, 9)
    assert w.tobytes() == w2.tobytes() and h.tobytes() == h2.tobytes()


def test_rank_one_recovered():
    rng = np.random.default_rng(4)
    u, v = rng.random(6) + 0.1, rng.random(6) + 0.1
    a = np.outer(u, v)
    f = factorize(a, NmfConfig(k=1))
    assert f.final_objective < 1e-6 * frobenius_norm(a)


def test_identity_k2_captures_mass():
    f = factorize(np.eye(4), NmfConfig(k=2, seed=0))
    assert f.final_objective < frobenius_norm(np.eye(4)) - 0.1
    assert f.final_objective < f.history[0]


def test_factorize_deterministic():
    a = random_nonneg(8)
    f1, f2 = factorize(a, NmfConfig(k=3, seed=5)), factorize(a, NmfConfig(k=3, seed=5))
    assert f1.w.tobytes() == f2.w.tobytes() and f1.h.tobytes() == f2.h.tobytes()


def test_final_objective_recomputed():
    a = random_nonneg(2)
    f = factorize(a, NmfConfig(k=2))
    assert abs(f.final_objective - frobenius_norm(a - f.w @ f.h)) < 1e-10
    assert f.iterations_run <= 200


def test_convergence_flag_and_iteration_cap():
    a = random_nonneg(6)
    capped = factorize(a, NmfConfig(k=3, max_iters=2, rel_tol=0.0))
    assert capped.iterations_run == 2 and not capped.converged
    loose = factorize(a, NmfConfig(k=3, rel_tol=0.5))
    assert loose.converged and loose.iterations_run < 200


def test_rank_clamped_for_small_inputs():
    f = factorize(np.array([[0.0, 1.0], [1.0, 0.0]]), NmfConfig(k=5))
    assert f.k == 1 and f.k_requested == 5
    single = factorize(np.array([[2.0]]), NmfConfig(k=3))
    assert single.k == 1


def test_zero_matrix():
    f = factorize(np.zeros((4, 4)), NmfConfig(k=2))
    assert np.all(np.isfinite(f.w)) and f.final_objective >= 0


def test_factorize_rejects_negative():
    with pytest.raises(ValueError):
        factorize(np.array([[1.0, -1.0], [0.0, 1.0]]), NmfConfig(k=1))


def test_config_validation():
    with pytest.raises(ValueError):
        NmfConfig(k=0)
    with pytest.raises(ValueError):
        NmfConfig(k=1, init="nndsvd")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([2, 3]))
def test_history_monotone(seed, k):
    f = factorize(random_nonneg(seed), NmfConfig(k=k, seed=seed, rel_tol=0.0, max_iters=60))
    hist = np.array(f.history)
    assert np.all(np.diff(hist) <= 1e-10)


@pytest.mark.parametrize("c", [0.01, 3.0, 250.0])
def test_scale_equivariance(c):
    a = random_nonneg(12)
    base = factorize(a, NmfConfig(k=3, seed=2))
    w, h = initial_factors(a, 3, 2)
    scaled = factorize(c * a, NmfConfig(k=3, seed=2), init=(np.sqrt(c) * w, np.sqrt(c) * h))
    assert scaled.final_objective <= c * base.final_objective * (1 + 1e-6)
    assert scaled.final_objective >= c * base.final_objective * (1 - 1e-6)
    # seeded initialization already scales with sqrt(c)
    auto = factorize(c * a, NmfConfig(k=3, seed=2))
    assert abs(auto.final_objective - c * base.final_objective) <= 1e-6 * c * base.final_objective
