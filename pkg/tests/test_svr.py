import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import gram_gamma, svr_dual_pg
from viewcast.svr import (KernelParams, SvrConfig, SvrModel, rbf_kernel, rbf_matrix, svr_dual_objective, svr_fit,
                          svr_predict)


def toy(n=12, seed=0, noise=0.1):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(-3, 3, n))[:, None]
    return x, np.sin(x[:, 0]) + noise * rng.normal(size=n)


# ----------------------------------------------------------------------------
# kernel


def test_rbf_kernel_examples():
    x = np.array([0.3, -1.2, 4.0])
    assert rbf_kernel(x, x) == 1.0
    sigma = 0.7
    y = x + np.array([sigma * math.sqrt(2), 0, 0])  # ||x-y||^2 = 2 sigma^2
    assert rbf_kernel(x, y, KernelParams(sigma, "sigma")) == pytest.approx(math.exp(-1), abs=1e-9)
    y = x + np.array([6.0, 8.0, 0.0])  # ||x-y||^2 = 100
    assert rbf_kernel(x, y, KernelParams(0.005, "gamma")) == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert math.exp(-0.5) == pytest.approx(0.606531, abs=1e-6)


def test_rbf_kernel_errors_and_params():
    with pytest.raises(ValueError, match="mismatch"):
        rbf_kernel([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        KernelParams(0.0)
    with pytest.raises(ValueError):
        KernelParams(1.0, "laplace")
    assert KernelParams(0.005, "sigma").gamma == pytest.approx(20000.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       st.floats(1e-3, 10), st.sampled_from(["gamma", "sigma"]))
def test_rbf_kernel_range_and_symmetry(a, b, s, form):
    p = KernelParams(s, form)
    k = rbf_kernel(a, b, p)
    assert 0 <= k <= 1
    assert k == rbf_kernel(b, a, p)
    assert rbf_matrix([a], [b], p)[0, 0] == pytest.approx(k, rel=1e-12, abs=1e-300)


# ----------------------------------------------------------------------------
# fit


@pytest.mark.parametrize("eps", [0.1, 0.0])
def test_constant_target(eps):
    x = np.random.default_rng(0).normal(size=(15, 2))
    m = svr_fit(x, np.full(15, 3.25), SvrConfig(epsilon=eps))
    assert m.n_support == 0
    assert m.intercept == pytest.approx(3.25, abs=1e-12)
    np.testing.assert_allclose(svr_predict(m, x), 3.25, atol=1e-12)


def test_matches_projected_gradient_oracle_on_toy():
    x, y = toy()
    cfg = SvrConfig(c=10.0, epsilon=0.1, tol=1e-3, kernel=KernelParams(0.5))
    m = svr_fit(x, y, cfg)
    _, best = svr_dual_pg(gram_gamma(x, 0.5), y, 10.0, 0.1)
    assert m.training_meta["dual_objective"] == pytest.approx(best, rel=1e-4)
    assert m.training_meta["converged"]
    # recomputing the objective from the stored coefficients agrees with the solver's bookkeeping
    coef = np.zeros(len(y))
    idx = [int(np.flatnonzero((x == sv).all(1))[0]) for sv in m.support_vectors]
    coef[idx] = m.dual_coeffs
    assert svr_dual_objective(coef, x, y, cfg) == pytest.approx(m.training_meta["dual_objective"], rel=1e-9)


def test_free_support_vectors_sit_on_tube_edge():
    x, y = toy(n=12, seed=1, noise=0.2)
    cfg = SvrConfig(c=10.0, epsilon=0.1, tol=1e-5, kernel=KernelParams(0.5))
    m = svr_fit(x, y, cfg)
    pred = svr_predict(m, x)
    free = 0
    for sv, a in zip(m.support_vectors, m.dual_coeffs):
        i = int(np.flatnonzero((x == sv).all(1))[0])
        if 0 < abs(a) < cfg.c:
            free += 1
            assert abs(abs(pred[i] - y[i]) - cfg.epsilon) <= 1e-4
    assert free > 0


def kkt_ok(m, x, y, cfg, slack):
    pred = svr_predict(m, x)
    coef = np.zeros(len(y))
    for sv, a in zip(m.support_vectors, m.dual_coeffs):
        coef[np.flatnonzero((x == sv).all(1))] = a
    res = np.abs(y - pred)
    inside = res < cfg.epsilon - slack
    assert np.all(coef[inside] == 0)
    at_bound = np.isclose(np.abs(coef), cfg.c, rtol=0, atol=1e-12)
    assert np.all(res[at_bound] >= cfg.epsilon - slack)
    outside = res > cfg.epsilon + slack
    assert np.allclose(np.abs(coef[outside]), cfg.c)
    assert np.all(np.abs(coef) <= cfg.c + 1e-9)
    assert abs(coef.sum()) <= 1e-6 * cfg.c


@pytest.mark.parametrize("seed", range(6))
def test_kkt_conditions(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(8, 21)), int(rng.integers(1, 4))
    x = rng.normal(size=(n, d))
    y = np.cos(x.sum(1)) + 0.3 * rng.normal(size=n)
    cfg = SvrConfig(c=float(rng.choice([0.3, 1.0, 10.0])), epsilon=0.1, kernel=KernelParams(1.0))
    m = svr_fit(x, y, cfg)
    assert m.training_meta["kkt_violation"] <= cfg.tol
    kkt_ok(m, x, y, cfg, slack=cfg.tol)


def test_duplicates_leave_predictions_unchanged():
    # with a box that never binds, duplicating every point is the same problem with coefficients split in two
    x, y = toy(n=10, seed=2, noise=0.0)
    cfg = SvrConfig(c=1e3, epsilon=0.05, tol=1e-9, kernel=KernelParams(1.0))
    a = svr_fit(x, y, cfg)
    assert np.all(np.abs(a.dual_coeffs) < cfg.c / 2)
    b = svr_fit(np.vstack([x, x]), np.concatenate([y, y]), cfg)
    grid = np.linspace(-3, 3, 41)[:, None]
    np.testing.assert_allclose(svr_predict(b, grid), svr_predict(a, grid), atol=1e-6)


def test_permutation_robust():
    x, y = toy(n=16, seed=3, noise=0.3)
    cfg = SvrConfig(c=5.0, epsilon=0.1, tol=1e-9, kernel=KernelParams(0.8))
    perm = np.random.default_rng(0).permutation(len(y))
    a, b = svr_fit(x, y, cfg), svr_fit(x[perm], y[perm], cfg)
    grid = np.linspace(-3, 3, 25)[:, None]
    np.testing.assert_allclose(svr_predict(a, grid), svr_predict(b, grid), atol=1e-6)


def test_objective_trace_monotone():
    x, y = toy(n=20, seed=4, noise=0.5)
    m = svr_fit(x, y, SvrConfig(c=2.0, record_trace=True, kernel=KernelParams(2.0)))
    trace = np.array(m.training_meta["trace"])
    assert trace.size == m.training_meta["iterations"] > 0
    assert np.all(np.diff(trace) >= -1e-12)
    assert trace[-1] == pytest.approx(m.training_meta["dual_objective"], rel=1e-9)


def test_deterministic():
    x, y = toy(n=30, seed=5, noise=0.3)
    a, b = svr_fit(x, y), svr_fit(x, y)
    assert a.support_vectors.tobytes() == b.support_vectors.tobytes()
    assert a.dual_coeffs.tobytes() == b.dual_coeffs.tobytes()
    assert a.intercept == b.intercept


def test_lru_row_cache_path_matches_full_gram():
    x, y = toy(n=40, seed=6, noise=0.3)
    full = svr_fit(x, y, SvrConfig(kernel=KernelParams(1.0)))
    rows = svr_fit(x, y, SvrConfig(kernel=KernelParams(1.0), gram_threshold=10, cache_rows=4))
    np.testing.assert_allclose(rows.dual_coeffs, full.dual_coeffs, atol=1e-12)
    assert rows.intercept == pytest.approx(full.intercept, abs=1e-12)


def test_max_iter_reported():
    x, y = toy(n=20, seed=7, noise=0.5)
    m = svr_fit(x, y, SvrConfig(max_iter=3, kernel=KernelParams(1.0)))
    assert m.training_meta["iterations"] == 3
    assert not m.training_meta["converged"]


def test_fit_errors():
    with pytest.raises(ValueError, match="at least 2"):
        svr_fit(np.ones((1, 2)), np.ones(1))
    with pytest.raises(ValueError, match="finite"):
        svr_fit(np.array([[1.0], [np.inf]]), np.ones(2))
    with pytest.raises(ValueError):
        SvrConfig(c=0)
    with pytest.raises(ValueError):
        SvrConfig(epsilon=-1)


# ----------------------------------------------------------------------------
# predict


def test_predict_examples():
    empty = SvrModel(np.zeros((0, 2)), np.zeros(0), 1.5, KernelParams())
    np.testing.assert_array_equal(svr_predict(empty, np.ones((3, 2))), [1.5, 1.5, 1.5])
    sv = np.array([[0.2, -0.4]])
    one = SvrModel(sv, np.array([1.0]), 2.0, KernelParams(0.3))
    assert svr_predict(one, sv)[0] == 3.0
    with pytest.raises(ValueError, match="mismatch"):
        svr_predict(one, np.ones((2, 3)))


def test_predict_linear_in_coefficients():
    x, y = toy(n=15, seed=8)
    m = svr_fit(x, y, SvrConfig(kernel=KernelParams(1.0)))
    s = 2.5
    scaled = SvrModel(m.support_vectors, s * m.dual_coeffs, s * m.intercept, m.kernel)
    q = np.linspace(-4, 4, 9)[:, None]
    np.testing.assert_allclose(svr_predict(scaled, q), s * svr_predict(m, q), rtol=1e-12, atol=1e-12)


def test_json_roundtrip():
    x, y = toy(n=15, seed=9)
    m = svr_fit(x, y, SvrConfig(kernel=KernelParams(0.7, "sigma")))
    back = SvrModel.from_json(m.to_json())
    q = np.linspace(-3, 3, 7)[:, None]
    np.testing.assert_array_equal(svr_predict(back, q), svr_predict(m, q))
    assert back.kernel == m.kernel
    assert back.training_meta["n_train"] == 15
