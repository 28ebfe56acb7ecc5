import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from urbanmorph.errors import NumericalError, ValidationError
from urbanmorph.spatial import (
    LMDiagnostics,
    LMTest,
    fit_spatial_error,
    fit_spatial_lag,
    from_neighbours,
    knn_weights,
    lm_diagnostics,
    model_select,
    morans_i,
    ols_fit,
)
from urbanmorph.synthcity import dgp_error, dgp_lag, random_points


def neighbour_sets(w):
    return [w.neighbours(i).tolist() for i in range(w.n)]


# --------------------------------------------------------------------------
# weights


def test_knn_line_ties_to_lower_id():
    w = knn_weights(np.array([[0, 0], [1, 0], [2, 0], [3, 0]]), k=1)
    assert neighbour_sets(w) == [[1], [0], [1], [2]]


def test_knn_full():
    w = knn_weights(random_points(6, 0), k=5)
    dense = w.sparse.toarray()
    assert np.allclose(dense + np.eye(6), np.full((6, 6), 0.2) + 0.8 * np.eye(6))


def test_knn_unit_square():
    w = knn_weights(np.array([[0, 0], [1, 0], [0, 1], [1, 1]]), k=2)
    assert neighbour_sets(w) == [[1, 2], [0, 3], [0, 3], [1, 2]]


def test_knn_order_independent(rng):
    pts = np.round(rng.uniform(0, 5, size=(30, 2)))  # plenty of distance ties
    ids = [f"z{i:02d}" for i in range(30)]
    w = knn_weights(pts, k=3, ids=ids)
    perm = rng.permutation(30)
    wp = knn_weights(pts[perm], k=3, ids=[ids[i] for i in perm])
    for row, i in enumerate(perm):
        assert sorted(ids[j] for j in w.neighbours(i)) == sorted(wp.ids[j] for j in wp.neighbours(row))


def test_knn_duplicates_warn(caplog):
    with caplog.at_level(logging.WARNING):
        w = knn_weights(np.array([[0, 0], [0, 0], [1, 0], [5, 5]]), k=1)
    assert "duplicate" in caplog.text
    assert neighbour_sets(w)[:2] == [[1], [0]]


def test_knn_invariants(rng):
    w = knn_weights(rng.uniform(size=(50, 2)), k=3, row_standardize=False)
    assert (w.sparse.diagonal() == 0).all()
    assert (np.diff(w.sparse.indptr) == 3).all()
    r = w.row_standardized()
    assert np.allclose(r.sparse.sum(axis=1), 1.0, atol=1e-12)
    assert (r.row_standardized().sparse != r.sparse).nnz == 0


def test_knn_bad_k():
    with pytest.raises(ValidationError):
        knn_weights(np.zeros((3, 2)) + np.arange(3)[:, None], k=3)


# --------------------------------------------------------------------------
# OLS


def test_ols_exact_line():
    fit = ols_fit(np.array([1.0, 3.0, 5.0]), np.array([0.0, 1.0, 2.0]))
    assert fit.coef == pytest.approx([1.0, 2.0], abs=1e-12)
    assert fit.r2 == pytest.approx(1.0)


def test_ols_orthogonal():
    x = np.array([-1.0, 0.0, 1.0, -1.0, 0.0, 1.0])
    y = np.array([1.0, -2.0, 1.0, 2.0, -4.0, 2.0])  # symmetric in x, zero covariance
    fit = ols_fit(y, x)
    assert fit.coef[1] == pytest.approx(0.0, abs=1e-12)
    assert fit.r2 == pytest.approx(0.0, abs=1e-12)


def test_ols_recovery(rng):
    X = rng.standard_normal((10_000, 3))
    y = X @ [0.5, 0.3, 0.1] + rng.standard_normal(10_000)
    fit = ols_fit(y, X)
    assert np.all(np.abs(fit.coef[1:] - [0.5, 0.3, 0.1]) <= 0.04)
    assert 0 <= fit.r2 <= 1
    assert fit.adj_r2 == pytest.approx(1 - (1 - fit.r2) * (9999) / (10_000 - 4))


@settings(max_examples=60, deadline=None)
@given(st.integers(5, 40), st.integers(1, 3), st.integers(0, 2**31))
def test_ols_normal_equations(n, p, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p)) * rng.uniform(0.1, 10, size=p)
    y = rng.normal(size=n) * 3 + X @ rng.normal(size=p)
    fit = ols_fit(y, X)
    Z = np.column_stack([np.ones(n), X])
    ref = np.linalg.solve(Z.T @ Z, Z.T @ y)
    assert np.allclose(fit.coef, ref, rtol=1e-10, atol=1e-10)
    assert np.all(np.abs(Z.T @ fit.resid) / n < 1e-8)
    s2 = fit.resid @ fit.resid / (n - p - 1)
    assert np.allclose(fit.se, np.sqrt(np.diag(np.linalg.inv(Z.T @ Z)) * s2), rtol=1e-8)
    assert np.allclose(fit.pvalue, 2 * stats.t.sf(np.abs(fit.tstat), n - p - 1))


def test_ols_rank_deficient_named(rng):
    x = rng.normal(size=20)
    with pytest.raises(NumericalError, match="copy"):
        ols_fit(rng.normal(size=20), np.column_stack([x, 3 * x]), ["x", "copy"])


# --------------------------------------------------------------------------
# Moran's I


def cycle4():
    return from_neighbours([[1, 3], [0, 2], [1, 3], [0, 2]])


def test_moran_alternating_cycle():
    assert morans_i(np.array([1.0, -1.0, 1.0, -1.0]), cycle4()).I == -1.0


def brute_moran(y, W):
    n = len(y)
    z = y - y.mean()
    num = sum(W[i, j] * z[i] * z[j] for i in range(n) for j in range(n))
    return n / W.sum() * num / sum(v * v for v in z)


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 8), st.integers(0, 2**31))
def test_moran_double_sum(n, seed):
    rng = np.random.default_rng(seed)
    nb = [sorted(set(rng.choice([j for j in range(n) if j != i], size=rng.integers(1, n), replace=False).tolist()))
          for i in range(n)]
    w = from_neighbours(nb, row_standardize=bool(seed % 2))
    y = rng.normal(size=n)
    assert abs(morans_i(y, w, permutations=0).I - brute_moran(y, w.sparse.toarray())) <= 1e-12


def test_permutation_mean(rng):
    w = knn_weights(random_points(100, 5), k=3)
    y = rng.normal(size=100)
    perms = [morans_i(rng.permutation(y), w, permutations=0).I for _ in range(2000)]
    assert np.mean(perms) == pytest.approx(-1 / 99, abs=0.02)


def test_moran_half_planes():
    pts = np.array([[x, y] for x in range(10) for y in range(5)], dtype=float)
    pts[pts[:, 0] >= 5, 0] += 100  # halves far apart so kNN stays inside each half
    y = np.where(pts[:, 0] < 50, 1.0, -1.0)
    res = morans_i(y, knn_weights(pts, k=3), permutations=999, seed=1)
    assert res.I > 0.9 and res.p_sim <= 0.002
    assert 1 / 1000 <= res.p_sim <= 1


def test_moran_constant_rejected():
    with pytest.raises(ValidationError):
        morans_i(np.ones(4), cycle4())


def test_moran_deterministic(rng):
    w = knn_weights(random_points(40, 1), k=3)
    y = rng.normal(size=40)
    assert morans_i(y, w, seed=7) == morans_i(y, w, seed=7)


def test_moran_normal_approximation(rng):
    # randomization z against the permutation distribution
    w = knn_weights(random_points(60, 2), k=3)
    y = rng.normal(size=60)
    res = morans_i(y, w, permutations=0)
    sims = np.array([morans_i(rng.permutation(y), w, permutations=0).I for _ in range(4000)])
    assert res.z_norm == pytest.approx((res.I - sims.mean()) / sims.std(), abs=0.1)


# --------------------------------------------------------------------------
# LM diagnostics


def dense_lm(y, X, W):
    n = len(y)
    Z = np.column_stack([np.ones(n), X])
    b = np.linalg.solve(Z.T @ Z, Z.T @ y)
    e = y - Z @ b
    s2 = e @ e / n
    T = np.trace(W.T @ W + W @ W)
    M = np.eye(n) - Z @ np.linalg.inv(Z.T @ Z) @ Z.T
    wxb = W @ Z @ b
    D = wxb @ M @ wxb / s2 + T
    de, dl = e @ W @ e / s2, e @ W @ y / s2
    return [de**2 / T, dl**2 / D, (de - T / D * dl) ** 2 / (T - T * T / D), (dl - de) ** 2 / (D - T)]


def test_lm_matches_dense(rng):
    y, X, w = dgp_error(80, 0.4, [1.0, -0.5], seed=3)
    fit = ols_fit(y, X)
    lm = lm_diagnostics(fit, y, X, w)
    got = [lm.lm_error.statistic, lm.lm_lag.statistic, lm.robust_lm_error.statistic, lm.robust_lm_lag.statistic]
    assert np.allclose(got, dense_lm(y, X, w.sparse.toarray()), rtol=1e-10)
    assert all(t.statistic >= 0 and 0 <= t.pvalue <= 1 for t in (lm.lm_error, lm.lm_lag))


# --------------------------------------------------------------------------
# spatial models


def test_error_model_degenerate_at_zero():
    y, X, w = dgp_error(300, 0.4, [0.5, -0.2], seed=1)
    assert np.allclose(fit_spatial_error(y, X, w, fixed_lambda=0.0).coef, ols_fit(y, X).coef, atol=1e-8)


def test_lag_model_degenerate_at_zero():
    y, X, w = dgp_lag(300, 0.4, [0.5, -0.2], seed=1)
    assert np.allclose(fit_spatial_lag(y, X, w, fixed_rho=0.0).coef, ols_fit(y, X).coef, atol=1e-8)


def test_error_model_null():
    y, X, w = dgp_error(1000, 0.0, [0.4, 0.2], seed=0)
    fit = fit_spatial_error(y, X, w)
    ols = ols_fit(y, X)
    assert abs(fit.lam) <= 0.05
    assert np.all(np.abs(fit.coef - ols.coef) <= ols.se)
    lams = [fit_spatial_error(*dgp_error(1000, 0.0, [0.4, 0.2], seed=s)).lam for s in range(10)]
    assert abs(np.mean(lams)) <= 0.05


def test_error_model_recovery():
    y, X, w = dgp_error(2000, 0.5, [0.4, 0.2], seed=12)
    fit = fit_spatial_error(y, X, w)
    assert abs(fit.lam - 0.5) <= 0.1
    assert np.all(np.abs(fit.coef[1:] - [0.4, 0.2]) <= 0.05)
    assert abs(fit.lam) < 1 and 0 <= fit.pseudo_r2 <= 1


def test_lag_model_null():
    # the instruments' strength grows with |beta|; a single beta of 0.5 leaves rho-hat sd near 0.1 at this n
    assert abs(fit_spatial_lag(*dgp_lag(1000, 0.0, [1.0, -0.5], seed=0)).rho) <= 0.05
    rhos = [fit_spatial_lag(*dgp_lag(1000, 0.0, [1.0, -0.5], seed=s)).rho for s in range(10)]
    assert abs(np.mean(rhos)) <= 0.05


def test_lag_model_recovery():
    y, X, w = dgp_lag(2000, 0.4, [0.5], seed=14)
    fit = fit_spatial_lag(y, X, w)
    assert abs(fit.rho - 0.4) <= 0.1
    assert 0 <= fit.pseudo_r2 <= 1 and 0 <= fit.spatial_pseudo_r2 <= 1


def test_models_deterministic():
    y, X, w = dgp_error(200, 0.3, [1.0], seed=2)
    a, b = fit_spatial_error(y, X, w), fit_spatial_error(y, X, w)
    assert a.lam == b.lam and np.array_equal(a.coef, b.coef)


# --------------------------------------------------------------------------
# model choice


def diag(p_err, p_lag):
    def t(p):
        return LMTest(float(stats.chi2.isf(p, 1)), p)

    return LMDiagnostics(t(0.5), t(0.5), t(p_err), t(p_lag))


@pytest.mark.parametrize("moran_p, p_err, p_lag, choice", [
    (0.071, 0.01, 0.01, "ols"),
    (0.0, 0.0001, 0.26, "error"),
    (0.0, 0.0524, 0.0014, "lag"),
    (0.0, 0.001, 0.01, "error"),
    (0.0, 0.3, 0.4, "ols"),
])
def test_model_select(moran_p, p_err, p_lag, choice):
    assert model_select(moran_p, diag(p_err, p_lag)) == choice
