import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from metricmatch.dataset import Dataset
from metricmatch.errors import RankDeficiencyError, ValidationError
from metricmatch.parametric import fit_logit, logit_design, ols_att, psm_matching_space

from conftest import make_dataset


def _logit_data(seed, n=400, k=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, k))
    d = (rng.random(n) < 1 / (1 + np.exp(-(0.3 + X @ np.linspace(0.5, -0.5, k))))).astype(int)
    return Dataset(X, d, rng.normal(size=n), tuple(f"x{j}" for j in range(k)))


def test_logit_matches_generic_optimizer():
    ds = _logit_data(0)
    fit = fit_logit(ds)
    A = np.column_stack([np.ones(ds.n), ds.X])

    def nll(b):
        eta = A @ b
        return np.sum(np.logaddexp(0, eta) - ds.d * eta)

    ref = minimize(nll, np.zeros(A.shape[1]), method="BFGS", options={"gtol": 1e-10}).x
    np.testing.assert_allclose(np.r_[fit.intercept, fit.coef], ref, atol=1e-5)
    assert fit.converged
    assert np.all(np.diff(fit.loglik_trace) >= -1e-12)


def test_logit_intercept_only_is_log_odds():
    d = np.array([1, 0, 0, 1, 0, 0, 0, 1])
    X = np.column_stack([np.ones(8)])
    fit = fit_logit(Dataset(X + np.arange(8)[:, None] * 0, d, np.zeros(8)))
    assert fit.coef.size == 0
    assert fit.intercept == pytest.approx(np.log(3 / 5), abs=1e-9)


def test_quadratic_design_names_and_pruning():
    ds = make_dataset(k=2)
    Z, names = logit_design(ds, quadratic=True)
    assert names == ["x0", "x1", "x0^2", "x1^2"]
    binary = Dataset(np.column_stack([ds.X[:, 0], ds.d]), ds.d, ds.y, ("a", "b"))
    _, names = logit_design(binary, quadratic=True)
    assert "b^2" not in names


def test_psm_space_is_propensity():
    ds = _logit_data(1)
    fit = fit_logit(ds)
    sp = psm_matching_space(ds, fit)
    assert sp.width == 1 and sp.method == "psm"
    np.testing.assert_array_equal(sp.Z[:, 0], fit.propensity)


def test_logit_needs_both_classes():
    with pytest.raises(ValidationError):
        fit_logit(Dataset(np.zeros((4, 1)), np.zeros(4, int), np.zeros(4)))


def test_ols_att_and_hc1():
    rng = np.random.default_rng(2)
    n = 300
    X = rng.normal(size=(n, 2))
    d = (rng.random(n) < 0.5).astype(int)
    y = 1.5 * d + X @ np.array([1.0, -2.0]) + rng.normal(size=n) * (1 + d)
    est, se = ols_att(Dataset(X, d, y))
    A = np.column_stack([np.ones(n), d, X])
    beta = np.linalg.solve(A.T @ A, A.T @ y)
    u = y - A @ beta
    inv = np.linalg.inv(A.T @ A)
    cov = inv @ (A.T * u**2) @ A @ inv * n / (n - 4)
    assert est == pytest.approx(beta[1], rel=1e-10)
    assert se == pytest.approx(np.sqrt(cov[1, 1]), rel=1e-10)


def test_ols_rank_deficiency_names_columns():
    ds = make_dataset(k=2)
    X = np.column_stack([ds.X, ds.X[:, 0] * 2])
    with pytest.raises(RankDeficiencyError, match="x0"):
        ols_att(Dataset(X, ds.d, ds.y, ("x0", "x1", "dup")))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_logit_score_equations_hold(seed):
    ds = _logit_data(seed, n=150, k=2)
    fit = fit_logit(ds)
    A = np.column_stack([np.ones(ds.n), ds.X])
    score = A.T @ (ds.d - fit.propensity) / ds.n
    assert np.max(np.abs(score)) < 1e-8
