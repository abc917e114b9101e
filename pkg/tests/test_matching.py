import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metricmatch.dataset import Dataset
from metricmatch.errors import MatchingError, ValidationError
from metricmatch.matching import (abadie_imbens_variance, conditional_variances,
                                  metric_condition_check, nearest_neighbor_match, nearest_rows)
from metricmatch.space import MatchingSpace

from oracles import brute_force_ai_variance, brute_force_match


def _toy():
    X = np.array([0.0, 2.0, 0.1, 1.9, 5.0])
    d = np.array([1, 1, 0, 0, 0])
    y = np.array([3.0, 5.0, 1.0, 2.0, 10.0])
    ds = Dataset(X[:, None], d, y, ("x",))
    return ds, MatchingSpace(X[:, None], "raw")


def test_toy_att_and_atut():
    ds, sp = _toy()
    att = nearest_neighbor_match(sp, ds, "ATT", variance=False)
    np.testing.assert_array_equal(att.matches, [2, 3])
    assert att.estimate == pytest.approx(2.5)
    atut = nearest_neighbor_match(sp, ds, "ATUT", variance=False)
    np.testing.assert_array_equal(atut.matches, [0, 1, 1])
    assert atut.estimate == pytest.approx(0.0)


def test_toy_variance_frozen():
    ds = Dataset(np.arange(8.0)[:, None], [1, 0, 1, 0, 1, 0, 0, 1],
                 [2.0, 1.0, 4.0, 0.5, 3.0, 2.5, 1.5, 6.0], ("x",))
    sp = MatchingSpace(ds.X, "raw")
    res = nearest_neighbor_match(sp, ds)
    ref = brute_force_ai_variance(ds.X, ds.d, ds.y, res.matches, res.units, res.estimate)
    assert res.variance == pytest.approx(ref, rel=1e-12)
    assert res.variance == pytest.approx(79 / 192, rel=1e-12)


def test_ties_go_to_lowest_index():
    Q = np.array([[0.0]])
    C = np.array([[1.0], [-1.0], [1.0]])
    idx, d2 = nearest_rows(Q, C)
    assert idx[0, 0] == 0 and d2[0, 0] == 1.0


def test_nearest_rows_excludes_self():
    C = np.array([[0.0], [0.1], [5.0]])
    idx, _ = nearest_rows(C, C, exclude=np.arange(3), n_neighbors=2)
    np.testing.assert_array_equal(idx, [[1, 2], [0, 2], [1, 0]])


def test_errors():
    ds, sp = _toy()
    with pytest.raises(ValidationError):
        nearest_neighbor_match(sp, ds, "ATE")
    with pytest.raises(ValidationError):
        nearest_neighbor_match(MatchingSpace(np.zeros((3, 1)), "raw"), ds)
    one = Dataset(np.arange(4.0)[:, None], [1, 0, 0, 0], np.zeros(4))
    with pytest.raises(MatchingError):
        conditional_variances(MatchingSpace(one.X, "raw"), one)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(6, 80), st.integers(1, 6),
       st.sampled_from(["ATT", "ATUT"]), st.booleans())
def test_matches_equal_brute_force(seed, n, z, estimand, coarse):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(n, z))
    if coarse:
        Z = np.round(Z)
    d = rng.integers(0, 2, n)
    d[:3], d[3:6] = 0, 1
    y = rng.normal(size=n)
    ds = Dataset(Z, d, y)
    res = nearest_neighbor_match(MatchingSpace(Z, "raw"), ds, estimand)
    units, matches, est = brute_force_match(Z, d, y, estimand)
    np.testing.assert_array_equal(res.units, units)
    np.testing.assert_array_equal(res.matches, matches)
    assert res.estimate == est
    ref = brute_force_ai_variance(Z, d, y, matches, units, est, estimand)
    assert res.variance == pytest.approx(ref, rel=1e-9, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-5, 5), st.floats(0.1, 10))
def test_estimate_equivariance(seed, shift, scale):
    rng = np.random.default_rng(seed)
    n = 40
    Z = rng.normal(size=(n, 2))
    d = np.tile([0, 1], n // 2)
    y = rng.normal(size=n)
    sp = MatchingSpace(Z, "raw")
    base = nearest_neighbor_match(sp, Dataset(Z, d, y))
    moved = nearest_neighbor_match(sp, Dataset(Z, d, scale * y + shift))
    assert moved.estimate == pytest.approx(scale * base.estimate, abs=1e-9)
    assert moved.variance == pytest.approx(scale**2 * base.variance, rel=1e-7, abs=1e-12)


def test_constant_effect_recovered_exactly():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(50, 1))
    d = np.tile([0, 1], 25)
    Xp = np.where(d[:, None] == 1, X, X)
    X[d == 1] = X[d == 0]
    y = 3 * X[:, 0] + 2.0 * d
    res = nearest_neighbor_match(MatchingSpace(X, "raw"), Dataset(X, d, y))
    assert res.estimate == pytest.approx(2.0, abs=1e-12)
    del Xp


def test_metric_check_linear_score():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 3))
    ds = Dataset(X, np.tile([0, 1], 20), np.zeros(40))
    score = X @ np.array([0.6, 0.8, 0.0])
    rep = metric_condition_check(MatchingSpace(X, "raw"), ds, score, C=1.0)
    assert rep.satisfied and rep.min_ratio >= 1.0 - 1e-12
    assert rep.n_pairs == 40 * 39 // 2
    bad = metric_condition_check(MatchingSpace(X, "raw"), ds, 2 * score, C=1.0)
    assert not bad.satisfied and bad.violations
    assert bad.min_ratio == pytest.approx(rep.min_ratio / 2)
