import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metricmatch.errors import SpecError
from metricmatch.simgen import (DgpSpec, counterexample_att, counterexample_propensity,
                                gen_ihdp_surface, generate, oracle_matching_space,
                                random_nn_functions)


def test_counterexample_att_closed_form():
    closed = 1.0 / (2 + 4 * math.log(4 / 3) - 12 * math.log(5 / 4))
    assert counterexample_att() == pytest.approx(closed, rel=1e-10)
    assert counterexample_att() == pytest.approx(2.11414, abs=1e-5)


def test_counterexample_propensity_range():
    x = np.linspace(-1, 1, 101)
    p = counterexample_propensity(x)
    assert p.min() >= 0 and p.max() <= 1
    assert counterexample_propensity(-0.5) > counterexample_propensity(0.5)


@pytest.mark.parametrize("kind", ["sparse-linear", "sparse-linear-sq"])
def test_sparse_support_layout(kind):
    ds, info = generate(DgpSpec(kind=kind, n=500, seed=4))
    assert ds.k == 50
    np.testing.assert_allclose(ds.truth.y1 - ds.truth.y0, 1.0)
    if kind == "sparse-linear":
        assert len(info.outcome) == 8 and len(info.treatment) == 8
        assert len(info.intersection) == 6 and len(info.union) == 10
    sp = oracle_matching_space(ds, info, "intersection")
    assert sp.width == len(info.intersection)


def test_generation_is_seeded():
    a, _ = generate(DgpSpec(n=300, seed=9))
    b, _ = generate(DgpSpec(n=300, seed=9))
    c, _ = generate(DgpSpec(n=300, seed=10))
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)
    assert not np.array_equal(a.X, c.X)


def test_sparse_linear_frozen_draw():
    ds, info = generate(DgpSpec(n=5, k=20, seed=0))
    assert info.outcome == FROZEN_OUTCOME_SUPPORT
    np.testing.assert_allclose(ds.y, FROZEN_Y, rtol=1e-12)


def test_random_nn_calibration():
    spec = DgpSpec(kind="random-nn", n=4000, k=20, seed=3)
    f_y, f_d, _, _ = random_nn_functions(spec)
    X = np.random.default_rng(0).standard_normal((20000, 20))
    assert f_d(X).std() == pytest.approx(math.sqrt(2), rel=0.05)
    assert f_y(X).std() == pytest.approx(math.sqrt(2), rel=0.05)
    ds, info = generate(spec)
    assert info is None
    naive = ds.y[ds.d == 1].mean() - ds.y[ds.d == 0].mean()
    assert naive > 1.0


def test_unknown_kind_and_bad_support():
    with pytest.raises(SpecError):
        DgpSpec(kind="nope")
    with pytest.raises(SpecError):
        generate(DgpSpec(k=5))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 10))
def test_ihdp_surface_att_is_exact(seed, att):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(80, 5)) * 0.5
    d = (rng.random(80) < 0.3).astype(int)
    d[0] = 1
    ds = gen_ihdp_surface(X, d, seed, att=att)
    assert np.mean(ds.truth.tau[d == 1]) == pytest.approx(att, abs=1e-9)
    np.testing.assert_allclose(ds.y, np.where(d == 1, ds.truth.y1, ds.truth.y0))


# regression guard on the seeded stream layout (captured from a reviewed run)
FROZEN_OUTCOME_SUPPORT = (0, 7, 8, 10, 16, 17, 18, 19)
FROZEN_Y = [-1.7086110399847458, -1.3616440669288163, 2.402958817394388,
            1.3429573161777881, 0.16450428713499754]
