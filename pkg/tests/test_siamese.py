import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metricmatch.dataset import Dataset
from metricmatch.errors import ConfigError, ValidationError
from metricmatch.neuralnet import init_network
from metricmatch.siamese import (PairBatch, SnnConfig, contrastive_loss,
                                 default_outcome_snn_cfg, default_treatment_snn_cfg,
                                 outcome_pair_loss, sample_pairs, snn_grad_check,
                                 snn_matching_space, train_snn)

from conftest import make_dataset


def test_contrastive_loss_values():
    a, b = np.array([0.0, 0.0]), np.array([0.3, 0.4])
    assert contrastive_loss(a, b, 1) == pytest.approx(0.25)
    assert contrastive_loss(a, b, 0) == pytest.approx(0.25)
    assert contrastive_loss(a, 4 * b, 0) == 0.0
    assert contrastive_loss(a, b, 0, margin=2.0) == pytest.approx(2.25)
    with pytest.raises(ValidationError):
        contrastive_loss(a, b, 0, margin=0.0)


def test_outcome_pair_loss_values():
    a, b = np.array([0.0]), np.array([3.0])
    assert outcome_pair_loss(a, b, 1.0, 2.0) == pytest.approx(4.0)
    assert outcome_pair_loss(a, b, 5.0, 2.0) == 0.0
    rows = outcome_pair_loss(np.zeros((2, 1)), np.array([[1.0], [2.0]]), [0, 0], [1, 0])
    np.testing.assert_allclose(rows, [0.0, 4.0])


def _tower(seed, k, hidden, act):
    rng = np.random.default_rng(seed)
    acts = [act] * (len(hidden) - 1) + ["identity"]
    return init_network([k, *hidden], acts, rng, has_output=False), rng


@pytest.mark.parametrize("act", ["relu", "sigmoid", "elu", "identity"])
@pytest.mark.parametrize("loss", ["contrastive", "outcome-pair"])
def test_siamese_gradients(act, loss):
    net, rng = _tower(3, 4, (10, 3), act)
    Xi, Xj = rng.normal(size=(30, 4)), rng.normal(size=(30, 4))
    if loss == "contrastive":
        target = (np.arange(30) % 2).astype(float)
        margin = 2.0
    else:
        target = (rng.normal(size=30), rng.normal(size=30))
        margin = 1.0
    assert snn_grad_check(net, Xi, Xj, target, loss, margin) < 1e-4


def test_pair_batch_validation():
    with pytest.raises(ValidationError):
        PairBatch([0, 1], [0, 2], 3)
    with pytest.raises(ValidationError):
        PairBatch([0, 1], [1, 3], 3)
    assert len(PairBatch([0, 1], [1, 2], 3)) == 2


def test_contrastive_pairs_are_labelled_by_class():
    ds = make_dataset(n=50)
    pairs = sample_pairs(ds, default_treatment_snn_cfg(), n_pairs=1001)
    same = ds.d[pairs.i] == ds.d[pairs.j]
    np.testing.assert_array_equal(same.astype(int), pairs.similar)
    assert pairs.similar.sum() == 501


def test_outcome_pairs_carry_outcomes():
    ds = make_dataset(n=30)
    pairs = sample_pairs(ds, default_outcome_snn_cfg(), n_pairs=200)
    np.testing.assert_array_equal(pairs.y_i, ds.y[pairs.i])
    assert np.all(pairs.i != pairs.j)


def test_config_roundtrip_and_validation():
    cfg = SnnConfig(hidden=(8, 2), margin=2.0)
    assert SnnConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.activations == ("relu", "identity")
    with pytest.raises(ConfigError):
        SnnConfig(hidden=())
    with pytest.raises(ConfigError):
        SnnConfig(activations=("relu",))


def test_outcome_tower_learns_ordering():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(300, 3))
    y = 2 * X[:, 0]
    ds = Dataset(X, np.arange(300) % 2, y)
    cfg = SnnConfig(hidden=(8, 1), loss="outcome-pair", subsample="pooled", epochs=15,
                    pairs_per_unit=10, learning_rate=1e-2)
    net = train_snn(ds, cfg)
    e = net.embed(X)[:, 0]
    assert abs(np.corrcoef(e, y)[0, 1]) > 0.95
    assert net.loss_trace[-1] < net.loss_trace[0]


def test_snn_space_rules():
    ds = make_dataset(n=80, k=3)
    small = {"epochs": 2, "pairs_per_unit": 3, "hidden": (4, 2)}
    sp = snn_matching_space(ds, default_outcome_snn_cfg(**small),
                            default_treatment_snn_cfg(**small))
    assert sp.method == "snn" and sp.width <= 4
    with pytest.raises(ConfigError):
        snn_matching_space(ds, default_treatment_snn_cfg(), default_outcome_snn_cfg())
    with pytest.raises(ConfigError):
        snn_matching_space(ds, default_outcome_snn_cfg(**small),
                           default_treatment_snn_cfg(**small), "ATUT")


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 5.0))
def test_losses_nonnegative_and_symmetric(seed, margin):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(10, 3)), rng.normal(size=(10, 3))
    sim = rng.integers(0, 2, 10)
    la = contrastive_loss(a, b, sim, margin)
    np.testing.assert_allclose(la, contrastive_loss(b, a, sim, margin))
    assert np.all(la >= 0)
    ya, yb = rng.normal(size=10), rng.normal(size=10)
    lo = outcome_pair_loss(a, b, ya, yb)
    np.testing.assert_allclose(lo, outcome_pair_loss(b, a, yb, ya))
    assert np.all(lo >= 0)
