import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metricmatch.errors import DegenerateEmbeddingError, ValidationError
from metricmatch.space import MatchingSpace, near_constant, prune_columns, pruned_space


def test_space_rejects_nonfinite_and_unknown_method():
    with pytest.raises(ValidationError):
        MatchingSpace(np.array([[np.nan]]), "raw")
    with pytest.raises(ValidationError):
        MatchingSpace(np.zeros((2, 1)), "magic")


def test_prune_drops_constant_and_duplicates():
    rng = np.random.default_rng(0)
    a = rng.normal(size=50)
    b = rng.normal(size=50)
    Z = np.column_stack([a, np.full(50, 3.0), -2 * a + 1, b])
    kept, labels, dropped = prune_columns(Z, ["a", "c", "a2", "b"])
    assert labels == ["a", "b"]
    assert dropped == ["c", "a2"]
    np.testing.assert_array_equal(kept, Z[:, [0, 3]])


def test_pruned_space_all_degenerate():
    with pytest.raises(DegenerateEmbeddingError):
        pruned_space(np.ones((10, 3)), "nn")


def test_near_constant_relative():
    assert near_constant(np.full(20, 1e6) + 1e-3 * np.arange(20))
    assert not near_constant(np.arange(20.0))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_prune_is_idempotent(seed, k):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(30, k))
    Z = np.column_stack([Z, Z[:, 0] * 2.0, np.zeros(30)])
    once, labels, _ = prune_columns(Z)
    twice, labels2, dropped = prune_columns(once, labels)
    assert labels2 == labels and dropped == []
    np.testing.assert_array_equal(once, twice)
