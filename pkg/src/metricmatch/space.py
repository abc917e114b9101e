"""The feature matrix that nearest-neighbor matching runs on."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEmbeddingError, ValidationError

METHODS = (
    "raw", "nn", "snn", "l1", "rrf", "psm", "psmsq",
    "oracle-union", "oracle-intersection",
)

# A column is "near-constant" when its variance is below this fraction of its
# mean square; scale-free so that importance-scaled columns survive.
NEAR_ZERO_VAR = 1e-8
PERFECT_CORR = 1.0 - 1e-10


@dataclass(frozen=True, eq=False)
class MatchingSpace:
    Z: np.ndarray
    method: str
    labels: tuple = ()

    def __post_init__(self):
        Z = np.array(self.Z, dtype=float, copy=True)
        if Z.ndim == 1:
            Z = Z[:, None]
        if Z.ndim != 2:
            raise ValidationError("matching space must be 2-D")
        if not np.all(np.isfinite(Z)):
            raise ValidationError("matching space contains non-finite entries")
        if self.method not in METHODS:
            raise ValidationError(f"unknown space method {self.method!r}")
        labels = tuple(self.labels) or tuple(f"z{j}" for j in range(Z.shape[1]))
        if len(labels) != Z.shape[1]:
            raise ValidationError("one label per column required")
        Z.setflags(write=False)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def width(self) -> int:
        return self.Z.shape[1]


def near_constant(col: np.ndarray) -> bool:
    var = col.var()
    return bool(var <= NEAR_ZERO_VAR * np.mean(col * col))


def prune_columns(Z: np.ndarray, labels=None):
    """Drop near-constant columns and all but the first of perfectly correlated ones.

    Returns ``(Z_kept, labels_kept, dropped_labels)``.
    """
    Z = np.asarray(Z, dtype=float)
    labels = list(labels) if labels is not None else [f"z{j}" for j in range(Z.shape[1])]
    keep: list[int] = []
    dropped = []
    centered = Z - Z.mean(axis=0)
    norms = np.sqrt((centered**2).sum(axis=0))
    for j in range(Z.shape[1]):
        if near_constant(Z[:, j]):
            dropped.append(labels[j])
            continue
        dup = False
        for i in keep:
            r = centered[:, i] @ centered[:, j] / (norms[i] * norms[j])
            if abs(r) > PERFECT_CORR:
                dup = True
                break
        if dup:
            dropped.append(labels[j])
        else:
            keep.append(j)
    return Z[:, keep], [labels[j] for j in keep], dropped


def pruned_space(Z, method: str, labels=None) -> MatchingSpace:
    Zk, lk, _ = prune_columns(Z, labels)
    if Zk.shape[1] == 0:
        raise DegenerateEmbeddingError(
            f"{method}: every learned feature was constant or duplicated"
        )
    return MatchingSpace(Zk, method, tuple(lk))
