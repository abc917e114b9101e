"""Nearest-neighbor matching estimators on a matching space.

Matching is one-to-one with replacement under Euclidean distance. Distances
are computed exactly by brute force, accumulating squared coordinate
differences column by column, so results are reproducible to the last bit and
ties always resolve to the lowest row index.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import MatchingError, ValidationError
from .space import MatchingSpace

ESTIMANDS = ("ATT", "ATUT")
_CHUNK_CELLS = 1 << 22


def _sq_dist_block(Q: np.ndarray, C: np.ndarray) -> np.ndarray:
    d2 = np.zeros((Q.shape[0], C.shape[0]))
    for col in range(Q.shape[1]):
        diff = Q[:, col, None] - C[None, :, col]
        d2 += diff * diff
    return d2


def nearest_rows(Q: np.ndarray, C: np.ndarray, exclude=None, n_neighbors: int = 1):
    """Indices into ``C`` of the nearest rows to each row of ``Q``.

    ``exclude[i]`` (optional) is a column of ``C`` that query ``i`` may not
    pick (itself, for within-group neighbors). Returns ``(idx, sq_dist)`` of
    shape (len(Q), n_neighbors); ties go to the lowest index.
    """
    m = Q.shape[0]
    if C.shape[0] - (exclude is not None) < n_neighbors:
        raise MatchingError(
            f"need at least {n_neighbors} candidates, have {C.shape[0] - (exclude is not None)}"
        )
    idx = np.empty((m, n_neighbors), dtype=np.int64)
    dist = np.empty((m, n_neighbors))
    step = max(1, _CHUNK_CELLS // max(C.shape[0], 1))
    for start in range(0, m, step):
        stop = min(m, start + step)
        d2 = _sq_dist_block(Q[start:stop], C)
        rows = np.arange(stop - start)
        if exclude is not None:
            d2[rows, exclude[start:stop]] = np.inf
        for r in range(n_neighbors):
            j = d2.argmin(axis=1)
            idx[start:stop, r] = j
            dist[start:stop, r] = d2[rows, j]
            d2[rows, j] = np.inf
    return idx, dist


@dataclass(frozen=True, eq=False)
class MatchResult:
    """Matched pairs and the resulting effect estimate.

    ``units`` are the rows in the estimand group (treated for ATT, controls
    for ATUT) and ``matches`` their nearest opposite-status rows. ``estimate``
    is always oriented as treated minus control.
    """

    estimand: str
    units: np.ndarray
    matches: np.ndarray
    distances: np.ndarray
    y_unit: np.ndarray
    y_match: np.ndarray
    estimate: float
    variance: float = float("nan")

    @property
    def se(self) -> float:
        return float(np.sqrt(self.variance)) if self.variance >= 0 else float("nan")

    @property
    def ci95(self) -> tuple:
        return (self.estimate - 1.959963984540054 * self.se,
                self.estimate + 1.959963984540054 * self.se)

    def with_variance(self, variance: float) -> "MatchResult":
        return MatchResult(self.estimand, self.units, self.matches, self.distances,
                           self.y_unit, self.y_match, self.estimate, float(variance))

    def summary(self) -> dict:
        lo, hi = self.ci95
        return {
            "estimand": self.estimand,
            "n_units": int(self.units.size),
            "n_distinct_matches": int(np.unique(self.matches).size),
            "estimate": self.estimate,
            "variance": self.variance,
            "se": self.se,
            "ci95": [lo, hi],
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "distance", "y_i", "y_j"])
            for row in zip(self.units, self.matches, self.distances, self.y_unit, self.y_match):
                w.writerow([int(row[0]), int(row[1]), repr(float(row[2])),
                            repr(float(row[3])), repr(float(row[4]))])

    def write_json(self, path, extra: dict | None = None) -> None:
        with open(path, "w") as fh:
            json.dump({**self.summary(), **(extra or {})}, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _groups(ds: Dataset, estimand: str):
    if estimand not in ESTIMANDS:
        raise ValidationError(f"unknown estimand {estimand!r}")
    treated = np.flatnonzero(ds.d == 1)
    control = np.flatnonzero(ds.d == 0)
    units, pool = (treated, control) if estimand == "ATT" else (control, treated)
    if units.size == 0:
        raise MatchingError(f"{estimand}: estimand group is empty")
    if pool.size == 0:
        raise MatchingError(f"{estimand}: no opposite-status units to match to")
    return units, pool


def nearest_neighbor_match(space: MatchingSpace, ds: Dataset, estimand: str = "ATT",
                           variance: bool = True, J: int = 2) -> MatchResult:
    """1-NN matching with replacement and the matching ATT / ATUT.

    When ``variance`` is set the Abadie-Imbens variance (``J`` same-group
    neighbors for the conditional variances) is attached.
    """
    if space.n != ds.n:
        raise ValidationError(f"space has {space.n} rows, dataset has {ds.n}")
    units, pool = _groups(ds, estimand)
    Z = space.Z
    idx, d2 = nearest_rows(Z[units], Z[pool])
    matches = pool[idx[:, 0]]
    y_u = ds.y[units]
    y_m = ds.y[matches]
    diff = y_u - y_m if estimand == "ATT" else y_m - y_u
    res = MatchResult(estimand, units, matches, np.sqrt(d2[:, 0]), y_u, y_m,
                      float(diff.mean()))
    if variance:
        res = res.with_variance(abadie_imbens_variance(res, ds, space, J))
    return res


def conditional_variances(space: MatchingSpace, ds: Dataset, J: int = 2) -> np.ndarray:
    """Per-unit outcome variance from the ``J`` nearest same-status neighbors.

    sigma2_i = J / (J + 1) * (y_i - mean of the neighbors' y)^2.
    """
    if J < 1:
        raise ValidationError("J must be at least 1")
    out = np.empty(ds.n)
    for t in (0, 1):
        rows = np.flatnonzero(ds.d == t)
        if rows.size < J + 1:
            raise MatchingError(
                f"treatment group {t} has {rows.size} units; need at least {J + 1} "
                f"for {J}-neighbor variance estimates"
            )
        Zg = space.Z[rows]
        nb, _ = nearest_rows(Zg, Zg, exclude=np.arange(rows.size), n_neighbors=J)
        yg = ds.y[rows]
        out[rows] = J / (J + 1.0) * (yg - yg[nb].mean(axis=1)) ** 2
    return out


def abadie_imbens_variance(result: MatchResult, ds: Dataset, space: MatchingSpace,
                           J: int = 2) -> float:
    """Abadie-Imbens variance of the single-match ATT (or ATUT) estimator.

    V = [sum over group (effect_i - estimate)^2
         + sum over pool K_j (K_j - 1) sigma2_j] / N_group^2,
    where K_j counts how often pool unit j serves as a match.
    """
    sigma2 = conditional_variances(space, ds, J)
    n_group = result.units.size
    effects = result.y_unit - result.y_match
    if result.estimand == "ATUT":
        effects = -effects
    het = float(np.sum((effects - result.estimate) ** 2))
    used, counts = np.unique(result.matches, return_counts=True)
    reuse = float(np.sum(counts * (counts - 1.0) * sigma2[used]))
    return (het + reuse) / n_group**2


@dataclass(frozen=True, eq=False)
class MetricCheckReport:
    condition: str
    C: float
    min_ratio: float
    n_pairs: int
    satisfied: bool
    violations: list

    def summary(self) -> dict:
        return {
            "condition": self.condition,
            "C": self.C,
            "min_ratio": self.min_ratio,
            "n_pairs": self.n_pairs,
            "satisfied": self.satisfied,
            "violations": [list(v) for v in self.violations],
        }


def metric_condition_check(space: MatchingSpace, ds: Dataset, score, C: float = 1.0,
                           n_pairs: int = 20000, seed: int = 0, condition: str = "PGM_C",
                           max_violations: int = 20) -> MetricCheckReport:
    """Empirical check of d(x, y) >= C |score(x) - score(y)| over pairs of rows.

    All pairs are used when there are at most ``n_pairs`` of them, otherwise a
    seeded uniform sample. Pairs with equal scores are skipped.
    """
    if condition not in ("PSM", "PGM_C", "PGM_T"):
        raise ValidationError(f"unknown condition {condition!r}")
    score = np.asarray(score, dtype=float)
    if score.shape != (ds.n,) or space.n != ds.n:
        raise ValidationError("score and space must have one entry per row")
    n = ds.n
    total = n * (n - 1) // 2
    if total <= n_pairs:
        i, j = np.triu_indices(n, k=1)
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, n, n_pairs)
        j = rng.integers(0, n - 1, n_pairs)
        j = j + (j >= i)
    ds_ = np.abs(score[i] - score[j])
    keep = ds_ > 0
    if not keep.any():
        raise MatchingError("all sampled score differences are zero; the ratio is undefined")
    i, j, ds_ = i[keep], j[keep], ds_[keep]
    diff = space.Z[i] - space.Z[j]
    dist = np.sqrt((diff * diff).sum(axis=1))
    ratio = dist / ds_
    order = np.argsort(ratio, kind="stable")
    bad = [(int(i[o]), int(j[o]), float(ratio[o])) for o in order[:max_violations]
           if ratio[o] < C]
    m = float(ratio[order[0]])
    return MetricCheckReport(condition, float(C), m, int(i.size), m >= C, bad)
