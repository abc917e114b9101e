"""Observational data model, CSV ingestion and preprocessing helpers."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataParseError, SchemaError, ValidationError


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Truth:
    """Potential outcomes and conditional effects for simulated data."""

    y0: np.ndarray
    y1: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        for name in ("y0", "y1", "tau"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def take(self, rows) -> "Truth":
        return Truth(self.y0[rows], self.y1[rows], self.tau[rows])


@dataclass(frozen=True, eq=False)
class Dataset:
    """Covariates ``X`` (n x k), binary treatment ``d`` and outcome ``y``.

    ``index`` holds the original row id of every row, so subsets and
    oversampled copies can be traced back. ``subset=True`` marks the output of
    :func:`split_by_treatment`, which is allowed to hold a single class.
    """

    X: np.ndarray
    d: np.ndarray
    y: np.ndarray
    names: tuple = ()
    truth: Truth | None = None
    index: np.ndarray | None = None
    subset: bool = False

    def __post_init__(self):
        X = np.array(self.X, dtype=float, copy=True)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValidationError(f"X must be 2-D, got shape {X.shape}")
        n, k = X.shape
        d = np.asarray(self.d)
        y = np.asarray(self.y, dtype=float)
        if d.shape != (n,) or y.shape != (n,):
            raise ValidationError(
                f"shape mismatch: X {X.shape}, d {d.shape}, y {y.shape}"
            )
        if n < 2 and not self.subset:
            raise ValidationError(f"need at least 2 rows, got {n}")
        if k < 1:
            raise ValidationError("need at least one covariate")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise ValidationError("X and y must be finite")
        if not np.all((d == 0) | (d == 1)):
            bad = np.unique(d[(d != 0) & (d != 1)])
            raise ValidationError(f"treatment values outside {{0,1}}: {bad[:5].tolist()}")
        d = d.astype(np.int64)
        if not self.subset and (d.sum() == 0 or d.sum() == n):
            raise ValidationError("both treatment classes must be non-empty")
        names = tuple(self.names) if self.names else tuple(f"x{j}" for j in range(k))
        if len(names) != k:
            raise ValidationError(f"{len(names)} names for {k} covariates")
        index = np.arange(n) if self.index is None else np.asarray(self.index)
        if index.shape != (n,):
            raise ValidationError("index must have one entry per row")
        if self.truth is not None:
            t = self.truth
            if t.y0.shape != (n,) or t.y1.shape != (n,) or t.tau.shape != (n,):
                raise ValidationError("truth arrays must have one entry per row")
            if not np.array_equal(y, np.where(d == 1, t.y1, t.y0)):
                raise ValidationError("observed y must equal the selected potential outcome")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "d", _frozen(d, np.int64))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "index", _frozen(index, np.int64))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def n_treated(self) -> int:
        return int(self.d.sum())

    @property
    def treated_fraction(self) -> float:
        return self.n_treated / self.n

    def take(self, rows, subset: bool | None = None) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(
            self.X[rows],
            self.d[rows],
            self.y[rows],
            self.names,
            None if self.truth is None else self.truth.take(rows),
            self.index[rows],
            self.subset if subset is None else subset,
        )

    def replace(self, **changes) -> "Dataset":
        fields = dict(
            X=self.X, d=self.d, y=self.y, names=self.names,
            truth=self.truth, index=self.index, subset=self.subset,
        )
        fields.update(changes)
        return Dataset(**fields)


def load_csv(
    path: str | os.PathLike,
    treatment: str,
    outcome: str | None,
    covariates: list[str] | None = None,
) -> Dataset:
    """Read a comma-separated file with a header row.

    ``covariates`` defaults to every column other than treatment and outcome.
    Row order is preserved. Empty or non-numeric cells are a hard error.
    With ``outcome=None`` (covariate-only files) the outcome is all zeros.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataParseError(f"{path}: empty file") from None
        if covariates is None:
            covariates = [h for h in header if h not in (treatment, outcome)]
        wanted = [treatment, *([outcome] if outcome is not None else []), *covariates]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}; header is {header}")
        pos = [header.index(c) for c in wanted]
        rows = []
        for line_no, rec in enumerate(reader, start=2):
            if not rec or all(not cell.strip() for cell in rec):
                continue
            if len(rec) != len(header):
                raise DataParseError(
                    f"{path}:{line_no}: expected {len(header)} fields, got {len(rec)}",
                    row=line_no,
                )
            vals = []
            for p, name in zip(pos, wanted):
                cell = rec[p].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise DataParseError(
                        f"{path}:{line_no}: column {name!r} has non-numeric value {cell!r}",
                        row=line_no, col=name,
                    ) from None
                if not math.isfinite(v):
                    raise DataParseError(
                        f"{path}:{line_no}: column {name!r} is not finite ({cell!r})",
                        row=line_no, col=name,
                    )
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataParseError(f"{path}: no data rows")
    arr = np.array(rows)
    d = arr[:, 0]
    if not np.all((d == 0) | (d == 1)):
        bad_row = int(np.flatnonzero((d != 0) & (d != 1))[0])
        raise ValidationError(
            f"{path}: treatment column {treatment!r} must be 0/1, "
            f"found {d[bad_row]:g} in data row {bad_row + 1}"
        )
    if outcome is None:
        return Dataset(arr[:, 1:], d.astype(np.int64), np.zeros(len(arr)), tuple(covariates))
    return Dataset(arr[:, 2:], d.astype(np.int64), arr[:, 1], tuple(covariates))


def with_squares(ds: Dataset, columns: list[str]) -> Dataset:
    """Append ``name^2`` columns for the named covariates."""
    extra = []
    for c in columns:
        if c not in ds.names:
            raise SchemaError(f"cannot square unknown covariate {c!r}")
        extra.append(ds.X[:, ds.names.index(c)] ** 2)
    if not extra:
        return ds
    return ds.replace(
        X=np.column_stack([ds.X, *extra]),
        names=ds.names + tuple(f"{c}^2" for c in columns),
    )


def select_columns(ds: Dataset, columns: list[str]) -> Dataset:
    missing = [c for c in columns if c not in ds.names]
    if missing:
        raise SchemaError(f"unknown covariate(s) {missing}")
    idx = [ds.names.index(c) for c in columns]
    return ds.replace(X=ds.X[:, idx], names=tuple(columns))


@dataclass(frozen=True, eq=False)
class StandardizationParams:
    mean: np.ndarray
    sd: np.ndarray
    constant: np.ndarray = field(default=None)

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.sd

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.sd + self.mean

    @property
    def flagged(self) -> list[int]:
        return np.flatnonzero(self.constant).tolist()


def standardize(ds: Dataset, columns=None) -> tuple[Dataset, StandardizationParams]:
    """Center and scale covariates to sample mean 0 and sample sd 1.

    Constant columns are centered with divisor 1 and reported in
    ``params.constant``. ``columns`` (a boolean mask or index list) limits the
    transform; other columns pass through with mean 0 and sd 1 recorded.
    """
    X = ds.X
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1) if ds.n > 1 else np.zeros(ds.k)
    constant = ~(sd > 0)
    sd = np.where(constant, 1.0, sd)
    if columns is not None:
        mask = np.zeros(ds.k, dtype=bool)
        mask[np.asarray(columns)] = True
        mean = np.where(mask, mean, 0.0)
        sd = np.where(mask, sd, 1.0)
        constant = constant & mask
    params = StandardizationParams(_frozen(mean), _frozen(sd), _frozen(constant, bool))
    return ds.replace(X=params.transform(X)), params


def split_by_treatment(ds: Dataset) -> tuple[Dataset, Dataset]:
    """Partition rows into (control, treated); ``index`` keeps the original ids."""
    if ds.n_treated in (0, ds.n):
        raise ValidationError("split_by_treatment needs both treatment classes")
    control = ds.take(np.flatnonzero(ds.d == 0), subset=True)
    treated = ds.take(np.flatnonzero(ds.d == 1), subset=True)
    return control, treated


def subsample(ds: Dataset, which: str) -> Dataset:
    """Rows used for training: ``control``, ``treated`` or ``pooled``."""
    if which == "pooled":
        return ds
    if which not in ("control", "treated"):
        raise ValidationError(f"unknown subsample {which!r}")
    control, treated = split_by_treatment(ds)
    return control if which == "control" else treated


def oversample_treated(
    ds: Dataset, threshold: float = 0.10, target: float = 0.10, seed: int = 0
) -> Dataset:
    """Duplicate treated rows until they make up at least ``target`` of the sample.

    Nothing happens unless the treated fraction is below ``threshold``. Only
    meant for network training; matching always runs on the original rows.
    """
    if ds.n_treated in (0, ds.n):
        raise ValidationError("oversampling needs both treatment classes")
    if ds.treated_fraction >= threshold:
        return ds
    n, t = ds.n, ds.n_treated
    extra = max(0, math.ceil((target * n - t) / (1.0 - target)))
    while (t + extra) / (n + extra) < target:
        extra += 1
    rng = np.random.default_rng(seed)
    treated_rows = np.flatnonzero(ds.d == 1)
    picks = rng.choice(treated_rows, size=extra, replace=True)
    return ds.take(np.concatenate([np.arange(n), picks]))
