"""Experiment drivers: Monte-Carlo tables, LaLonde, IHDP surfaces, consistency demo.

Every stochastic step draws its seed from ``np.random.SeedSequence`` keyed on
the master seed, the replication index and a stable method code, so results
do not depend on how replications are scheduled across worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset, load_csv, select_columns, standardize, with_squares
from .errors import BenchError, ConfigError, MetricMatchError, SpecError
from .matching import ESTIMANDS, nearest_neighbor_match
from .neuralnet import (NetConfig, default_outcome_cfg, default_treatment_cfg,
                        nn_matching_space, train)
from .parametric import fit_logit, ols_att, psm_matching_space
from .siamese import default_outcome_snn_cfg, default_treatment_snn_cfg, snn_matching_space
from .simgen import (DgpSpec, counterexample_att, gen_counterexample, gen_ihdp_surface,
                     generate, oracle_matching_space)
from .space import METHODS, MatchingSpace
from .varselect import (DEFAULT_RRF_GRID, ForestParams, l1_matching_space, lasso_linear,
                        lasso_logit, rrf_matching_space, rrf_train)

Z95 = 1.959963984540054
METHOD_NAMES = METHODS + ("ols",)
MAX_FAILURE_RATE = 0.05

_METHOD_KEYS = {
    "raw": set(),
    "psm": set(),
    "psmsq": set(),
    "ols": set(),
    "oracle-union": set(),
    "oracle-intersection": set(),
    "nn": {"outcome", "treatment", "restandardize"},
    "snn": {"outcome", "treatment"},
    "l1": {"folds", "penalty_scale"},
    "rrf": {"lambdas", "folds", "n_trees", "mtry", "max_depth", "min_node"},
}


def derive_seed(*keys) -> int:
    """A 32-bit seed determined by the integer keys."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def _method_code(name: str) -> int:
    return zlib.crc32(name.encode())


@dataclass(frozen=True, eq=False)
class MethodSpec:
    """A matching method (or the OLS baseline) with its settings."""

    method: str
    config: dict = field(default_factory=dict)
    estimand: str = "ATT"
    label: str | None = None

    def __post_init__(self):
        if self.method not in METHOD_NAMES:
            raise SpecError(f"unknown method {self.method!r}; choose from {list(METHOD_NAMES)}")
        if self.estimand not in ESTIMANDS:
            raise SpecError(f"unknown estimand {self.estimand!r}")
        if self.method == "ols" and self.estimand != "ATT":
            raise SpecError("the OLS baseline only estimates the ATT")
        unknown = set(self.config) - _METHOD_KEYS[self.method]
        if unknown:
            raise ConfigError(f"method {self.method!r} does not take {sorted(unknown)}")
        object.__setattr__(self, "config", dict(self.config))

    @property
    def name(self) -> str:
        return self.label or self.method

    @property
    def needs_oracle(self) -> bool:
        return self.method.startswith("oracle")

    def to_dict(self) -> dict:
        return {"method": self.method, "config": self.config, "estimand": self.estimand,
                "label": self.label}

    @classmethod
    def parse(cls, item) -> "MethodSpec":
        if isinstance(item, MethodSpec):
            return item
        if isinstance(item, str):
            return cls(item)
        if isinstance(item, dict):
            unknown = set(item) - {"method", "config", "estimand", "label"}
            if unknown:
                raise ConfigError(f"unknown method keys {sorted(unknown)}")
            return cls(**item)
        raise ConfigError(f"cannot read a method from {item!r}")


def parse_methods(items) -> list:
    if isinstance(items, str):
        items = [s.strip() for s in items.split(",") if s.strip()]
    methods = [MethodSpec.parse(m) for m in items]
    if not methods:
        raise ConfigError("no methods given")
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate method names in {names}")
    return methods


def build_space(ms: MethodSpec, ds: Dataset, seed: int, oracle=None) -> MatchingSpace:
    """The matching space of one method on (standardized) ``ds``."""
    m, cfg = ms.method, ms.config
    if m == "raw":
        return MatchingSpace(ds.X, "raw", ds.names)
    if m in ("psm", "psmsq"):
        return psm_matching_space(ds, fit_logit(ds, quadratic=m == "psmsq"))
    if m.startswith("oracle"):
        if oracle is None:
            raise SpecError(f"{m} needs a design with known covariate roles")
        return oracle_matching_space(ds, oracle, m.split("-", 1)[1])
    if m == "nn":
        cy = default_outcome_cfg(ms.estimand, **{"seed": derive_seed(seed, 1),
                                                  **cfg.get("outcome", {})})
        cd = default_treatment_cfg(**{"seed": derive_seed(seed, 2), **cfg.get("treatment", {})})
        return nn_matching_space(ds, cy, cd, ms.estimand, cfg.get("restandardize", False))
    if m == "snn":
        cy = default_outcome_snn_cfg(ms.estimand, **{"seed": derive_seed(seed, 1),
                                                      **cfg.get("outcome", {})})
        cd = default_treatment_snn_cfg(**{"seed": derive_seed(seed, 2),
                                          **cfg.get("treatment", {})})
        return snn_matching_space(ds, cy, cd, ms.estimand)
    if m == "l1":
        kw = {"folds": cfg.get("folds", 5), "penalty_scale": cfg.get("penalty_scale", 1.0)}
        fy = lasso_linear(ds, seed=derive_seed(seed, 1), **kw)
        fd = lasso_logit(ds, seed=derive_seed(seed, 2), **kw)
        return l1_matching_space(ds, fy, fd)
    if m == "rrf":
        params = ForestParams(n_trees=cfg.get("n_trees", 100), mtry=cfg.get("mtry"),
                              max_depth=cfg.get("max_depth", 8),
                              min_node=cfg.get("min_node", 10))
        grid = cfg.get("lambdas", DEFAULT_RRF_GRID)
        folds = cfg.get("folds", 3)
        fy = rrf_train(ds, "outcome", grid, params, derive_seed(seed, 1), folds)
        fd = rrf_train(ds, "treatment", grid, params, derive_seed(seed, 2), folds)
        return rrf_matching_space(ds, fy, fd)
    raise SpecError(f"method {m!r} has no matching space")


def run_method(ms: MethodSpec, ds: Dataset, seed: int, oracle=None) -> tuple[float, float]:
    """``(estimate, standard error)`` for one method on one dataset."""
    if ms.method == "ols":
        return ols_att(ds)
    space = build_space(ms, ds, seed, oracle)
    res = nearest_neighbor_match(space, ds, ms.estimand, variance=True)
    return res.estimate, res.se


def _attempt(ms, ds, seed, oracle=None) -> dict:
    try:
        est, se = run_method(ms, ds, seed, oracle)
        return {"estimate": float(est), "se": float(se), "error": ""}
    except MetricMatchError as exc:
        return {"estimate": math.nan, "se": math.nan, "error": f"{type(exc).__name__}: {exc}"}


def default_jobs() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def _pmap(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


@dataclass
class MethodSummary:
    method: str
    n_ok: int
    n_failed: int
    mean: float
    sd: float
    rmse: float
    mean_se: float
    coverage: float

    def row(self) -> list:
        return [self.method, self.n_ok, self.n_failed, self.mean, self.sd, self.rmse,
                self.mean_se, self.coverage]


SUMMARY_COLUMNS = ["method", "reps", "failures", "mean", "sd", "rmse", "mean_se", "coverage"]


def summarize(name: str, estimates, ses, truth: float, n_failed: int = 0) -> MethodSummary:
    """Mean, sample SD (divisor R - 1) and RMSE (from raw errors) of the estimates.

    These satisfy RMSE^2 = (Mean - truth)^2 + SD^2 (R - 1) / R.
    ``coverage`` is the share of nominal 95% intervals containing ``truth``.
    """
    e = np.asarray(estimates, dtype=float)
    s = np.asarray(ses, dtype=float)
    r = e.size
    if r == 0:
        return MethodSummary(name, 0, n_failed, *(math.nan,) * 5)
    mean = float(e.mean())
    sd = float(e.std(ddof=1)) if r > 1 else 0.0
    rmse = float(np.sqrt(np.mean((e - truth) ** 2)))
    cover = float(np.mean(np.abs(e - truth) <= Z95 * s)) if np.all(np.isfinite(s)) else math.nan
    return MethodSummary(name, r, n_failed, mean, sd, rmse, float(np.mean(s)), cover)


def rmse_identity_gap(s: MethodSummary, truth: float) -> float:
    r = s.n_ok
    lhs = s.rmse**2
    rhs = (s.mean - truth) ** 2 + s.sd**2 * (r - 1) / r
    return abs(lhs - rhs)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def _table(header, rows) -> str:
    cells = [[_fmt(v) for v in r] for r in rows]
    widths = [max(len(h), *(len(c[i]) for c in cells)) if cells else len(h)
              for i, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    return "\n".join(lines)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, float):
        return None if not math.isfinite(obj) else obj
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def _write(path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


@dataclass
class BenchReport:
    """Aggregated Monte-Carlo results; ``wall_clock`` is never written to files."""

    config: dict
    truth: float
    summaries: list
    records: list
    wall_clock: float = 0.0

    def summary(self, name: str) -> MethodSummary:
        for s in self.summaries:
            if s.method == name:
                return s
        raise KeyError(name)

    def table(self) -> str:
        return _table(SUMMARY_COLUMNS, [s.row() for s in self.summaries])

    def csv_text(self) -> str:
        return _csv_text(SUMMARY_COLUMNS, [s.row() for s in self.summaries])

    def records_csv_text(self) -> str:
        cols = ["rep", "method", "data_seed", "estimate", "se", "error"]
        return _csv_text(cols, [[r[c] for c in cols] for r in self.records])

    def to_dict(self) -> dict:
        return _json_safe({
            "config": self.config,
            "truth": self.truth,
            "summary": [dict(zip(SUMMARY_COLUMNS, s.row())) for s in self.summaries],
            "records": self.records,
        })

    def write(self, csv_path=None, json_path=None, records_path=None) -> None:
        if csv_path:
            _write(csv_path, self.csv_text())
        if json_path:
            _write(json_path, json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        if records_path:
            _write(records_path, self.records_csv_text())


def dgp_truth(spec: DgpSpec) -> float:
    if spec.kind == "counterexample":
        return counterexample_att()
    if spec.kind == "ihdp":
        raise SpecError("IHDP truth comes from each simulated surface, not from DgpSpec")
    return float(spec.beta0)


def _replicate(job) -> list:
    dgp, methods, master, rep = job
    data_seed = derive_seed(master, rep)
    ds, oracle = generate(dgp.replace(seed=data_seed))
    ds, _ = standardize(ds)
    out = []
    for ms in methods:
        res = _attempt(ms, ds, derive_seed(master, rep, _method_code(ms.name)), oracle)
        out.append({"rep": rep, "method": ms.name, "data_seed": data_seed, **res})
    return out


def _aggregate(records, methods, truth, reps, what: str) -> list:
    summaries = []
    for ms in methods:
        rows = [r for r in records if r["method"] == ms.name]
        ok = [r for r in rows if not r["error"]]
        failed = len(rows) - len(ok)
        if failed > MAX_FAILURE_RATE * reps:
            first = next(r["error"] for r in rows if r["error"])
            raise BenchError(
                f"{what}: method {ms.name!r} failed in {failed} of {reps} runs "
                f"(limit {MAX_FAILURE_RATE:.0%}); first error: {first}"
            )
        if failed:
            print(f"warning: {ms.name}: {failed} of {reps} runs failed and were excluded",
                  file=sys.stderr)
        summaries.append(summarize(ms.name, [r["estimate"] for r in ok],
                                   [r["se"] for r in ok], truth, failed))
    return summaries


def run_simulation(dgp: DgpSpec, methods, reps: int = 100, seed: int = 0,
                   jobs: int = 1, progress=None) -> BenchReport:
    """Monte-Carlo replications of ``dgp`` scored against its true effect.

    Replication ``r`` draws its data with seed ``derive_seed(seed, r)``; data
    are standardized before any method runs. Failed runs are excluded and
    counted; more than 5% failures for a method aborts the run.
    """
    methods = parse_methods(methods)
    if reps < 1:
        raise ConfigError("reps must be at least 1")
    if dgp.kind == "ihdp":
        raise SpecError("use run_ihdp for IHDP surfaces")
    if dgp.kind in ("random-nn", "counterexample"):
        bad = [m.name for m in methods if m.needs_oracle]
        if bad:
            raise SpecError(f"{bad} need known covariate roles, which {dgp.kind} lacks")
    truth = dgp_truth(dgp)
    t0 = time.perf_counter()
    jobs_list = [(dgp, methods, seed, r) for r in range(reps)]
    chunks = _pmap(_replicate, jobs_list, jobs)
    records = [row for chunk in chunks for row in chunk]
    if progress:
        progress(f"{reps} replications done")
    summaries = _aggregate(records, methods, truth, reps, "simulation")
    config = {"dgp": json.loads(dgp.to_json()), "methods": [m.to_dict() for m in methods],
              "reps": reps, "seed": seed}
    return BenchReport(config, truth, summaries, records, time.perf_counter() - t0)


FULL_PROFILE = {"reps": 1000, "n": 8000}
DESK_PROFILE = {"reps": 100, "n": 2000}


# LaLonde

LALONDE_DEFAULTS = {
    "experimental": "data/lalonde_experimental.csv",
    "composite": "data/lalonde_psid_composite.csv",
    "treatment": "treat",
    "outcome": "re78",
    "covariates": ["age", "education", "black", "hispanic", "married", "nodegree",
                   "re74", "re75", "u74", "u75"],
    "zero_indicators": {"u74": "re74", "u75": "re75"},
    "ols_covariates": ["age", "education", "black", "hispanic", "married", "nodegree",
                       "re74", "re75"],
    "ols_squares": ["age", "education"],
    "methods": ["ols", "psm", "psmsq", "nn", "snn"],
    "reps": 100,
    "seed": 0,
}

LALONDE_COLUMNS = ["method", "estimate", "difference", "se", "ci_low", "ci_high", "runs",
                   "failures"]


@dataclass
class LalondeReport:
    config: dict
    experimental: tuple
    rows: list
    runs: dict
    wall_clock: float = 0.0

    def row(self, name: str) -> dict:
        for r in self.rows:
            if r["method"] == name:
                return r
        raise KeyError(name)

    def _rows(self):
        return [[r[c] for c in LALONDE_COLUMNS] for r in self.rows]

    def table(self) -> str:
        return _table(LALONDE_COLUMNS, self._rows())

    def csv_text(self) -> str:
        return _csv_text(LALONDE_COLUMNS, self._rows())

    def to_dict(self) -> dict:
        return _json_safe({"config": self.config, "rows": self.rows, "runs": self.runs})

    def write(self, csv_path=None, json_path=None) -> None:
        if csv_path:
            _write(csv_path, self.csv_text())
        if json_path:
            _write(json_path, json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def experimental_difference(ds: Dataset) -> tuple[float, float]:
    """Difference in means with the unequal-variance standard error."""
    y1, y0 = ds.y[ds.d == 1], ds.y[ds.d == 0]
    est = float(y1.mean() - y0.mean())
    se = float(np.sqrt(y1.var(ddof=1) / y1.size + y0.var(ddof=1) / y0.size))
    return est, se


def _row(name, est, se, bench, runs=1, failures=0) -> dict:
    return {"method": name, "estimate": est, "difference": est - bench, "se": se,
            "ci_low": est - Z95 * se, "ci_high": est + Z95 * se, "runs": runs,
            "failures": failures}


def load_with_indicators(path, treatment: str, outcome: str, covariates, indicators) -> Dataset:
    """Load ``covariates``, deriving ``name = 1{source == 0}`` for names in ``indicators``."""
    indicators = dict(indicators or {})
    raw = [c for c in covariates if c not in indicators]
    sources = [v for k, v in indicators.items() if k in covariates and v not in raw]
    ds = load_csv(path, treatment, outcome, raw + sources)
    cols = []
    for c in covariates:
        src = indicators.get(c)
        cols.append((ds.X[:, ds.names.index(src)] == 0).astype(float) if src
                    else ds.X[:, ds.names.index(c)])
    return ds.replace(X=np.column_stack(cols), names=tuple(covariates))


def _lalonde_run(job) -> dict:
    ms, ds, seed = job
    return _attempt(ms, ds, seed)


def run_lalonde(config: dict | None = None, jobs: int = 1) -> LalondeReport:
    """Experimental benchmark plus each method on the NSW-treated / PSID-control file.

    Matching methods use ``covariates`` (zero-earnings indicators derived on
    load); OLS uses ``ols_covariates`` plus squares of ``ols_squares``.
    Other methods run once. NN and SNN run ``reps`` times with
    derived seeds; their row reports the mean estimate with a 95% interval of
    mean estimate +/- 1.96 * mean standard error.
    """
    cfg = {**LALONDE_DEFAULTS, **(config or {})}
    unknown = set(cfg) - set(LALONDE_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown lalonde keys {sorted(unknown)}")
    methods = parse_methods(cfg["methods"])
    t0 = time.perf_counter()
    exp = load_csv(cfg["experimental"], cfg["treatment"], cfg["outcome"], cfg["ols_covariates"])
    bench_est, bench_se = experimental_difference(exp)
    comp = load_with_indicators(cfg["composite"], cfg["treatment"], cfg["outcome"],
                                cfg["covariates"], cfg["zero_indicators"])
    std, _ = standardize(comp)
    comp_ols = load_csv(cfg["composite"], cfg["treatment"], cfg["outcome"],
                        cfg["ols_covariates"])
    rows = [_row("experimental", bench_est, bench_se, bench_est)]
    runs = {}
    for k, ms in enumerate(methods):
        if ms.method == "ols":
            est, se = ols_att(with_squares(comp_ols, cfg["ols_squares"]))
            rows.append(_row(ms.name, est, se, bench_est))
            continue
        n_runs = int(cfg["reps"]) if ms.method in ("nn", "snn") else 1
        seeds = [derive_seed(cfg["seed"], _method_code(ms.name), r) for r in range(n_runs)]
        res = _pmap(_lalonde_run, [(ms, std, s) for s in seeds], jobs)
        ok = [r for r in res if not r["error"]]
        failed = len(res) - len(ok)
        if failed > MAX_FAILURE_RATE * len(res):
            raise BenchError(f"lalonde: {ms.name} failed in {failed} of {len(res)} runs; "
                             f"first error: {next(r['error'] for r in res if r['error'])}")
        est = float(np.mean([r["estimate"] for r in ok]))
        se = float(np.mean([r["se"] for r in ok]))
        rows.append(_row(ms.name, est, se, bench_est, len(ok), failed))
        runs[ms.name] = [r["estimate"] for r in res]
    config_out = {**cfg, "methods": [m.to_dict() for m in methods]}
    return LalondeReport(config_out, (bench_est, bench_se), rows, runs,
                         time.perf_counter() - t0)


# IHDP

IHDP_DEFAULTS = {
    "covariates_path": "data/ihdp_covariates.csv",
    "treatment": "treat",
    "covariates": ["bw", "b.head", "preterm", "birth.o", "nnhealth", "momage", "sex", "twin",
                   "b.marr", "mom.lths", "mom.hs", "mom.scoll", "cig", "first", "booze",
                   "drugs", "work.dur", "prenatal", "site1", "site2", "site3", "site4",
                   "site5", "site6", "site7"],
    "continuous": ["bw", "b.head", "preterm", "birth.o", "nnhealth", "momage"],
    "drop_treated_unless": {"column": "momwhite", "value": 1},
    "surfaces": 50,
    "att": 4.0,
    "methods": ["nn", "snn", "psm"],
    "seed": 0,
}


def load_ihdp(cfg: dict) -> Dataset:
    """IHDP covariates with the treated subset restricted and continuous columns standardized."""
    rule = cfg.get("drop_treated_unless")
    extra = [rule["column"]] if rule and rule["column"] not in cfg["covariates"] else []
    ds = load_csv(cfg["covariates_path"], cfg["treatment"], None, cfg["covariates"] + extra)
    if rule:
        col = ds.X[:, ds.names.index(rule["column"])]
        keep = (ds.d == 0) | (col == rule["value"])
        ds = ds.take(np.flatnonzero(keep))
    ds = select_columns(ds, cfg["covariates"])
    cont = [ds.names.index(c) for c in cfg["continuous"]]
    ds, _ = standardize(ds, cont)
    return ds


def _ihdp_surface(job) -> list:
    base, methods, master, s, att = job
    ds = gen_ihdp_surface(base.X, base.d, derive_seed(master, s), names=base.names, att=att)
    std, _ = standardize(ds)
    out = []
    for ms in methods:
        res = _attempt(ms, std, derive_seed(master, s, _method_code(ms.name)))
        out.append({"rep": s, "method": ms.name, "data_seed": derive_seed(master, s), **res})
    return out


def run_ihdp(config: dict | None = None, jobs: int = 1) -> BenchReport:
    """Score each method over simulated response surfaces with sample ATT ``att``."""
    cfg = {**IHDP_DEFAULTS, **(config or {})}
    unknown = set(cfg) - set(IHDP_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown ihdp keys {sorted(unknown)}")
    methods = parse_methods(cfg["methods"])
    if any(m.needs_oracle for m in methods):
        raise SpecError("oracle methods need known covariate roles, which IHDP lacks")
    n_surf = int(cfg["surfaces"])
    if n_surf < 1:
        raise ConfigError("surfaces must be at least 1")
    t0 = time.perf_counter()
    base = load_ihdp(cfg)
    chunks = _pmap(_ihdp_surface,
                   [(base, methods, cfg["seed"], s, float(cfg["att"])) for s in range(n_surf)],
                   jobs)
    records = [row for chunk in chunks for row in chunk]
    summaries = _aggregate(records, methods, float(cfg["att"]), n_surf, "ihdp")
    config_out = {**cfg, "methods": [m.to_dict() for m in methods]}
    return BenchReport(config_out, float(cfg["att"]), summaries, records,
                       time.perf_counter() - t0)


# Consistency demo

DEMO_NET = {"hidden": (32, 1), "activations": ("relu", "identity"), "epochs": 30,
            "weight_decay": 0.0}


@dataclass
class ConsistencyReport:
    n: int
    seed: int
    truth: float
    rows: list

    def table(self) -> str:
        return _table(["embedding", "estimate", "truth", "bias"],
                      [[r["embedding"], r["estimate"], self.truth, r["bias"]] for r in self.rows])

    def csv_text(self) -> str:
        return _csv_text(["embedding", "estimate", "truth", "bias"],
                         [[r["embedding"], r["estimate"], self.truth, r["bias"]]
                          for r in self.rows])

    def to_dict(self) -> dict:
        return _json_safe({"n": self.n, "seed": self.seed, "truth": self.truth,
                           "rows": self.rows})


def consistency_demo(n: int = 20000, seed: int = 0, net: dict | None = None) -> ConsistencyReport:
    """Match on a 1-D outcome embedding learned from pooled vs control-only data.

    On the one-covariate design the pooled conditional mean is |x|, which
    cannot tell x from -x, while the control mean x/2 is monotone; only the
    latter gives a consistent ATT.
    """
    ds = gen_counterexample(DgpSpec(kind="counterexample", n=n, k=1, seed=seed))
    truth = counterexample_att()
    net_kw = {**DEMO_NET, **(net or {})}
    rows = []
    for label, sub in (("pooled", "pooled"), ("control-only", "control")):
        cfg = NetConfig(**{**net_kw, "loss": "squared", "target": "outcome", "subsample": sub,
                           "seed": derive_seed(seed, _method_code(label))})
        model = train(ds, cfg)
        Z = model.embed(ds.X) * model.output_weights[None, :]
        est = nearest_neighbor_match(MatchingSpace(Z, "nn", ("y0",)), ds, "ATT",
                                     variance=False).estimate
        rows.append({"embedding": label, "estimate": est, "bias": est - truth})
    return ConsistencyReport(n, seed, truth, rows)


def resolve_paths(cfg: dict, base: Path, keys) -> dict:
    """Make relative file paths in ``cfg`` relative to ``base``."""
    out = dict(cfg)
    for k in keys:
        if k in out and out[k] and not os.path.isabs(out[k]):
            out[k] = str(base / out[k])
    return out
