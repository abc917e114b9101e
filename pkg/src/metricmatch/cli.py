"""Command-line front end.

Every subcommand accepts ``--config FILE`` (JSON). Values in the file fill in
any flag; flags given on the command line win. Relative paths inside a config
file are resolved against the file's directory. Exit codes: 0 success, 1 bad
input (flags, files, configs, data), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (DESK_PROFILE, FULL_PROFILE, IHDP_DEFAULTS, LALONDE_DEFAULTS, MethodSpec,
                    build_space, consistency_demo, default_jobs, resolve_paths, run_ihdp,
                    run_lalonde, run_simulation)
from .dataset import load_csv, standardize
from .errors import ConfigError, InputError, MetricMatchError
from .matching import metric_condition_check, nearest_neighbor_match
from .simgen import DgpSpec
from .space import MatchingSpace

DGP_KINDS = ("sparse-linear", "sparse-linear-sq", "random-nn", "counterexample")


class UsageError(InputError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed_fallback() -> int:
    env = os.environ.get("MATCH_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"MATCH_SEED must be an integer, got {env!r}") from None


def _csv_list(text: str) -> list:
    return [s.strip() for s in text.split(",") if s.strip()]


# name -> (type, default, help); default None means "not set"
COMMON = {
    "seed": (int, None, "master seed (default: $MATCH_SEED, else 0)"),
    "jobs": (int, None, "worker processes (default: available CPUs)"),
    "penalty_scale": (float, None, "multiplier on the CV-chosen penalty of l1 methods; "
                                   "> 1 strengthens it (default: 1)"),
}

SPECS = {
    "simulate": {
        "dgp": (str, "sparse-linear", f"design: {', '.join(DGP_KINDS)}"),
        "reps": (int, DESK_PROFILE["reps"], "replications"),
        "n": (int, DESK_PROFILE["n"], "sample size per replication"),
        "k": (int, 50, "number of covariates"),
        "beta0": (float, 1.0, "true treatment effect"),
        "methods": (_csv_list, "nn,snn,psm,psmsq", "comma-separated method tags"),
        "full": (bool, False, "full-scale profile: 1000 reps of n = 8000 unless set explicitly"),
        "dgp_params": (None, {}, "extra design parameters (config file only)"),
        "out": (str, "simulation.csv", "summary CSV path"),
        "json": (str, None, "full report JSON path"),
        "records": (str, None, "per-replication CSV path"),
        **COMMON,
    },
    "lalonde": {
        "experimental": (str, LALONDE_DEFAULTS["experimental"], "experimental NSW file"),
        "composite": (str, LALONDE_DEFAULTS["composite"], "NSW-treated + PSID-control file"),
        "treatment": (str, LALONDE_DEFAULTS["treatment"], "treatment column"),
        "outcome": (str, LALONDE_DEFAULTS["outcome"], "outcome column"),
        "covariates": (_csv_list, LALONDE_DEFAULTS["covariates"], "matching covariates"),
        "zero_indicators": (None, LALONDE_DEFAULTS["zero_indicators"],
                            "derived 1{x == 0} columns (config file only)"),
        "ols_covariates": (_csv_list, LALONDE_DEFAULTS["ols_covariates"], "OLS covariates"),
        "ols_squares": (_csv_list, LALONDE_DEFAULTS["ols_squares"], "covariates squared for OLS"),
        "methods": (_csv_list, LALONDE_DEFAULTS["methods"], "comma-separated method tags"),
        "reps": (int, LALONDE_DEFAULTS["reps"], "runs averaged for nn and snn"),
        "out": (str, "lalonde.csv", "table CSV path"),
        "json": (str, None, "full report JSON path"),
        **COMMON,
    },
    "ihdp": {
        "covariates_path": (str, IHDP_DEFAULTS["covariates_path"], "IHDP covariate file"),
        "treatment": (str, IHDP_DEFAULTS["treatment"], "treatment column"),
        "covariates": (_csv_list, IHDP_DEFAULTS["covariates"], "covariates used"),
        "continuous": (_csv_list, IHDP_DEFAULTS["continuous"],
                       "covariates standardized before surface generation"),
        "drop_treated_unless": (None, IHDP_DEFAULTS["drop_treated_unless"],
                                "treated-row filter (config file only)"),
        "surfaces": (int, IHDP_DEFAULTS["surfaces"], "number of simulated response surfaces"),
        "att": (float, IHDP_DEFAULTS["att"], "sample ATT every surface is built to have"),
        "methods": (_csv_list, IHDP_DEFAULTS["methods"], "comma-separated method tags"),
        "out": (str, "ihdp.csv", "summary CSV path"),
        "json": (str, None, "full report JSON path"),
        "records": (str, None, "per-surface CSV path"),
        **COMMON,
    },
    "demo-consistency": {
        "n": (int, 20000, "sample size"),
        "net": (None, {}, "outcome-net overrides (config file only)"),
        "out": (str, None, "table CSV path"),
        "json": (str, None, "report JSON path"),
        "seed": COMMON["seed"],
    },
    "match": {
        "data": (str, None, "input CSV (required)"),
        "treatment": (str, "treat", "treatment column"),
        "outcome": (str, "y", "outcome column"),
        "covariates": (_csv_list, None, "covariates (default: all other columns)"),
        "method": (str, "psm", "raw, nn, snn, l1, rrf, psm or psmsq"),
        "method_config": (None, {}, "method settings (config file only)"),
        "estimand": (str, "ATT", "ATT or ATUT"),
        "standardize": (bool, True, "standardize covariates first (--no-standardize to skip)"),
        "out": (str, "matches.csv", "matched-pairs CSV path"),
        "json": (str, None, "summary JSON path"),
        "seed": COMMON["seed"],
        "penalty_scale": COMMON["penalty_scale"],
    },
    "check-metric": {
        "data": (str, None, "input CSV (required)"),
        "treatment": (str, "treat", "treatment column"),
        "outcome": (str, "y", "outcome column"),
        "score": (str, None, "score column, excluded from covariates (required)"),
        "covariates": (_csv_list, None, "covariates (default: all other columns)"),
        "method": (str, "raw", "space to check: raw, nn, snn, l1, rrf, psm or psmsq"),
        "method_config": (None, {}, "method settings (config file only)"),
        "condition": (str, "PGM_C", "PSM, PGM_C or PGM_T (label only)"),
        "C": (float, 1.0, "required lower bound on distance / score gap"),
        "pairs": (int, 20000, "pairs sampled when there are more"),
        "standardize": (bool, True, "standardize covariates first (--no-standardize to skip)"),
        "json": (str, None, "report JSON path"),
        "seed": COMMON["seed"],
        "penalty_scale": COMMON["penalty_scale"],
    },
}

PATH_KEYS = ("experimental", "composite", "covariates_path", "data", "out", "json", "records")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="metricmatch", description="Matching on learned matching spaces.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, spec in SPECS.items():
        p = sub.add_parser(name, help=f"run {name}")
        p.add_argument("--config", default=argparse.SUPPRESS,
                       help="JSON file supplying any of these flags (default: none)")
        for key, (typ, default, text) in spec.items():
            if typ is None:
                continue
            flag = "--" + key.replace("_", "-")
            shown = ",".join(default) if isinstance(default, list) else default
            help_text = text if "(default" in text else f"{text} (default: {shown})"
            if typ is bool:
                p.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction,
                               default=argparse.SUPPRESS, help=help_text)
            else:
                p.add_argument(flag, dest=key, type=typ, default=argparse.SUPPRESS,
                               help=help_text)
    return parser


def _load_config(path) -> tuple[dict, Path]:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"--config: cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--config: {path} is not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"--config: {path} must hold a JSON object")
    return data, Path(path).resolve().parent


def resolve(command: str, args: dict) -> dict:
    """Defaults < config file < explicit flags; unknown config keys are rejected."""
    spec = SPECS[command]
    merged = {k: v[1] for k, v in spec.items()}
    if "config" in args:
        data, base = _load_config(args["config"])
        unknown = set(data) - set(spec)
        if unknown:
            raise ConfigError(f"--config: unknown key(s) {sorted(unknown)} for {command}")
        merged.update(resolve_paths(data, base, PATH_KEYS))
    merged.update({k: v for k, v in args.items() if k != "config"})
    for key in ("out", "json", "records"):
        if merged.get(key):
            Path(merged[key]).parent.mkdir(parents=True, exist_ok=True)
    if merged.get("seed") is None:
        merged["seed"] = _seed_fallback()
    if "jobs" in merged:
        merged["jobs"] = default_jobs() if merged["jobs"] is None else merged["jobs"]
        if merged["jobs"] < 1:
            raise UsageError("--jobs must be at least 1")
    return merged


def _with_penalty(methods, scale):
    """Set ``penalty_scale`` on every l1 method that does not already carry one."""
    if scale is None:
        return methods
    if scale <= 0:
        raise UsageError("--penalty-scale must be positive")
    items = _csv_list(methods) if isinstance(methods, str) else list(methods)
    out = []
    for item in items:
        if item == "l1":
            item = {"method": "l1", "config": {"penalty_scale": scale}}
        elif isinstance(item, dict) and item.get("method") == "l1":
            item = {**item, "config": {"penalty_scale": scale, **item.get("config", {})}}
        out.append(item)
    return out


def _emit(text: str) -> None:
    sys.stdout.write(text + "\n")


def _write_text(path, text):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _write_json(path, obj):
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n" if path else "")


def cmd_simulate(cfg: dict, explicit: dict) -> None:
    if cfg["dgp"] not in DGP_KINDS:
        raise UsageError(f"--dgp: unknown design {cfg['dgp']!r}; choose from {list(DGP_KINDS)}")
    if cfg["full"]:
        for key, value in FULL_PROFILE.items():
            if key not in explicit:
                cfg[key] = value
    if not isinstance(cfg["dgp_params"], dict):
        raise ConfigError("dgp_params must be an object")
    try:
        dgp = DgpSpec(kind=cfg["dgp"], n=cfg["n"], k=cfg["k"], beta0=cfg["beta0"],
                      **cfg["dgp_params"])
    except TypeError as exc:
        raise ConfigError(f"dgp_params: {exc}") from None
    methods = _with_penalty(cfg["methods"], cfg["penalty_scale"])
    report = run_simulation(dgp, methods, cfg["reps"], cfg["seed"], cfg["jobs"])
    _emit(report.table())
    report.write(cfg["out"], cfg["json"], cfg["records"])


def cmd_lalonde(cfg: dict, explicit: dict) -> None:
    keys = set(LALONDE_DEFAULTS)
    cfg["methods"] = _with_penalty(cfg["methods"], cfg["penalty_scale"])
    report = run_lalonde({k: v for k, v in cfg.items() if k in keys}, cfg["jobs"])
    _emit(report.table())
    report.write(cfg["out"], cfg["json"])


def cmd_ihdp(cfg: dict, explicit: dict) -> None:
    keys = set(IHDP_DEFAULTS)
    cfg["methods"] = _with_penalty(cfg["methods"], cfg["penalty_scale"])
    report = run_ihdp({k: v for k, v in cfg.items() if k in keys}, cfg["jobs"])
    _emit(report.table())
    report.write(cfg["out"], cfg["json"], cfg["records"])


def cmd_demo(cfg: dict, explicit: dict) -> None:
    report = consistency_demo(cfg["n"], cfg["seed"], cfg["net"])
    _emit(report.table())
    _write_text(cfg["out"], report.csv_text())
    _write_json(cfg["json"], report.to_dict())


_FILE_METHODS = ("raw", "nn", "snn", "l1", "rrf", "psm", "psmsq")


def _file_space(cfg: dict, exclude=()):
    if not cfg["data"]:
        raise UsageError("--data is required")
    if cfg["method"] not in _FILE_METHODS:
        raise UsageError(f"--method: {cfg['method']!r} is not one of {list(_FILE_METHODS)}")
    covs = cfg["covariates"]
    if covs is None:
        with open(cfg["data"], newline="") as fh:
            header = [h.strip() for h in fh.readline().split(",")]
        covs = [h for h in header if h not in (cfg["treatment"], cfg["outcome"], *exclude)]
    ds = load_csv(cfg["data"], cfg["treatment"], cfg["outcome"], covs)
    work = standardize(ds)[0] if cfg["standardize"] else ds
    config = dict(cfg["method_config"])
    if cfg["method"] == "l1" and cfg["penalty_scale"] is not None:
        if cfg["penalty_scale"] <= 0:
            raise UsageError("--penalty-scale must be positive")
        config.setdefault("penalty_scale", cfg["penalty_scale"])
    ms = MethodSpec(cfg["method"], config, cfg.get("estimand", "ATT"))
    return ds, work, build_space(ms, work, cfg["seed"])


def cmd_match(cfg: dict, explicit: dict) -> None:
    if cfg["estimand"] not in ("ATT", "ATUT"):
        raise UsageError(f"--estimand: {cfg['estimand']!r} is not ATT or ATUT")
    _, work, space = _file_space(cfg)
    res = nearest_neighbor_match(space, work, cfg["estimand"])
    summary = {**res.summary(), "method": cfg["method"], "space_width": space.width,
               "seed": cfg["seed"]}
    _emit(json.dumps(summary, indent=2, sort_keys=True))
    if cfg["out"]:
        res.write_csv(cfg["out"])
    _write_json(cfg["json"], summary)


def cmd_check_metric(cfg: dict, explicit: dict) -> None:
    if not cfg["score"]:
        raise UsageError("--score is required")
    if cfg["condition"] not in ("PSM", "PGM_C", "PGM_T"):
        raise UsageError(f"--condition: {cfg['condition']!r} is not PSM, PGM_C or PGM_T")
    ds, work, space = _file_space(cfg, exclude=(cfg["score"],))
    score = load_csv(cfg["data"], cfg["treatment"], cfg["outcome"], [cfg["score"]]).X[:, 0]
    rep = metric_condition_check(space, work, score, cfg["C"], cfg["pairs"], cfg["seed"],
                                 cfg["condition"])
    _emit(json.dumps(rep.summary(), indent=2, sort_keys=True))
    _write_json(cfg["json"], rep.summary())


COMMANDS = {
    "simulate": cmd_simulate,
    "lalonde": cmd_lalonde,
    "ihdp": cmd_ihdp,
    "demo-consistency": cmd_demo,
    "match": cmd_match,
    "check-metric": cmd_check_metric,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            parser.print_help()
            return 1
        args = {k: v for k, v in vars(ns).items() if k != "command"}
        cfg = resolve(ns.command, args)
        COMMANDS[ns.command](cfg, args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return 1
    except MetricMatchError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
