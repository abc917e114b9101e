import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from metricmatch import cli

ROOT = Path(__file__).resolve().parents[1]


def run(*args, env=None):
    return subprocess.run([sys.executable, "-m", "metricmatch.cli", *args], capture_output=True,
                          text=True, env=env, cwd=ROOT)


def test_bad_flags_exit_1(capsys):
    assert cli.main(["simulate", "--dgp", "nope"]) == 1
    assert cli.main(["simulate", "--bogus"]) == 1
    assert cli.main(["simulate", "--reps", "x"]) == 1
    assert cli.main(["frobnicate"]) == 1
    assert cli.main([]) == 1
    assert "error" in capsys.readouterr().err


def test_missing_file_exit_1(tmp_path):
    assert cli.main(["match", "--data", str(tmp_path / "none.csv")]) == 1
    assert cli.main(["lalonde", "--composite", str(tmp_path / "none.csv"),
                     "--out", str(tmp_path / "o.csv")]) == 1


def test_config_rules(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"reps": 2, "n": 200, "k": 20, "methods": ["psm"],
                               "out": "sub/out.csv"}))
    assert cli.main(["simulate", "--config", str(cfg)]) == 0
    assert (tmp_path / "sub" / "out.csv").exists()
    text = (tmp_path / "sub" / "out.csv").read_text()
    assert text.splitlines()[1].split(",")[1] == "2"
    assert cli.main(["simulate", "--config", str(cfg), "--reps", "3"]) == 0
    assert (tmp_path / "sub" / "out.csv").read_text().splitlines()[1].split(",")[1] == "3"
    cfg.write_text(json.dumps({"reps": 2, "typo": 1}))
    assert cli.main(["simulate", "--config", str(cfg)]) == 1
    cfg.write_text("{not json")
    assert cli.main(["simulate", "--config", str(cfg)]) == 1


def test_resolve_precedence(monkeypatch):
    monkeypatch.setenv("MATCH_SEED", "17")
    assert cli.resolve("simulate", {})["seed"] == 17
    assert cli.resolve("simulate", {"seed": 4})["seed"] == 4
    monkeypatch.delenv("MATCH_SEED")
    assert cli.resolve("simulate", {})["seed"] == 0
    assert cli.resolve("simulate", {})["jobs"] >= 1


def test_full_profile_defaults(monkeypatch):
    seen = {}

    def fake(dgp, methods, reps, seed, jobs):
        seen.update(n=dgp.n, reps=reps)
        raise cli.UsageError("stop")

    monkeypatch.setattr(cli, "run_simulation", fake)
    assert cli.main(["simulate", "--full"]) == 1
    assert seen == {"n": 8000, "reps": 1000}
    assert cli.main(["simulate", "--full", "--reps", "7"]) == 1
    assert seen == {"n": 8000, "reps": 7}


def test_help_lists_defaults():
    out = run("simulate", "--help").stdout
    assert "(default: 100)" in out and "(default: 2000)" in out and "--full" in out
    out = run("lalonde", "--help").stdout
    assert "data/lalonde_psid_composite.csv" in out


def test_match_and_check_metric(tmp_path):
    rng = np.random.default_rng(0)
    n = 120
    X = rng.normal(size=(n, 2))
    d = (rng.random(n) < 0.4).astype(int)
    y = X[:, 0] + d
    data = tmp_path / "d.csv"
    np.savetxt(data, np.column_stack([d, y, X, 0.5 * X[:, 0]]), delimiter=",",
               header="treat,y,a,b,s", comments="", fmt="%.8f")
    out, js = tmp_path / "m.csv", tmp_path / "m.json"
    assert cli.main(["match", "--data", str(data), "--covariates", "a,b", "--method", "raw",
                     "--out", str(out), "--json", str(js)]) == 0
    summary = json.loads(js.read_text())
    assert summary["n_units"] == d.sum()
    assert out.read_text().count("\n") == d.sum() + 1
    cm = tmp_path / "c.json"
    assert cli.main(["check-metric", "--data", str(data), "--score", "s",
                     "--covariates", "a,b", "--no-standardize", "--json", str(cm)]) == 0
    rep = json.loads(cm.read_text())
    assert rep["satisfied"] and rep["min_ratio"] >= 2.0 - 1e-9


def test_runtime_failure_exit_2(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("treat,y,a\n1,1,0\n0,0,1\n0,1,2\n")
    assert cli.main(["match", "--data", str(data), "--out", str(tmp_path / "o.csv")]) == 2


def test_outputs_are_byte_identical_across_runs_and_jobs(tmp_path):
    args = ["simulate", "--reps", "3", "--n", "300", "--k", "20", "--methods", "psm,l1",
            "--seed", "11"]
    files = []
    for tag, jobs in (("a", "1"), ("b", "1"), ("c", "2")):
        paths = [tmp_path / f"{tag}.csv", tmp_path / f"{tag}.json", tmp_path / f"{tag}r.csv"]
        res = run(*args, "--jobs", jobs, "--out", str(paths[0]), "--json", str(paths[1]),
                  "--records", str(paths[2]))
        assert res.returncode == 0, res.stderr
        files.append([p.read_bytes() for p in paths])
    assert files[0] == files[1] == files[2]


def test_penalty_scale_reaches_l1_methods(monkeypatch):
    seen = {}

    def fake(dgp, methods, reps, seed, jobs):
        seen["methods"] = methods
        raise cli.UsageError("stop")

    monkeypatch.setattr(cli, "run_simulation", fake)
    cli.main(["simulate", "--methods", "psm,l1", "--penalty-scale", "2.5"])
    assert seen["methods"] == ["psm", {"method": "l1", "config": {"penalty_scale": 2.5}}]
    assert cli.main(["simulate", "--methods", "l1", "--penalty-scale", "-1"]) == 1
    assert cli._with_penalty([{"method": "l1", "config": {"penalty_scale": 4}}], 2.0) == [
        {"method": "l1", "config": {"penalty_scale": 4}}]
