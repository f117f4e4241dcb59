from __future__ import annotations

import json
import os
import subprocess
import sys

import pytest

from convexmoments import cli
from convexmoments.cli import RunConfig, main, run_check, run_suite

SPEC_EXAMPLE = ["verify", "strong-weak", "--family", "radial_pareto", "--dim", "8", "--r", "10", "--p", "4",
                "--samples", "1e6", "--seed", "7"]


def test_spec_example_exit_zero_and_identical(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(SPEC_EXAMPLE + ["--out", str(a)]) == 0
    assert main(SPEC_EXAMPLE + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rep = json.loads(a.read_text())
    assert rep["check_id"] == "strong-weak" and rep["pass"] is True
    assert rep["params"]["config"]["seed"] == 7


def test_hypothesis_violation_exit_two(capsys):
    argv = ["verify", "strong-weak", "--family", "radial_pareto", "--dim", "8", "--r", "10", "--p", "12",
            "--samples", "1e4", "--seed", "1"]
    assert main(argv) == 2
    assert "0 < p < r" in capsys.readouterr().err


def test_config_errors_exit_two(tmp_path, capsys):
    assert main(["verify", "no-such-check", "--seed", "1"]) == 2
    assert main(["verify", "strong-weak", "--family", "gaussian", "--dim", "2", "--p", "1", "--samples", "1e4"]) == 2
    assert main(["verify", "strong-weak", "--family", "gaussian", "--dim", "2", "--samples", "1e4",
                 "--seed", "1"]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["appendix", "polar-formula", "--out", str(blocker / "sub" / "r.json")]) == 2
    assert "cannot write" in capsys.readouterr().err


def test_failing_check_exit_one(capsys):
    argv = ["verify", "tail", "--family", "gaussian", "--dim", "4", "--samples", "1e5", "--seed", "3"]
    assert main(argv) == 1


def test_budget_flags_parsed(tmp_path):
    out = tmp_path / "neg.json"
    argv = ["verify", "negative", "--family", "gaussian", "--dim", "16", "--p", "1", "--samples", "2e5",
            "--seed", "2", "--budget.c=0.5", "--budget.C", "1.5", "--out", str(out)]
    assert main(argv) == 0
    rep = json.loads(out.read_text())
    assert rep["params"]["budgets"] == {"c": 0.5, "C": 1.5}
    rest, budgets = cli._extract_budgets(["x", "--budget.tail", "8", "--budget.t_start=2"])
    assert rest == ["x"] and budgets == {"tail": 8.0, "t_start": 2.0}
    with pytest.raises(cli.ConfigError):
        cli._extract_budgets(["--budget.c"])


def test_budget_alias(tmp_path):
    out = tmp_path / "r.json"
    argv = ["verify", "strong-weak", "--family", "gaussian", "--dim", "4", "--p", "2", "--samples", "5e4",
            "--seed", "2", "--budget", "2", "--out", str(out)]
    assert main(argv) == 0
    assert json.loads(out.read_text())["budget"] == 2.0


def test_csv_output(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["appendix", "g0-bound", "--format", "csv", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1 + 21
    assert "margin" in lines[0].split(",")


def test_constants_and_sample_and_moments(tmp_path, capsys):
    assert main(["constants", "--p", "2", "--r", "4", "--m", "2"]) == 0
    bundle = json.loads(capsys.readouterr().out)
    assert bundle["c2_factor"] == pytest.approx((4 / 3) ** 3 * 16)
    s1, s2 = tmp_path / "s1.json", tmp_path / "s2.json"
    for s in (s1, s2):
        assert main(["sample", "--family", "student_t", "--dim", "3", "--r", "5", "--samples", "100",
                     "--seed", "4", "--out", str(s)]) == 0
    assert s1.read_bytes() == s2.read_bytes()
    assert len(json.loads(s1.read_text())["data"]) == 100
    assert main(["moments", "--family", "gaussian", "--dim", "4", "--p", "1", "--samples", "1e5", "--seed", "1"]) == 0
    mom = json.loads(capsys.readouterr().out)
    assert {"strong", "weak", "negative", "strong_oracle"} <= set(mom)


def test_other_subcommands(tmp_path):
    assert main(["thinshell", "--family", "gaussian", "--samples", "2e4", "--seed", "1",
                 "--opt", "n_grid=[4,16]", "--opt", "t=0.5", "--out", str(tmp_path / "t.json")]) == 0
    assert main(["cov-sweep", "--family", "gaussian", "--dim", "8", "--seed", "1", "--budget", "4",
                 "--opt", "n_seeds=5", "--opt", "max_N=1024", "--out", str(tmp_path / "c.json")]) == 0
    assert main(["appendix", "polar-formula", "--out", str(tmp_path / "p.json")]) == 0


def test_embedded_config_reruns_identically():
    cfg = RunConfig("negative", family="student_t", dim=8, r=6.0, p=1.0, n_samples=100_000, seed=5,
                    budgets={"c": 1.0, "C": 1.0})
    rep = run_check(cfg)
    again = run_check(RunConfig.from_json(json.loads(rep.dumps())["params"]["config"]))
    assert again.dumps() == rep.dumps()
    with pytest.raises(cli.ConfigError):
        RunConfig.from_json({"check_id": "H", "bogus": 1})


def test_empty_manifest(tmp_path):
    m = tmp_path / "m.json"
    m.write_text("[]")
    code, summary = run_suite(m, tmp_path / "out")
    assert code == 0 and summary == []
    assert json.loads((tmp_path / "out" / "summary.json").read_text()) == []


def test_deliberate_failure_manifest(tmp_path):
    configs = [
        {"check_id": "strong-weak", "family": "gaussian", "dim": 4, "p": 2, "n_samples": 50000, "seed": 1,
         "budgets": {"c": 0.001}},
        {"check_id": "appendix:polar-formula"},
        {"check_id": "strong-weak", "family": "gaussian", "dim": 4, "p": 2, "n_samples": 50000, "seed": 1},
        {"check_id": "nonexistent"},
    ]
    m = tmp_path / "m.json"
    m.write_text(json.dumps(configs))
    code, summary = run_suite(m, tmp_path / "out", threads=2)
    assert code == 1
    assert len(summary) == len(configs)
    assert [row["status"] for row in summary] == ["fail", "pass", "pass", "error"]
    files = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert files == ["000-strong-weak.json", "001-appendix-polar-formula.json", "002-strong-weak.json",
                     "summary.json"]


def test_suite_via_cli_and_module_entry(tmp_path):
    m = tmp_path / "m.json"
    m.write_text(json.dumps([{"check_id": "borell-1d", "r": 3.0, "budgets": {"c": 2.0}}]))
    assert main(["suite", str(m), "--out", str(tmp_path / "o")]) == 0
    env = dict(os.environ, CONVEXMOMENTS_THREADS="2")
    proc = subprocess.run([sys.executable, "-m", "convexmoments", "constants", "--p", "1", "--r", "3"],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0 and json.loads(proc.stdout)["p"] == 1.0
