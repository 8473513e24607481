from __future__ import annotations

import csv
import subprocess
import sys

import pytest

from gwdiscovery.cli import main


def _lines(capsys):
    return capsys.readouterr().out.strip().splitlines()


def test_analytics_rho(capsys):
    assert main(["analytics", "rho", "--dist", "det:2", "--lambda", "0.1", "--tol", "1e-10"]) == 0
    header, row = _lines(capsys)
    assert header == "value,terms_used,tail_bound,method,se"
    value, terms, tail, method, se = row.split(",")
    assert abs(float(value) - 0.2849) < 1e-4 and method == "exact-recursion"


@pytest.mark.parametrize(
    "argv, method",
    [
        (["rho2", "--dist", "det:2", "--lambda", "0.1"], "deterministic-series"),
        (["rho2", "--dist", "1:0.5,3:0.5", "--lambda", "0.1"], "exact-recursion"),
        (["rho2", "--dist", "1:0.5,3:0.5", "--lambda", "0.1", "--general"], "exact-recursion"),
        (["ralpha", "--dist", "det:2", "--alpha", "0.5"], "deterministic-series"),
        (["ralpha", "--dist", "1:0.5,3:0.5", "--alpha", "0.5", "--inner-replicas", "200"], "monte-carlo-inner"),
        (["ralpha", "--dist", "1:0.5,3:0.5", "--alpha", "0.5", "--exact"], "exact-recursion"),
        (["psi", "--x", "0.001"], "deterministic-series"),
    ],
)
def test_analytics_methods(capsys, argv, method):
    assert main(["analytics", *argv]) == 0
    assert _lines(capsys)[1].split(",")[3] == method


def test_analytics_bounds(capsys):
    assert main(["analytics", "bounds", "--alpha", "0.5", "--m", "2"]) == 0
    header, row = _lines(capsys)
    lower, upper, exact, _ = map(float, row.split(","))
    assert header == "lower,upper,exact,tail_bound" and lower <= exact <= upper == 2.0


def test_domain_error_exit_code(capsys):
    assert main(["analytics", "rho", "--dist", "det:2", "--lambda", "-1"]) == 2
    assert "error:" in capsys.readouterr().err


def test_sim_uniform_with_dumps(capsys, tmp_path):
    out = tmp_path / "s.csv"
    arena = tmp_path / "a.csv"
    prof = tmp_path / "p.csv"
    argv = [
        "sim", "uniform", "--dist", "1:0.5,3:0.5", "--lambda", "0.2", "--N", "4",
        "--replicas", "30", "--seed", "3", "--workers", "1",
        "--csv", str(out), "--dump-arena", str(arena), "--dump-profile", str(prof),
    ]
    assert main(argv) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0][0] == "model" and rows[1][1] == "1:0.5,3:0.5"
    assert list(csv.reader(out.open()))[1] == rows[1]
    assert arena.read_text().startswith("node,parent,level")
    assert prof.read_text().startswith("level,count")


def test_sim_depth_biased(capsys):
    argv = ["sim", "depth-biased", "--dist", "det:2", "--alpha", "0.8", "--replicas", "50",
            "--engine", "skeleton", "--root-selected", "--workers", "1"]
    assert main(argv) == 0
    captured = capsys.readouterr()
    assert "engine=skeleton" in captured.err
    assert captured.out.splitlines()[1].startswith("depth-biased,det:2,")


def test_experiment_run_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "psi.toml"
    cfg.write_text('experiment = "psi-check"\nseed = 1\n')
    out = tmp_path / "psi.csv"
    assert main(["experiment", "run", "--config", str(cfg), "--out", str(out), "--no-timestamp"]) == 0
    assert "# timestamp" not in out.read_text()
    assert main(["experiment", "run", "--config", str(cfg), "--set", "band=[0.99, 1.0]"]) == 1
    assert "FAIL" in capsys.readouterr().err


def test_experiment_seed_override(tmp_path, capsys):
    cfg = tmp_path / "ks.toml"
    cfg.write_text('experiment = "kesten-stigum"\ndist = "1:0.5,3:0.5"\nK = 6\nreplicas = 40\n')
    main(["experiment", "run", "--config", str(cfg), "--seed", "77", "--workers", "1", "--no-timestamp"])
    assert "# seed: 77" in capsys.readouterr().out


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text('experiment = "nothing"\n')
    assert main(["experiment", "run", "--config", str(cfg)]) == 2


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "gwdiscovery", "analytics", "bounds", "--alpha", "0.3", "--m", "2"],
        capture_output=True,
        text=True,
        check=True,
    )
    assert proc.stdout.startswith("lower,upper,exact,tail_bound")
