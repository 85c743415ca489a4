import json
import subprocess
import sys

import numpy as np
import pytest

from viscodamage.cli import EXIT_CONFIG, EXIT_OK, main
from viscodamage.config import config_hash, load_config
from viscodamage.grid import read_snapshot

SMALL = """\
geometry: {dim: 2, extents: [1.0, 1.0], cells: [4, 4]}
time: {T: 0.2, tau: 0.05, beta: 1e-2}
output: {snapshot_every: 2}
verify:
  tau_list: [0.1, 0.05]
  tau_reference: 0.025
  beta_list: [1e-1, 1e-2]
  oracle_instances: 5
control:
  lambda_Omega: 1.0
  lambda_Sigma: 1e-3
  chi_T_mean: 0.95
  beta_schedule: [1e-1, 1e-2]
  restarts: 1
  max_evals: 30
  min_step: 0.05
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text(SMALL)
    return p


def _run(*args):
    return main([str(a) for a in args])


def test_simulate_outputs(cfg, tmp_path, capsys):
    out = tmp_path / "sim"
    assert _run("simulate", "--config", cfg, "--out-dir", out, "--threads", 1) == EXIT_OK
    energy = (out / "energy.csv").read_text().splitlines()
    digest = config_hash(load_config(cfg))
    assert energy[0].startswith("# viscodamage") and digest in energy[0]
    assert len(energy) == 2 + 5  # header, columns, levels 0..4
    snaps = sorted(p.name for p in (out / "snapshots").iterdir())
    assert snaps == ["chi_000000.txt", "chi_000002.txt", "chi_000004.txt", "u_000000.txt", "u_000002.txt", "u_000004.txt"]
    meta, chi = read_snapshot(out / "snapshots" / "chi_000004.txt")
    assert meta["time"] == pytest.approx(0.2) and chi.size == 25
    summary = json.loads((out / "summary.json").read_text())
    assert summary["energy_audit_ok"] and summary["steps"] == 4


def test_config_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("time:\n  T: 0.5\n  tau: 1.0\n")
    assert _run("simulate", "--config", bad, "--out-dir", tmp_path / "o") == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "bad.yaml:3" in err and "time.tau" in err
    assert _run("simulate", "--out-dir", tmp_path / "o") == EXIT_CONFIG
    assert _run("simulate", "--config", tmp_path / "missing.yaml") == EXIT_CONFIG
    assert _run("bogus") == EXIT_CONFIG


def test_bad_flags(cfg, tmp_path):
    assert _run("simulate", "--config", cfg, "--threads", 0) == EXIT_CONFIG
    assert _run("simulate", "--config", cfg, "--seed", -1) == EXIT_CONFIG


def test_verify_oracles_and_tau(cfg, tmp_path):
    out = tmp_path / "v"
    assert _run("verify", "--config", cfg, "--out-dir", out, "--which", "oracles", "--threads", 1) == EXIT_OK
    res = json.loads((out / "verify_summary.json").read_text())
    assert res["oracles"]["passed"]


def test_verify_contdep_precondition(tmp_path, capsys):
    p = tmp_path / "d2.yaml"
    p.write_text(SMALL + "material: {d: 2.0}\n")
    assert _run("verify", "--config", p, "--out-dir", tmp_path / "v", "--which", "contdep") == EXIT_CONFIG
    assert "precondition" in capsys.readouterr().err


def test_extend_coeff_defaults(tmp_path):
    out = tmp_path / "e"
    assert _run("extend-coeff", "--out-dir", out) == EXIT_OK
    data = json.loads((out / "extension.json").read_text())
    assert all(data["checks"].values())
    rows = (out / "extension.csv").read_text().splitlines()
    assert rows[1] == "x,c1,c2,c"
    x, c1, c2, c = map(float, rows[-1].split(","))
    assert x == 3.0 and c == pytest.approx(2.0) and c1 + c2 == pytest.approx(c)


def test_optimize_deterministic_and_reusable(cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run("optimize", "--config", cfg, "--out-dir", a, "--seed", 42, "--threads", 1) == EXIT_OK
    assert _run("optimize", "--config", cfg, "--out-dir", b, "--seed", 42, "--threads", 1) == EXIT_OK
    for name in ("continuation.csv", "control.txt", "optimize_summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    # the optimized control drives a forward simulation
    p = tmp_path / "replay.yaml"
    p.write_text(SMALL + f"forcing: {{control_file: {a / 'control.txt'}}}\n")
    assert _run("simulate", "--config", p, "--out-dir", tmp_path / "replay") == EXIT_OK


def test_optimize_adapted_requires_anchor(cfg, tmp_path, capsys):
    assert _run("optimize", "--config", cfg, "--out-dir", tmp_path, "--adapted") == EXIT_CONFIG
    assert "anchor" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "viscodamage", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("viscodamage ")
