import json
import math
import subprocess
import sys

import pytest

from schrolab.cli import main

SMALL = {
    "grid": {"box": ["pi", "pi", "pi"], "resolution": [11, 11, 11]},
    "regions": {"inner": [["pi/4", "3*pi/4"]] * 3},
    "perturbation": {"shape": "bump", "amplitudes": [0, 0.01, 0.02, 0.04, 0.08, 0.16]},
    "lambdas": [5.0],
    "taus": [4, 8, 16, 32],
    "max_modes": 3,
    "gaps": {"mu": [1, 1, 1], "K": 50},
    "cgo": {"amplitude": 0.5},
}


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "run.json"
    p.write_text(json.dumps(SMALL))
    return p


def run(*args):
    return main([str(a) for a in args])


def test_sweep_bundle_and_determinism(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("sweep", "--config", config, "--out", a) == 0
    assert run("sweep", "--config", config, "--out", b, "--threads", "2") == 0
    for name in ("records.csv", "fits.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["command"] == "sweep" and manifest["n_records"] == 6
    fits = json.loads((a / "fits.json").read_text())
    assert "map_diff:double-log" in fits
    # refit the bundle through the fit subcommand
    assert run("fit", "--config", config, "--out", tmp_path / "f", "--input", a / "records.csv") == 0
    refit = json.loads((tmp_path / "f" / "fits.json").read_text())
    assert refit["double-log"]["C"] == pytest.approx(fits["map_diff:double-log"]["C"])


def test_gaps_command(config, tmp_path):
    assert run("gaps", "--config", config, "--out", tmp_path / "g") == 0
    fits = json.loads((tmp_path / "g" / "fits.json").read_text())
    assert fits["distinct"][:4] == [3, 6, 9, 11]
    assert fits["multiplicities"][:4] == [1, 3, 3, 3]


@pytest.mark.parametrize("command", ["forward", "dtn", "cgo", "runge"])
def test_commands_run(command, config, tmp_path):
    out = tmp_path / command
    assert run(command, "--config", config, "--out", out) == 0
    assert (out / "records.csv").exists() and (out / "manifest.json").exists()


def test_seed_override_changes_hash(config, tmp_path):
    run("gaps", "--config", config, "--out", tmp_path / "s1", "--seed", "1")
    run("gaps", "--config", config, "--out", tmp_path / "s2", "--seed", "2")
    m1 = json.loads((tmp_path / "s1" / "manifest.json").read_text())
    m2 = json.loads((tmp_path / "s2" / "manifest.json").read_text())
    assert m1["seed"] == 1 and m2["seed"] == 2
    assert m1["config_sha256"] != m2["config_sha256"]


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"mode": "nope"}))
    assert run("gaps", "--config", bad) == 2
    assert run("gaps", "--config", tmp_path / "missing.json") == 2
    assert run("fit", "--out", tmp_path / "x") == 2
    assert run("gaps", "--threads", "0", "--out", tmp_path / "y") == 2
    # a record-level failure gives exit 1: lambda on the lowest discrete eigenvalue
    h = math.pi / 12
    lam1 = 3 * (2 - 2 * math.cos(h)) / h**2
    res = tmp_path / "res.json"
    res.write_text(json.dumps({**SMALL, "lambdas": [lam1, 5.0]}))
    assert run("forward", "--config", res, "--out", tmp_path / "z") == 1
    rows = (tmp_path / "z" / "records.csv").read_text().splitlines()
    assert "error" in rows[1] and ",ok," in rows[2]
    assert "schrolab" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "schrolab", "gaps", "--out", str(tmp_path / "m")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "m" / "records.csv").exists()
