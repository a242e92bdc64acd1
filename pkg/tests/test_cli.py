import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from moving_source.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(*args):
    return main([str(a) for a in args])


def read_numeric_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_stationary_trace_is_flat_after_arrival(tmp_path):
    assert run("simulate", "--config", CONFIGS / "stationary.json", "--out", tmp_path) == 0
    header, data = read_numeric_csv(tmp_path / "traces.csv")
    assert header == ["t", "phi1", "phi2", "phi3", "phi4", "phi5", "phi6"]
    col = data[:, 1]
    after = col[col > 0]
    assert after.size > 0 and np.ptp(after) == 0.0
    meta = json.loads((tmp_path / "traces.meta.json").read_text())
    assert meta["dt"] == 1e-3


def test_short_horizon_exits_3(tmp_path, capsys):
    code = run("simulate", "--config", CONFIGS / "stationary.json", "--out", tmp_path, "--set", "physics.T=4")
    assert code == 3
    assert "T0" in capsys.readouterr().err


def test_repeated_simulation_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run("simulate", "--config", CONFIGS / "helical.json", "--out", tmp_path / name,
                   "--set", "simulation.noise_sigma=1e-4", "--set", "simulation.seed=11",
                   "--set", "simulation.dt=0.01") == 0
    for f in ("traces.csv", "traces.meta.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_collinear_round_trip_through_files(tmp_path):
    cfg = CONFIGS / "collinear.json"
    assert run("simulate", "--config", cfg, "--out", tmp_path / "sim") == 0
    assert run("reconstruct", "--config", cfg, "--traces", tmp_path / "sim", "--out", tmp_path / "rec") == 0
    header, data = read_numeric_csv(tmp_path / "rec" / "trajectory.csv")
    assert header == ["tau", "bx", "by", "bz", "err"]
    assert data[:, 4].max() <= 1e-3
    report = json.loads((tmp_path / "rec" / "report.json").read_text())
    assert report["error_sup"] <= 1e-3
    # arrivals agree with the recovered initial position: c t_x = |x - b0|
    meta = json.loads((tmp_path / "sim" / "traces.meta.json").read_text())
    pts = np.array(meta["sensors"]["points"])
    b0 = np.array(report["b0_hat"])
    for a, x in zip(report["arrivals"], pts):
        assert abs(meta["physics"]["c"] * a["t_x"] - np.linalg.norm(x - b0)) <= a["detection_margin"]


def test_reconstruct_without_config_has_no_error_metrics(tmp_path):
    assert run("simulate", "--config", CONFIGS / "stationary.json", "--out", tmp_path,
               "--set", "simulation.dt=0.005") == 0
    assert run("reconstruct", "--out", tmp_path) == 0
    assert "error_sup" not in json.loads((tmp_path / "report.json").read_text())


def test_truncated_traces_exit_4(tmp_path, capsys):
    assert run("simulate", "--config", CONFIGS / "collinear.json", "--out", tmp_path) == 0
    lines = (tmp_path / "traces.csv").read_text().splitlines()
    (tmp_path / "traces.csv").write_text("\n".join(lines[:1001]) + "\n")
    assert run("reconstruct", "--traces", tmp_path, "--out", tmp_path / "rec") == 4
    err = capsys.readouterr().err
    assert "NoArrivalError" in err and "step=detect_arrival" in err and "sensor=" in err


def test_stability_command(tmp_path):
    code = run("stability", "--config", CONFIGS / "reference.json", "--out", tmp_path,
               "--set", "stability.epsilons=[0, 0.01, 0.001]", "--set", "stability.sigmas=[1e-5]",
               "--set", "stability.seeds_per_sigma=2", "--set", "simulation.dt=0.002")
    assert code == 0
    with open(tmp_path / "perturbations.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    zero = rows[0]
    assert float(zero["epsilon"]) == 0
    assert all(float(zero[k]) == 0 for k in ("delta_phi_sup", "delta_t_max", "delta_r_max", "delta_b_sup"))
    assert all(r["arrival_bound"] == "pass" for r in rows)
    summary = json.loads((tmp_path / "stability.json").read_text())
    assert summary["constants"]["C_t"] == pytest.approx(108.0)
    with open(tmp_path / "noise_sweep.csv", newline="") as fh:
        noise = list(csv.DictReader(fh))
    assert len(noise) == 2 and all(r["status"] == "ok" for r in noise)


def test_constants_command(tmp_path):
    geometry = {k: v for k, v in json.loads((CONFIGS / "reference.json").read_text()).items()
                if k in ("physics", "domain")}
    cfg = tmp_path / "geom.json"
    cfg.write_text(json.dumps(geometry))
    assert run("constants", "--config", cfg, "--out", tmp_path / "a") == 0
    out = json.loads((tmp_path / "a" / "constants.json").read_text())
    assert out["horizon"]["T0"] == 4.0 and out["horizon"]["T_obs"] == 9.0
    assert out["stability"]["C_t"] == pytest.approx(108.0)
    assert run("constants", "--config", cfg, "--out", tmp_path / "b", "--set", "physics.c=2") == 0
    fast = json.loads((tmp_path / "b" / "constants.json").read_text())
    assert fast["horizon"]["T0"] == 2.0


def test_config_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("constants", "--config", bad, "--out", tmp_path) == 2
    assert run("simulate", "--out", tmp_path) == 2
    assert run("simulate", "--config", CONFIGS / "helical.json", "--out", tmp_path,
               "--set", "physics.c0_bound=2") == 2


def test_physical_preconditions_exit_3(tmp_path, capsys):
    cfg = CONFIGS / "collinear.json"
    assert run("simulate", "--config", cfg, "--out", tmp_path,
               "--set", "trajectory.velocity=[1.2,0,0]", "--set", "physics.c0_bound=0.95") == 3
    assert "NotSubsonicError" in capsys.readouterr().err
    assert run("simulate", "--config", cfg, "--out", tmp_path, "--set", "trajectory.velocity=[0.5,0,0]") == 3
    assert "OutsideDomainError" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "moving_source", "constants", "--config",
                           str(CONFIGS / "reference.json"), "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["horizon"]["T_obs"] == 9.0


@pytest.mark.parametrize("name", ["stationary", "collinear", "helical", "reference"])
def test_shipped_configs_round_trip(tmp_path, name):
    assert run("roundtrip", "--config", CONFIGS / f"{name}.json", "--out", tmp_path) == 0
    assert json.loads((tmp_path / "report.json").read_text())["error_sup"] <= 1e-3
