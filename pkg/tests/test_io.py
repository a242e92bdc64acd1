import json

import numpy as np
import pytest

from moving_source import io
from moving_source.errors import ConfigError
from moving_source.forward import synthesize_traces
from moving_source.inverse import reconstruct_trajectory

BASE = {
    "physics": {"c": 1.0, "lambda": 1.0, "T": 5.0, "c0_bound": 0.6},
    "domain": {"D_center": [0, 0, 0], "D_radius": 1.0, "Omega_center": [0, 0, 0], "Omega_radius": 3.0},
}


def test_overrides_parse_json_and_create_sections():
    doc = io.apply_overrides(BASE, ["physics.T=6", "sensors=axis", "inversion.tau.num=11",
                                    "stability.direction=[0,1,0]", "trajectory.kind=\"linear\""])
    assert doc["physics"]["T"] == 6
    assert doc["sensors"] == "axis"
    assert doc["inversion"]["tau"]["num"] == 11
    assert doc["stability"]["direction"] == [0, 1, 0]
    assert doc["trajectory"]["kind"] == "linear"
    assert BASE["physics"]["T"] == 5.0


def test_override_needs_equals_sign():
    with pytest.raises(ConfigError):
        io.apply_overrides(BASE, ["physics.T"])


@pytest.mark.parametrize("patch", [
    ["physics.c=-1"],
    ["physics.lambda=\"big\""],
    ["domain.D_center=[0,0]"],
    ["sensors=ring"],
    ["trajectory.kind=spiral"],
    ["simulation.dt=0"],
    ["stability.family=twist"],
])
def test_schema_rejects(patch):
    with pytest.raises(ConfigError):
        io.validate_config(io.apply_overrides(BASE, patch))


def test_load_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError, match="malformed"):
        io.load_config(bad)
    with pytest.raises(ConfigError):
        io.load_config(tmp_path / "missing.json")
    good = tmp_path / "good.json"
    good.write_text(json.dumps(BASE))
    assert io.load_config(good, ["physics.T=7"])["physics"]["T"] == 7


def test_trace_files_roundtrip_exactly(tmp_path, helix, helix_cfg, ref_dom, ref_sensors):
    traces = synthesize_traces(helix, ref_sensors, helix_cfg, ref_dom, 1e-2, noise_sigma=1e-4, seed=3)
    io.write_traces(tmp_path, traces, helix_cfg, ref_dom, ref_sensors, 1e-2)
    header = (tmp_path / "traces.csv").read_text().splitlines()[0]
    assert header == "t,phi1,phi2,phi3,phi4,phi5,phi6"
    back, cfg, dom, sensors, meta = io.read_traces(tmp_path)
    assert cfg == helix_cfg and dom == ref_dom
    assert np.array_equal(sensors.points, ref_sensors.points)
    assert meta["seed"] == 3 and meta["noise_sigma"] == 1e-4
    for a, b in zip(traces, back):
        assert np.array_equal(a.t_grid, b.t_grid)
        assert np.array_equal(a.values, b.values)
        assert a.noise_sigma == b.noise_sigma


def test_bad_trace_header(tmp_path, helix, helix_cfg, ref_dom, ref_sensors):
    traces = synthesize_traces(helix, ref_sensors, helix_cfg, ref_dom, 1e-1)
    io.write_traces(tmp_path, traces, helix_cfg, ref_dom, ref_sensors, 1e-1)
    text = (tmp_path / "traces.csv").read_text().replace("phi6", "phi7")
    (tmp_path / "traces.csv").write_text(text)
    with pytest.raises(ConfigError):
        io.read_traces(tmp_path)


def test_report_files(tmp_path, helix, helix_cfg, ref_dom, ref_sensors):
    traces = synthesize_traces(helix, ref_sensors, helix_cfg, ref_dom, 1e-3)
    rep = reconstruct_trajectory(traces, ref_sensors, helix_cfg, ref_dom, np.linspace(0.5, 4.5, 5),
                                 truth=helix)
    io.write_report(tmp_path, rep)
    rows = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert rows[0] == "tau,bx,by,bz,err"
    assert len(rows) == 6
    assert np.allclose([float(v) for v in rows[3].split(",")[1:4]], helix.position(2.5), atol=1e-8)
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["error_sup"] == rep.error_sup
