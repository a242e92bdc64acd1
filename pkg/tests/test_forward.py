import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moving_source.errors import SourceAtSensorError
from moving_source.forward import (
    add_noise,
    doppler_factor,
    field_value,
    field_values,
    noise_stream,
    retarded_time,
    retarded_times,
    synthesize_traces,
    time_grid,
)
from moving_source.geometry import PhysicsConfig, Trajectory

CFG = PhysicsConfig(c=1.0, lam=4 * math.pi, T=5.0, c0_bound=0.5)


def test_stationary_retarded_time_before_arrival():
    traj = Trajectory.stationary((0, 0, 0))
    res = retarded_time(traj, (2, 0, 0), 1.0, CFG)
    assert res.r == pytest.approx(-1.0, abs=1e-14)
    assert res.pre_arrival and res.converged
    assert field_value(traj, (2, 0, 0), 1.0, CFG) == 0.0
    assert field_value(traj, (2, 0, 0), 3.0, CFG) == pytest.approx(0.5, abs=1e-15)


def test_collinear_approach_oracle():
    # b(t) = (t/2, 0, 0), x = (2, 0, 0): r = 2(t - 2), h = 1/2, phi = 2 / (4 - t)
    cfg = PhysicsConfig(c=1.0, lam=4 * math.pi, T=3.0, c0_bound=0.5)
    traj = Trajectory.linear((0, 0, 0), (0.5, 0, 0))
    x = (2.0, 0.0, 0.0)
    assert retarded_time(traj, x, 2.5, cfg).r == pytest.approx(1.0, abs=1e-12)
    assert doppler_factor(traj, x, 1.0, cfg) == 0.5
    assert field_value(traj, x, 2.5, cfg) == pytest.approx(4 / 3, rel=1e-13)


def test_recession_doubles_h():
    traj = Trajectory.linear((0, 0, 0), (-0.5, 0, 0))
    cfg = PhysicsConfig(c=1.0, lam=1.0, T=1.0, c0_bound=0.5)
    assert doppler_factor(traj, (2, 0, 0), 0.5, cfg) == pytest.approx(1.5)


def test_source_at_sensor_is_reported():
    traj = Trajectory.stationary((0.5, 0, 0))
    with pytest.raises(SourceAtSensorError):
        field_value(traj, (0.5, 0, 0), 1.0, CFG)


def test_vectorized_matches_scalar(helix, helix_cfg):
    x = np.array([3.0, 0.0, 0.0])
    t = np.linspace(0, 9, 41)
    vec = retarded_times(helix, x, t, helix_cfg)
    assert np.allclose(vec, [retarded_time(helix, x, s, helix_cfg).r for s in t], atol=1e-13)


@given(st.floats(0.0, 9.0), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
@settings(max_examples=200, deadline=None)
def test_retarded_equation_residual(t, a, b, c):
    helix = Trajectory.helical((0.0, 0.0, -0.5), 0.5, 1.0, 0.2)
    cfg = PhysicsConfig(c=1.0, lam=1.0, T=5.0, c0_bound=0.6)
    x = np.array([a, b, c]) + 1e-3
    x = 3.0 * x / np.linalg.norm(x)
    res = retarded_time(helix, x, t, cfg)
    resid = res.r - t + np.linalg.norm(x - helix.clamped_position(res.r, cfg.T)) / cfg.c
    assert abs(resid) <= 1e-12 * max(cfg.T, t)
    assert res.r <= t


@given(st.floats(0.0, 5.0), st.floats(0.0, 0.59))
@settings(max_examples=100, deadline=None)
def test_doppler_factor_bounds(r, speed):
    cfg = PhysicsConfig(c=1.0, lam=1.0, T=5.0, c0_bound=0.6)
    traj = Trajectory.circular((0, 0, 0), 0.5, speed / 0.5)
    for x in np.eye(3) * 3.0:
        h = doppler_factor(traj, x, r, cfg)
        assert cfg.h0 <= h <= 2 - cfg.h0


@given(st.floats(0.1, 100.0))
@settings(max_examples=30, deadline=None)
def test_field_is_linear_in_lambda(k):
    traj = Trajectory.helical((0.0, 0.0, -0.5), 0.5, 1.0, 0.2)
    cfg = PhysicsConfig(c=1.0, lam=1.0, T=5.0, c0_bound=0.6)
    big = PhysicsConfig(c=1.0, lam=k, T=5.0, c0_bound=0.6)
    t = np.linspace(0, 9, 50)
    x = (0.0, 3.0, 0.0)
    assert np.allclose(field_values(traj, x, t, big), k * field_values(traj, x, t, cfg), rtol=1e-14, atol=0)


def test_causality(helix, helix_cfg, ref_sensors):
    for x in ref_sensors.points:
        arrival = np.linalg.norm(x - helix.position(0.0)) / helix_cfg.c
        assert np.all(field_values(helix, x, np.linspace(0, arrival - 1e-9, 200), helix_cfg) == 0)
        assert field_value(helix, x, arrival + 1e-6, helix_cfg) > 0


def test_time_grid_covers_horizon():
    t = time_grid(9.0, 1e-3)
    assert t[0] == 0.0 and t[-1] == pytest.approx(9.0) and t.size == 9001
    assert time_grid(1.0, 0.3)[-1] >= 1.0


def test_noise_stream_is_counter_based():
    a = noise_stream(3, 2, 100)
    assert np.array_equal(a[:40], noise_stream(3, 2, 40))
    assert not np.array_equal(a, noise_stream(3, 1, 100))
    assert not np.array_equal(a, noise_stream(4, 2, 100))


def test_synthesized_traces(helix, helix_cfg, ref_dom, ref_sensors):
    clean = synthesize_traces(helix, ref_sensors, helix_cfg, ref_dom, 1e-2)
    assert [tr.sensor_index for tr in clean] == [1, 2, 3, 4, 5, 6]
    assert clean[0].t_end == pytest.approx(9.0)
    np.testing.assert_array_equal(clean[2].values,
                                  field_values(helix, ref_sensors.points[2], clean[2].t_grid, helix_cfg))
    noisy = synthesize_traces(helix, ref_sensors, helix_cfg, ref_dom, 1e-2, noise_sigma=1e-3, seed=9)
    again = add_noise(clean, 1e-3, 9)
    for n, m, c in zip(noisy, again, clean):
        np.testing.assert_array_equal(n.values, m.values)
        assert np.allclose(n.values - c.values, 1e-3 * noise_stream(9, c.sensor_index, c.t_grid.size))
    with pytest.raises(ValueError):
        synthesize_traces(helix, ref_sensors, helix_cfg, ref_dom, 0.0)
