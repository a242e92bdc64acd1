"""Exact field of a subsonic moving point source (retarded potential).

phi(x, t) = lam * Y(r) / (4 pi |x - b(r)| h(x, r)),   r = t - |x - b(r)| / c

The trajectory is continued by constants outside [0, T], so b'(r) = 0 there.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergenceError, SourceAtSensorError
from .geometry import horizon_constants

MAX_ITER = 200
NEWTON_STEPS = 3


@dataclass(frozen=True)
class RetardedTimeResult:
    r: float
    converged: bool
    iterations: int
    residual: float

    @property
    def pre_arrival(self):
        return self.r < 0


@dataclass(frozen=True)
class FieldTrace:
    sensor_index: int
    position: np.ndarray = field(repr=False)
    t_grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    noise_sigma: float = 0.0
    seed: int = 0

    @property
    def dt(self):
        return float(self.t_grid[1] - self.t_grid[0])

    @property
    def t_end(self):
        return float(self.t_grid[-1])


def default_tol(cfg, t):
    return 1e-12 * max(cfg.T, float(np.max(np.abs(t))))


def _solve(traj, x, t, cfg, tol):
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)

    def dist(r):
        return np.linalg.norm(x - traj.clamped_position(r, cfg.T), axis=-1)

    r = t - dist(t) / cfg.c
    it = 0
    for it in range(1, MAX_ITER + 1):
        r_new = t - dist(r) / cfg.c
        step = np.max(np.abs(r_new - r))
        r = r_new
        if step <= tol:
            break
    # Newton on F(r) = r - t + |x - b(r)|/c, F'(r) = h(x, r); a step is kept
    # only where it lowers |F| (b' jumps at r = 0 and r = T)
    d = x - traj.clamped_position(r, cfg.T)
    nd = np.linalg.norm(d, axis=-1)
    F = r - t + nd / cfg.c
    for _ in range(NEWTON_STEPS):
        v = traj.clamped_velocity(r, cfg.T)
        with np.errstate(divide="ignore", invalid="ignore"):
            h = 1.0 - np.sum(v * d, axis=-1) / (cfg.c * nd)
            r_try = r - F / h
        d_try = x - traj.clamped_position(r_try, cfg.T)
        nd_try = np.linalg.norm(d_try, axis=-1)
        F_try = r_try - t + nd_try / cfg.c
        keep = np.abs(F_try) < np.abs(F)
        r = np.where(keep, r_try, r)
        d = np.where(keep[..., None], d_try, d)
        nd = np.where(keep, nd_try, nd)
        F = np.where(keep, F_try, F)
    return r, it, np.abs(F)


def retarded_time(traj, x, t, cfg, tol=None):
    """Emission time r of the signal reaching ``x`` at time ``t``.

    r may be negative (the signal has not arrived yet); callers apply the
    Heaviside cut-off themselves.
    """
    tol = default_tol(cfg, t) if tol is None else tol
    r, it, res = _solve(traj, x, float(t), cfg, tol)
    r, res = float(r), float(res)
    if not res <= tol:
        raise NoConvergenceError(f"retarded time did not converge: residual {res:.3g} > tol {tol:.3g}")
    return RetardedTimeResult(r=r, converged=True, iterations=it, residual=res)


def retarded_times(traj, x, t, cfg, tol=None):
    """Vectorized ``retarded_time`` over an array of times; returns r only."""
    t = np.asarray(t, dtype=float)
    tol = default_tol(cfg, t) if tol is None else tol
    r, _, res = _solve(traj, x, t, cfg, tol)
    if np.any(~(res <= tol)):
        raise NoConvergenceError(f"retarded time did not converge: max residual {np.max(res):.3g}")
    return r


def _doppler(traj, x, r, cfg):
    x = np.asarray(x, dtype=float)
    d = x - traj.clamped_position(r, cfg.T)
    nd = np.linalg.norm(d, axis=-1)
    if np.any(nd < 1e-12 * (1.0 + np.linalg.norm(x))):
        raise SourceAtSensorError("source coincides with the sensor")
    v = traj.clamped_velocity(r, cfg.T)
    return 1.0 - np.sum(v * d, axis=-1) / (cfg.c * nd), nd


def doppler_factor(traj, x, r, cfg):
    """h = 1 - b'(r).(x - b(r)) / (c |x - b(r)|)."""
    h, _ = _doppler(traj, x, r, cfg)
    return float(h) if np.ndim(h) == 0 else h


def field_values(traj, x, t, cfg, tol=None):
    t = np.asarray(t, dtype=float)
    r = retarded_times(traj, x, t, cfg, tol)
    h, nd = _doppler(traj, x, r, cfg)
    phi = cfg.lam / (4.0 * math.pi * nd * h)
    return np.where(r >= 0.0, phi, 0.0)


def field_value(traj, x, t, cfg, tol=None):
    return float(field_values(traj, x, np.asarray(float(t)), cfg, tol))


def time_grid(T_obs, dt):
    n = int(math.ceil(T_obs / dt - 1e-9))
    return np.arange(n + 1) * dt


def noise_stream(seed, sensor_index, n):
    """Standard normals for one sensor, keyed by (seed, sensor_index).

    Philox is counter based: sample k of a stream never depends on how
    other streams were consumed.
    """
    key = [int(seed) & 0xFFFF_FFFF_FFFF_FFFF, int(sensor_index)]
    return np.random.Generator(np.random.Philox(key=key)).standard_normal(n)


def synthesize_traces(traj, sensors, cfg, dom, dt, noise_sigma=0.0, seed=0):
    """Six sampled traces phi(x_i, t_k) on the uniform grid [0, T_obs]."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    hc = horizon_constants(dom, cfg)
    t = time_grid(hc.T_obs, dt)
    t.flags.writeable = False
    traces = []
    for i, x in enumerate(sensors.points, start=1):
        phi = field_values(traj, x, t, cfg)
        if noise_sigma > 0:
            phi = phi + noise_sigma * noise_stream(seed, i, t.size)
        phi.flags.writeable = False
        traces.append(FieldTrace(sensor_index=i, position=np.asarray(x), t_grid=t, values=phi,
                                 noise_sigma=float(noise_sigma), seed=int(seed)))
    return traces


def add_noise(traces, noise_sigma, seed):
    """Noisy copies of noiseless traces, same stream as ``synthesize_traces``."""
    out = []
    for tr in traces:
        v = tr.values + noise_sigma * noise_stream(seed, tr.sensor_index, tr.values.size)
        v.flags.writeable = False
        out.append(FieldTrace(tr.sensor_index, tr.position, tr.t_grid, v, float(noise_sigma), int(seed)))
    return out
