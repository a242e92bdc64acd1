"""Lipschitz stability: closed-form constants and perturbation experiments.

The r and b constants are explicit envelopes assembled term by term from
the stability argument.  They are upper bounds, never claimed sharp.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MovingSourceError
from .forward import add_noise, retarded_times, synthesize_traces
from .geometry import horizon_constants
from .inverse import reconstruct_trajectory
from .parallel import pmap

FAMILIES = ("translate", "speed", "bump")


@dataclass(frozen=True)
class StabilityConstants:
    C_t: float
    C_r_exp_factor: float
    C_r_prefactors: tuple
    C_r_envelope: float
    C_b_scale: float
    C_b_envelope: float
    h0: float
    inv_X_norm_inf: float

    def to_dict(self):
        return {
            "C_t": self.C_t,
            "C_r_exp_factor": self.C_r_exp_factor,
            "C_r_prefactors": {"arrival_term": self.C_r_prefactors[0],
                               "source_term": self.C_r_prefactors[1]},
            "C_r_envelope": self.C_r_envelope,
            "C_b_scale": self.C_b_scale,
            "C_b_envelope": self.C_b_envelope,
            "h0": self.h0,
            "inv_X_norm_inf": self.inv_X_norm_inf,
            "kind": "envelope",
        }


def theoretical_bounds(hc, cfg, sensors):
    """Explicit stability constants for the arrival times, r and b.

    - C_t = 8 pi T_obs diam / lam bounds |t_x - t~_x| per unit ||phi - phi~||.
    - The r-envelope is 16 pi T_obs diam / (lam h0) plus the pre-Gronwall
      terms 8 pi T_obs diam / (lam h0) + 8 pi c T_obs^2 / lam scaled by
      exp(c T_obs / (dist(Gamma, D) h0)).
    - |b - b~|_inf <= 2 c^2 T_obs ||X^-1||_inf C_r S, with S the largest
      pairwise sum ||phi_i - phi~_i|| + ||phi_{i+1} - phi~_{i+1}||.
    """
    lam, c, T_obs, diam = cfg.lam, cfg.c, hc.T_obs, hc.diam_omega
    h0 = hc.h0
    C_t = 8.0 * math.pi * T_obs * diam / lam
    expf = math.exp(c * T_obs / (hc.dist_gamma_d * h0))
    pre = (8.0 * math.pi * T_obs * diam / (lam * h0), 8.0 * math.pi * c * T_obs ** 2 / lam)
    C_r = 16.0 * math.pi * T_obs * diam / (lam * h0) + (pre[0] + pre[1]) * expf
    inv_norm = sensors.inv_norm_inf
    C_b_scale = c * c * T_obs * inv_norm
    return StabilityConstants(C_t=C_t, C_r_exp_factor=expf, C_r_prefactors=pre, C_r_envelope=C_r,
                              C_b_scale=C_b_scale, C_b_envelope=2.0 * C_b_scale * C_r, h0=h0,
                              inv_X_norm_inf=inv_norm)


@dataclass(frozen=True)
class ExperimentSetup:
    sensors: object
    cfg: object
    dom: object
    dt: float
    tau_grid: np.ndarray
    threshold: object = None


@dataclass(frozen=True)
class PerturbationResult:
    delta_phi: np.ndarray
    delta_phi_sup: float
    delta_t: np.ndarray
    delta_r_sup: np.ndarray
    delta_b_sup: float
    ratios: dict
    arrival_bound_pass: np.ndarray
    arrival_bound: np.ndarray
    b_envelope: float
    r_envelope: np.ndarray = field(repr=False, default=None)

    @property
    def delta_t_max(self):
        return float(self.delta_t.max())

    @property
    def delta_r_max(self):
        return float(self.delta_r_sup.max())


def _ratio(num, den):
    if den > 0:
        return num / den
    return 0.0 if num == 0 else math.inf


def perturbed(base, family, epsilon, direction=(1.0, 0.0, 0.0), T=None):
    """Member of a one-parameter trajectory family around ``base``.

    translate: b + eps u;  speed: t -> b((1 + eps) t);
    bump: b + eps u 16 t^2 (T - t)^2 / T^4 (same b(0), b(T), b'(T)).
    """
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    if family == "translate":
        return base.translated(epsilon * u)
    if family == "speed":
        return base.time_scaled(1.0 + epsilon)
    if family == "bump":
        if T is None:
            raise ValueError("bump family needs the horizon T")
        return base.with_bump(epsilon * u, T)
    raise ValueError(f"unknown perturbation family {family!r}")


def _curve_gap(cv, cv_t, t_grid):
    t0 = min(cv.t_grid[0], cv_t.t_grid[0])
    pts = np.concatenate([t_grid[t_grid >= t0], [cv.t_grid[0], cv_t.t_grid[0]]])
    return float(np.max(np.abs(cv(pts) - cv_t(pts))))


def pair_experiment(traj, traj_tilde, setup, constants=None):
    """Reconstruct two noiseless trajectories and compare every stage."""
    cfg, dom, sensors = setup.cfg, setup.dom, setup.sensors
    hc = horizon_constants(dom, cfg)
    constants = constants or theoretical_bounds(hc, cfg, sensors)
    tr = synthesize_traces(traj, sensors, cfg, dom, setup.dt)
    tr_t = synthesize_traces(traj_tilde, sensors, cfg, dom, setup.dt)
    rep = reconstruct_trajectory(tr, sensors, cfg, dom, setup.tau_grid, threshold=setup.threshold)
    rep_t = reconstruct_trajectory(tr_t, sensors, cfg, dom, setup.tau_grid, threshold=setup.threshold)

    dphi = np.array([np.max(np.abs(a.values - b.values)) for a, b in zip(tr, tr_t)])
    dphi_sup = float(dphi.max())
    dt_x = np.array([abs(a.t_x - b.t_x) for a, b in
                     zip(rep.per_sensor_arrivals, rep_t.per_sensor_arrivals)])
    dr = np.array([_curve_gap(a, b, tr[0].t_grid) for a, b in zip(rep.curves, rep_t.curves)])
    common = np.intersect1d(rep.tau_grid, rep_t.tau_grid)
    ia = np.searchsorted(rep.tau_grid, common)
    ib = np.searchsorted(rep_t.tau_grid, common)
    db = np.linalg.norm(rep.b_hat[ia] - rep_t.b_hat[ib], axis=-1)
    db_sup = float(db.max()) if db.size else 0.0

    arrival_bound = constants.C_t * dphi
    pair_sum = max(dphi[i] + dphi[i + 1] for i in (0, 2, 4))
    # Euclidean norm <= sqrt(3) times the max-norm the estimate controls
    b_env = math.sqrt(3.0) * constants.C_b_envelope * pair_sum
    ratios = {"t": _ratio(float(dt_x.max()), dphi_sup), "r": _ratio(float(dr.max()), dphi_sup),
              "b": _ratio(db_sup, dphi_sup)}
    return PerturbationResult(delta_phi=dphi, delta_phi_sup=dphi_sup, delta_t=dt_x, delta_r_sup=dr,
                              delta_b_sup=db_sup, ratios=ratios, arrival_bound_pass=dt_x <= arrival_bound,
                              arrival_bound=arrival_bound, b_envelope=b_env,
                              r_envelope=constants.C_r_envelope * dphi)


@dataclass(frozen=True)
class NoiseRun:
    sigma: float
    seed: int
    delta_phi_sup: float
    delta_t_max: float
    delta_r_max: float
    delta_b_sup: float
    status: str

    def row(self):
        return [self.sigma, self.seed, self.delta_phi_sup, self.delta_t_max, self.delta_r_max,
                self.delta_b_sup, self.status]


def _noise_run(traj, setup, clean, sigma, seed, exact_r):
    cfg, dom, sensors = setup.cfg, setup.dom, setup.sensors
    traces = add_noise(clean, sigma, seed) if sigma > 0 else clean
    dphi = float(max(np.max(np.abs(a.values - b.values)) for a, b in zip(traces, clean)))
    try:
        rep = reconstruct_trajectory(traces, sensors, cfg, dom, setup.tau_grid,
                                     threshold=setup.threshold, truth=traj)
    except MovingSourceError as exc:
        nan = float("nan")
        return NoiseRun(sigma, seed, dphi, nan, nan, nan, type(exc).__name__)
    t_true = np.linalg.norm(sensors.points - traj.position(0.0), axis=1) / cfg.c
    t_hat = np.array([a.t_x for a in rep.per_sensor_arrivals])
    t_grid = clean[0].t_grid
    dr = 0.0
    for cv, ex in zip(rep.curves, exact_r):
        dr = max(dr, float(np.max(np.abs(cv(t_grid) - ex))))
    return NoiseRun(sigma, seed, dphi, float(np.max(np.abs(t_hat - t_true))), dr,
                    float(rep.error_sup), "ok")


def noise_sweep(traj, setup, sigmas, seeds_per_sigma, seed0=0):
    """Reconstruction error against the true trajectory under trace noise.

    Returns (runs, summary) where summary maps sigma to median/max of
    delta_b_sup over seeds; failed runs count as +inf.
    """
    cfg, dom, sensors = setup.cfg, setup.dom, setup.sensors
    clean = synthesize_traces(traj, sensors, cfg, dom, setup.dt)
    t_grid = clean[0].t_grid
    exact_r = [np.maximum(retarded_times(traj, x, t_grid, cfg), 0.0) for x in sensors.points]
    jobs = [(float(s), seed0 + k) for s in sigmas for k in range(seeds_per_sigma)]
    runs = pmap(lambda job: _noise_run(traj, setup, clean, job[0], job[1], exact_r), jobs)
    summary = {}
    for s in dict.fromkeys(float(x) for x in sigmas):
        vals = np.array([r.delta_b_sup if r.status == "ok" else math.inf for r in runs if r.sigma == s])
        summary[s] = {"median_delta_b_sup": float(np.median(vals)), "max_delta_b_sup": float(vals.max()),
                      "failures": int(np.sum(~np.isfinite(vals)))}
    return runs, summary
