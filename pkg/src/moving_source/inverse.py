"""Trajectory reconstruction from six sensor traces.

Pipeline per sensor: detect the arrival time, integrate

    dr/dt = (4 pi c phi(t) / lam) (t - r),   r(t_x) = 0,

for the retarded time r(x_i, .), then invert r(x_i, t) = tau.  The six
ranges c (t_{i,tau} - tau) give three pairwise differences of squared
ranges, i.e. the linear system X b(tau) = A / 2.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator
from scipy.optimize import least_squares

from .errors import (
    MonotonicityViolationError,
    NegativeFieldError,
    NegativeRangeError,
    NoArrivalError,
    OutOfRangeError,
    PipelineError,
    SingularPairingError,
)
from .geometry import SINGULARITY_FACTOR, horizon_constants
from .parallel import pmap

PAIRS = ((0, 1), (2, 3), (4, 5))


@dataclass(frozen=True)
class ThresholdSpec:
    abs_floor: float = 1e-12
    k_sigma: float = 5.0
    hold: int = 5

    def level(self, sigma):
        return max(self.abs_floor, self.k_sigma * sigma)


def default_threshold(cfg, dom, k_sigma=5.0, hold=5):
    """Floor of 1e-12 relative to the largest field a source in D can produce."""
    floor = 1e-12 * cfg.lam / (4.0 * math.pi * dom.dist_gamma_d)
    return ThresholdSpec(abs_floor=floor, k_sigma=k_sigma, hold=hold)


@dataclass(frozen=True)
class ArrivalTime:
    t_x: float
    detection_margin: float
    threshold: float = 0.0
    # first sample of the above-threshold run
    index: Optional[int] = None


@dataclass(frozen=True)
class RetardedTimeCurve:
    sensor_index: int
    t_grid: np.ndarray = field(repr=False)
    r_values: np.ndarray = field(repr=False)
    slopes: np.ndarray = field(repr=False)

    @property
    def r_max(self):
        return float(self.r_values[-1])

    def interpolant(self):
        """Monotone piecewise-cubic Hermite interpolant of the curve."""
        return CubicHermiteSpline(self.t_grid, self.r_values,
                                  _limit_slopes(self.t_grid, self.r_values, self.slopes))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = self.interpolant()(np.clip(t, self.t_grid[0], self.t_grid[-1]))
        return np.where(t < self.t_grid[0], 0.0, out)


@dataclass(frozen=True)
class ReconstructionReport:
    tau_grid: np.ndarray
    b_hat: np.ndarray
    b0_hat: np.ndarray
    per_sensor_arrivals: list
    diagnostics: dict
    dropped_tau: np.ndarray
    curves: list = field(default=None, repr=False)
    error_sup: Optional[float] = None
    errors: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self):
        d = {
            "tau": self.tau_grid.tolist(),
            "b_hat": self.b_hat.tolist(),
            "b0_hat": self.b0_hat.tolist(),
            "arrivals": [{"sensor": i + 1, "t_x": a.t_x, "detection_margin": a.detection_margin}
                         for i, a in enumerate(self.per_sensor_arrivals)],
            "dropped_tau": self.dropped_tau.tolist(),
            "diagnostics": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                            for k, v in self.diagnostics.items()},
        }
        if self.error_sup is not None:
            d["error_sup"] = self.error_sup
            d["errors"] = self.errors.tolist()
        return d


# ---------------------------------------------------------------------------
# arrival detection


def detect_arrival(trace, threshold=None):
    """Arrival time from a thresholded run of ``hold`` samples."""
    spec = threshold or ThresholdSpec()
    theta = spec.level(trace.noise_sigma)
    hold = int(spec.hold)
    above = np.asarray(trace.values) > theta
    if above.size < hold:
        raise NoArrivalError("trace shorter than the hold window")
    run = np.convolve(above.astype(np.int64), np.ones(hold, dtype=np.int64), mode="valid") == hold
    starts = np.flatnonzero(run)
    if starts.size == 0:
        raise NoArrivalError(f"no run of {hold} samples above threshold {theta:.3g}")
    k = int(starts[0])
    t, dt = trace.t_grid, trace.dt
    t_x = 0.5 * (t[k - 1] + t[k]) if k > 0 else float(t[0])
    return ArrivalTime(t_x=float(t_x), detection_margin=hold * dt / 2 + dt, threshold=theta, index=k)


# ---------------------------------------------------------------------------
# the ODE for r


def _rk4_affine(t0, t1, a0, am, a1):
    """One RK4 step of y' = a(t) (t - y) written as y1 = alpha y0 + beta."""
    h = t1 - t0
    tm = t0 + 0.5 * h

    def step(y):
        k1 = a0 * (t0 - y)
        k2 = am * (tm - (y + 0.5 * h * k1))
        k3 = am * (tm - (y + 0.5 * h * k2))
        k4 = a1 * (t1 - (y + h * k3))
        return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    beta = step(0.0)
    return step(1.0) - beta, beta


def _limit_slopes(t, y, m):
    """Fritsch-Carlson limiter: keep the Hermite cubic monotone on every interval."""
    m = np.maximum(np.asarray(m, dtype=float), 0.0)
    delta = np.diff(y) / np.diff(t)
    scale = np.ones_like(delta)
    flat = delta <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        a = m[:-1] / delta
        b = m[1:] / delta
        rad = np.hypot(a, b)
        scale = np.where(~flat & (rad > 3.0), 3.0 / rad, 1.0)
    left = np.where(flat, 0.0, scale)
    right = np.where(flat, 0.0, scale)
    node = np.ones_like(m)
    node[:-1] = np.minimum(node[:-1], left)
    node[1:] = np.minimum(node[1:], right)
    return m * node


class _CurveFamily:
    """All RK4 solutions of the r-ODE that start inside one grid cell.

    The ODE is linear, so on the grid nodes t_k, t_{k+1}, ... the RK4
    solution with r(t_k) = s is exactly p + s G.  A start t_x in
    (t_{k-1}, t_k] enters only through s, obtained by one partial RK4 step
    from t_x to t_k.
    """

    def __init__(self, trace, k, theta, cfg):
        t, v = trace.t_grid, np.asarray(trace.values)
        if k is None or k >= t.size - 2:
            raise NoArrivalError("trace ends before the arrival")
        self.kappa = 4.0 * math.pi * cfg.c / cfg.lam
        self.theta = theta
        first = k if v[k] > theta else k + 1
        self.phi_interp = PchipInterpolator(t[first:], v[first:], extrapolate=True)
        nodes = t[k:]
        phi = v[k:].copy()
        if first > k:
            phi[0] = self.phi_interp(nodes[0])
        mid = 0.5 * (nodes[:-1] + nodes[1:])
        phi_mid = self.phi_interp(mid)
        low = min(phi.min(), phi_mid.min())
        if low < -theta:
            raise NegativeFieldError(f"field {low:.3g} below -threshold {theta:.3g} after arrival")
        self.nodes, self.phi = nodes, phi
        a = self.kappa * phi
        alpha, beta = _rk4_affine(nodes[:-1], nodes[1:], a[:-1], self.kappa * phi_mid, a[1:])
        p = np.empty(nodes.size)
        g = np.empty(nodes.size)
        p[0], g[0] = 0.0, 1.0
        pk, gk = 0.0, 1.0
        al, be = alpha.tolist(), beta.tolist()
        for j in range(len(al)):
            pk = al[j] * pk + be[j]
            gk = al[j] * gk
            p[j + 1] = pk
            g[j + 1] = gk
        self.p, self.g = p, g
        self.dp = a * (nodes - p)
        self.dg = -a * g
        self.dt = trace.dt
        self.t_end = float(t[-1])

    def start_value(self, t_x):
        """r(t_k) for the solution with r(t_x) = 0."""
        t1 = self.nodes[0]
        if t1 - t_x <= 1e-9 * self.dt:
            return 0.0
        a0, am = self.kappa * self.phi_interp([t_x, 0.5 * (t_x + t1)])
        _, beta = _rk4_affine(t_x, t1, a0, am, self.kappa * self.phi[0])
        return float(beta)

    def curve(self, t_x, sensor_index):
        s = self.start_value(t_x)
        r = self.p + s * self.g
        slopes = self.dp + s * self.dg
        t = self.nodes
        if s > 0.0:
            phi0 = float(self.phi_interp(t_x))
            t = np.concatenate([[t_x], t])
            r = np.concatenate([[0.0], r])
            slopes = np.concatenate([[self.kappa * phi0 * t_x], slopes])
        drop = np.diff(r)
        tol = max(1e-12 * self.t_end, 2.0 * self.kappa * self.theta * self.t_end * self.dt)
        if drop.size and drop.min() < -tol:
            raise MonotonicityViolationError(
                f"retarded time decreases by {-drop.min():.3g} (tolerance {tol:.3g})")
        r = np.maximum.accumulate(r)
        for arr in (t, r, slopes):
            arr.flags.writeable = False
        return RetardedTimeCurve(sensor_index=sensor_index, t_grid=t, r_values=r, slopes=slopes)

    def splines(self):
        return (CubicHermiteSpline(self.nodes, self.p, self.dp),
                CubicHermiteSpline(self.nodes, self.g, self.dg))


def _start_index(trace, t_x):
    t = trace.t_grid
    return int(np.searchsorted(t, t_x - 1e-9 * trace.dt))


def integrate_retarded_curve(trace, arrival, cfg):
    """RK4 solution of the r-ODE from r(t_x) = 0 up to the end of the trace.

    The step is the trace spacing (plus one partial step when t_x is off the
    grid); phi between samples comes from a monotone (PCHIP) interpolant.
    """
    k = _start_index(trace, arrival.t_x)
    fam = _CurveFamily(trace, k, arrival.threshold, cfg)
    return fam.curve(arrival.t_x, trace.sensor_index)


# ---------------------------------------------------------------------------
# inversion of r(x_i, .)


def _bisect(f, lo, hi, target, tol):
    """Smallest t in [lo, hi] with f(t) >= target, for f nondecreasing (vectorized)."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    while np.any(hi - lo > tol):
        mid = 0.5 * (lo + hi)
        up = f(mid) >= target
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    # secant inside the final bracket: stays in (lo, hi] but drops the O(tol) bias
    flo, fhi = f(lo), f(hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(fhi > flo, (target - flo) / (fhi - flo), 1.0)
    return lo + np.clip(w, 0.0, 1.0) * (hi - lo)


def invert_curve(curve, tau, tol=None):
    """The time t with r(x_i, t) = tau (smallest one on flat stretches)."""
    scalar = np.ndim(tau) == 0
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    t, r = curve.t_grid, curve.r_values
    tol = 1e-12 * float(t[-1]) if tol is None else tol
    if np.any(tau > r[-1]) or np.any(tau < 0):
        raise OutOfRangeError(f"tau outside the reconstructed range [0, {r[-1]:.6g}]",
                              sensor=curve.sensor_index)
    idx = np.searchsorted(r, tau, side="left")
    exact = r[idx] == tau
    lo = t[np.maximum(idx - 1, 0)]
    hi = t[idx]
    out = _bisect(curve.interpolant(), lo, hi, tau, tol)
    out = np.where(exact, hi, out)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# linear system


def assemble_rhs(sensors, t_taus, tau, c):
    """A = (A_12, A_34, A_56) with
    A_ij = |x_j|^2 - |x_i|^2 + c^2 (t_i - tau)^2 - c^2 (t_j - tau)^2.

    Broadcasts over leading axes: ``t_taus`` (..., 6), ``tau`` (...).
    """
    t_taus = np.asarray(t_taus, dtype=float)
    tau = np.asarray(tau, dtype=float)
    rng = t_taus - tau[..., None]
    if np.any(rng < 0):
        raise NegativeRangeError("t_{i,tau} < tau gives a negative range")
    x2 = np.sum(np.asarray(sensors.points) ** 2, axis=1)
    d2 = (c * rng) ** 2
    return np.stack([x2[j] - x2[i] + d2[..., i] - d2[..., j] for i, j in PAIRS], axis=-1)


def _check_pairing(sensors):
    pts = np.asarray(sensors.points)
    scale = float(np.max(np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)))
    det = float(np.linalg.det(sensors.pairing_matrix))
    if not abs(det) > SINGULARITY_FACTOR * scale ** 3:
        raise SingularPairingError(f"|det X| = {abs(det):.3g} too small")


def solve_position(sensors, A):
    """b = X^-1 A / 2 (broadcasts over leading axes of A)."""
    _check_pairing(sensors)
    A = np.asarray(A, dtype=float)
    X = sensors.pairing_matrix
    if A.ndim == 1:
        return np.linalg.solve(X, 0.5 * A)
    return np.linalg.solve(X, 0.5 * A.reshape(-1, 3).T).T.reshape(A.shape)


def position_residual(sensors, A, B):
    return np.linalg.norm(np.asarray(B) @ sensors.pairing_matrix.T - 0.5 * np.asarray(A), axis=-1)


def estimate_initial_position(sensors, arrivals, c):
    """b(0) from |x_i - b(0)| = c t_{x_i} (the linear system at tau = 0)."""
    t_x = np.array([a.t_x if isinstance(a, ArrivalTime) else float(a) for a in arrivals])
    return solve_position(sensors, assemble_rhs(sensors, t_x, 0.0, c))


# ---------------------------------------------------------------------------
# sub-grid arrival refinement


def refine_arrivals(traces, arrivals, sensors, cfg, n_fit=30, prior_weight=1e-4):
    """Locate each noiseless arrival inside its grid cell.

    A single trace fixes t_x only to within one sample: every start in the
    cell yields an r-curve consistent with that trace.  Across six sensors
    only the true starts make the ranges c (t_{i,tau} - tau) consistent with
    one point b(tau) for every tau (and c t_{x_i} with one b(0)).  The six
    in-cell offsets are fitted by least squares on that
    inconsistency; a weak prior pulls unidentifiable directions to the cell
    midpoint.
    """
    fams = [_CurveFamily(tr, a.index, a.threshold, cfg) for tr, a in zip(traces, arrivals)]
    lo = np.array([tr.t_grid[a.index - 1] for tr, a in zip(traces, arrivals)])
    hi = np.array([tr.t_grid[a.index] for tr, a in zip(traces, arrivals)])
    tau_hi = 0.98 * min(cfg.T, min(f.p[-1] for f in fams))
    taus = np.linspace(0.0, tau_hi, n_fit + 1)[1:]
    splines = [f.splines() for f in fams]
    base = np.stack([_bisect(P, np.full(taus.size, f.nodes[0]), np.full(taus.size, f.nodes[-1]),
                             taus, 1e-13 * f.t_end)
                     for f, (P, _) in zip(fams, splines)], axis=1)
    pts = np.asarray(sensors.points)
    c = cfg.c
    dt = float(np.max(hi - lo))

    def inverted(s):
        out = base.copy()
        for i, (P, G) in enumerate(splines):
            ti = out[:, i]
            for _ in range(4):
                val = P(ti) + s[i] * G(ti) - taus
                der = P(ti, 1) + s[i] * G(ti, 1)
                ti = ti - val / der
            out[:, i] = ti
        return out

    def residual(u):
        t_x = lo + u * (hi - lo)
        s = np.array([f.start_value(tx) for f, tx in zip(fams, t_x)])
        t_tau = inverted(s)
        ranges = c * (t_tau - taus[:, None])
        B = solve_position(sensors, assemble_rhs(sensors, t_tau, taus, c))
        res = np.linalg.norm(pts[None] - B[:, None], axis=-1) - ranges
        b0 = solve_position(sensors, assemble_rhs(sensors, t_x, 0.0, c))
        res0 = np.linalg.norm(pts - b0, axis=1) - c * t_x
        return np.concatenate([res.ravel(), res0, prior_weight * c * dt * (u - 0.5)])

    # unbounded LM converges where bounded TRF stalls near a cell edge; the
    # cell constraint is applied afterwards
    sol = least_squares(residual, np.full(6, 0.5), method="lm", diff_step=1e-6,
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400)
    t_x = lo + np.clip(sol.x, 0.0, 1.0) * (hi - lo)
    return [replace(a, t_x=float(tx)) for a, tx in zip(arrivals, t_x)]


# ---------------------------------------------------------------------------
# full pipeline


def _tagged(step, sensor, fn, *args):
    try:
        return fn(*args)
    except PipelineError as exc:
        raise type(exc)(str(exc), sensor=sensor, step=step) from exc


def reconstruct_trajectory(traces, sensors, cfg, dom, tau_grid, threshold=None, refine=None,
                           truth=None):
    """Run the five reconstruction steps on six traces.

    ``refine`` enables the sub-grid arrival fit; by default it runs when
    every trace is noiseless.  ``truth`` (a Trajectory) adds error metrics.
    τ values beyond any sensor's reconstructed range are dropped and listed
    in ``dropped_tau``.
    """
    if len(traces) != 6:
        raise ValueError("exactly six traces are required")
    t0 = traces[0].t_grid
    if any(tr.t_grid.shape != t0.shape or not np.array_equal(tr.t_grid, t0) for tr in traces):
        raise ValueError("traces must share one time grid")
    horizon_constants(dom, cfg)
    threshold = threshold or default_threshold(cfg, dom)

    arrivals = pmap(lambda tr: _tagged("detect_arrival", tr.sensor_index, detect_arrival, tr, threshold),
                    traces)
    if refine is None:
        refine = all(tr.noise_sigma == 0 for tr in traces)
    if refine:
        arrivals = _tagged("refine_arrivals", None, refine_arrivals, traces, arrivals, sensors, cfg)
    curves = pmap(lambda ta: _tagged("integrate_retarded_curve", ta[0].sensor_index,
                                     integrate_retarded_curve, ta[0], ta[1], cfg),
                  list(zip(traces, arrivals)))

    tau = np.asarray(tau_grid, dtype=float)
    r_cap = min(cv.r_max for cv in curves)
    ok = (tau >= 0) & (tau <= r_cap)
    acc, dropped = tau[ok], tau[~ok]
    if acc.size:
        t_tau = np.stack([_tagged("invert_curve", cv.sensor_index, invert_curve, cv, acc)
                          for cv in curves], axis=1)
    else:
        t_tau = np.empty((0, 6))
    A = _tagged("assemble_rhs", None, assemble_rhs, sensors, t_tau, acc, cfg.c)
    B = solve_position(sensors, A)
    pts = np.asarray(sensors.points)
    range_res = np.abs(np.linalg.norm(pts[None] - B[:, None], axis=-1) - cfg.c * (t_tau - acc[:, None]))
    diagnostics = {
        "cond_X": sensors.cond_X,
        "det_X": sensors.det_X,
        "refined_arrivals": bool(refine),
        "linear_residual": position_residual(sensors, A, B),
        "range_residual": range_res.max(axis=1) if acc.size else np.empty(0),
        "t_tau": t_tau,
    }
    b0 = estimate_initial_position(sensors, arrivals, cfg.c)
    errors = error_sup = None
    if truth is not None:
        errors = np.linalg.norm(B - truth.position(acc), axis=-1)
        error_sup = float(errors.max()) if errors.size else 0.0
        diagnostics["b0_error"] = float(np.linalg.norm(b0 - truth.position(0.0)))
    return ReconstructionReport(tau_grid=acc, b_hat=B, b0_hat=b0, per_sensor_arrivals=arrivals,
                                diagnostics=diagnostics, dropped_tau=dropped, curves=curves,
                                error_sup=error_sup, errors=errors)
