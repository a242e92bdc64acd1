"""Physical configuration, source trajectories and the six-sensor array.

Domains are balls: ``D`` holds the trajectory and the sensors sit on the
sphere ``Gamma`` bounding ``Omega``.  Every type here is immutable.
"""

import warnings
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    BoundExceededError,
    ConfigError,
    NotSubsonicError,
    ObservationTooShortError,
    OutsideDomainError,
    SingularPairingError,
)

PROBE_POINTS = 10_001
SINGULARITY_FACTOR = 1e-9
CONDITION_CAP = 1e6
SPHERE_RTOL = 1e-9

KINDS = ("stationary", "linear", "circular", "helical", "polynomial", "sampled")


def _vec3(v, name="vector"):
    a = np.asarray(v, dtype=float)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ConfigError(f"{name} must be a finite 3-vector, got {v!r}")
    return a


@dataclass(frozen=True)
class PhysicsConfig:
    c: float
    lam: float
    T: float
    c0_bound: float

    def __post_init__(self):
        if not (self.c > 0 and self.lam > 0 and self.T > 0):
            raise ConfigError("c, lambda and T must all be positive")
        if not (0 <= self.c0_bound < self.c):
            raise ConfigError(f"need 0 <= c0_bound < c, got c0_bound={self.c0_bound}, c={self.c}")

    @property
    def h0(self):
        return 1.0 - self.c0_bound / self.c

    def to_dict(self):
        return {"c": self.c, "lambda": self.lam, "T": self.T, "c0_bound": self.c0_bound}

    @classmethod
    def from_dict(cls, d):
        return cls(c=float(d["c"]), lam=float(d["lambda"]), T=float(d["T"]),
                   c0_bound=float(d["c0_bound"]))


@dataclass(frozen=True)
class DomainSpec:
    d_center: Any
    d_radius: float
    omega_center: Any
    omega_radius: float

    def __post_init__(self):
        object.__setattr__(self, "d_center", tuple(_vec3(self.d_center, "D_center")))
        object.__setattr__(self, "omega_center", tuple(_vec3(self.omega_center, "Omega_center")))
        if self.d_radius <= 0 or self.omega_radius <= 0:
            raise ConfigError("domain radii must be positive")
        if self.dist_gamma_d <= 0:
            raise ConfigError("closure of D must lie strictly inside Omega")

    @property
    def offset(self):
        return float(np.linalg.norm(np.subtract(self.d_center, self.omega_center)))

    @property
    def diam(self):
        return 2.0 * self.omega_radius

    @property
    def dist_gamma_d(self):
        return self.omega_radius - self.offset - self.d_radius

    @property
    def max_sensor_distance(self):
        """sup |x - y| over x on Gamma, y in D (farthest points of two balls)."""
        return self.omega_radius + self.offset + self.d_radius

    def to_dict(self):
        return {
            "D_center": list(self.d_center),
            "D_radius": self.d_radius,
            "Omega_center": list(self.omega_center),
            "Omega_radius": self.omega_radius,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d_center=d["D_center"], d_radius=float(d["D_radius"]),
                   omega_center=d["Omega_center"], omega_radius=float(d["Omega_radius"]))


@dataclass(frozen=True)
class HorizonConstants:
    T0: float
    T_obs: float
    diam_omega: float
    dist_gamma_d: float
    h0: float

    def to_dict(self):
        return {"T0": self.T0, "T_obs": self.T_obs, "diam_Omega": self.diam_omega,
                "dist_Gamma_D": self.dist_gamma_d, "h0": self.h0}


class Trajectory:
    """Source path b(t) with its velocity b'(t).

    Build instances with the ``stationary``/``linear``/... constructors.
    ``position`` and ``velocity`` evaluate the analytic (or spline) formula
    at any time; ``clamped_position``/``clamped_velocity`` apply the constant
    extension outside [0, T] that the retarded-time equation needs.
    """

    __slots__ = ("kind", "params", "_pos", "_vel")

    def __init__(self, kind, params):
        if kind not in KINDS:
            raise ConfigError(f"unknown trajectory kind {kind!r}")
        params = {k: (np.array(v, dtype=float) if not isinstance(v, (int, float)) else float(v))
                  for k, v in params.items()}
        for v in params.values():
            if isinstance(v, np.ndarray):
                if not np.all(np.isfinite(v)):
                    raise ConfigError(f"{kind} trajectory parameters must be finite")
                v.flags.writeable = False
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", params)
        pos, vel = _build_evaluators(kind, params)
        object.__setattr__(self, "_pos", pos)
        object.__setattr__(self, "_vel", vel)

    def __setattr__(self, name, value):
        raise AttributeError("Trajectory is immutable")

    def __repr__(self):
        return f"Trajectory(kind={self.kind!r})"

    def __eq__(self, other):
        if not isinstance(other, Trajectory) or other.kind != self.kind:
            return NotImplemented
        if self.params.keys() != other.params.keys():
            return False
        return all(np.array_equal(self.params[k], other.params[k]) for k in self.params)

    __hash__ = None

    # constructors -----------------------------------------------------

    @classmethod
    def stationary(cls, position):
        return cls("stationary", {"position": _vec3(position)})

    @classmethod
    def linear(cls, position, velocity):
        return cls("linear", {"position": _vec3(position), "velocity": _vec3(velocity)})

    @classmethod
    def circular(cls, center, radius, omega, phase=0.0):
        return cls("circular", {"center": _vec3(center), "radius": float(radius),
                                "omega": float(omega), "phase": float(phase)})

    @classmethod
    def helical(cls, center, radius, omega, vz, phase=0.0):
        return cls("helical", {"center": _vec3(center), "radius": float(radius),
                               "omega": float(omega), "vz": float(vz), "phase": float(phase)})

    @classmethod
    def polynomial(cls, coefficients):
        """b(t) = sum_k coefficients[k] * t**k, coefficients of shape (K, 3)."""
        c = np.atleast_2d(np.asarray(coefficients, dtype=float))
        if c.ndim != 2 or c.shape[1] != 3:
            raise ConfigError("polynomial coefficients must have shape (K, 3)")
        return cls("polynomial", {"coefficients": c})

    @classmethod
    def sampled(cls, times, positions):
        t = np.asarray(times, dtype=float)
        p = np.asarray(positions, dtype=float)
        if t.ndim != 1 or p.shape != (t.size, 3) or t.size < 4:
            raise ConfigError("sampled trajectory needs >= 4 times and positions of shape (n, 3)")
        if np.any(np.diff(t) <= 0):
            raise ConfigError("sample times must be strictly increasing")
        return cls("sampled", {"times": t, "positions": p})

    # evaluation -------------------------------------------------------

    def position(self, t):
        return self._pos(np.asarray(t, dtype=float))

    def velocity(self, t):
        return self._vel(np.asarray(t, dtype=float))

    def clamped_position(self, t, T):
        return self._pos(np.clip(np.asarray(t, dtype=float), 0.0, T))

    def clamped_velocity(self, t, T):
        t = np.asarray(t, dtype=float)
        v = self._vel(np.clip(t, 0.0, T))
        inside = (t >= 0.0) & (t <= T)
        return v * inside[..., None] if t.ndim else (v if inside else np.zeros(3))

    def analytic_max_speed(self, T):
        """Exact sup of |b'| on [0, T], or None for sampled paths."""
        p = self.params
        if self.kind == "stationary":
            return 0.0
        if self.kind == "linear":
            return float(np.linalg.norm(p["velocity"]))
        if self.kind == "circular":
            return abs(p["radius"] * p["omega"])
        if self.kind == "helical":
            return float(np.hypot(p["radius"] * p["omega"], p["vz"]))
        if self.kind == "polynomial":
            return _poly_max_speed(p["coefficients"], T)
        return None

    # derived trajectories ---------------------------------------------

    def translated(self, offset):
        offset = _vec3(offset, "offset")
        p = dict(self.params)
        if self.kind in ("stationary", "linear"):
            p["position"] = p["position"] + offset
        elif self.kind in ("circular", "helical"):
            p["center"] = p["center"] + offset
        elif self.kind == "polynomial":
            c = p["coefficients"].copy()
            c[0] += offset
            p["coefficients"] = c
        else:
            p["positions"] = p["positions"] + offset
        return Trajectory(self.kind, p)

    def time_scaled(self, s):
        """The path traversed s times faster: t -> b(s t)."""
        if s <= 0:
            raise ConfigError("time scale must be positive")
        p = dict(self.params)
        if self.kind == "linear":
            p["velocity"] = p["velocity"] * s
        elif self.kind in ("circular", "helical"):
            p["omega"] = p["omega"] * s
            if self.kind == "helical":
                p["vz"] = p["vz"] * s
        elif self.kind == "polynomial":
            c = p["coefficients"]
            p["coefficients"] = c * (s ** np.arange(len(c)))[:, None]
        elif self.kind == "sampled":
            p["times"] = p["times"] / s
        return Trajectory(self.kind, p)

    def as_polynomial(self):
        p = self.params
        if self.kind == "polynomial":
            return self
        if self.kind == "stationary":
            return Trajectory.polynomial([p["position"]])
        if self.kind == "linear":
            return Trajectory.polynomial([p["position"], p["velocity"]])
        raise ConfigError(f"{self.kind} trajectory has no polynomial form")

    def with_bump(self, amplitude, T):
        """Add amplitude * 16 t^2 (T - t)^2 / T^4.

        The bump vanishes with its first derivative at t = 0 and t = T, so
        the perturbed path keeps b(0), b(T) and b'(T).
        """
        amplitude = _vec3(amplitude, "amplitude")
        base = self.as_polynomial().params["coefficients"]
        # 16/T^4 * (T^2 t^2 - 2T t^3 + t^4)
        bump = np.array([0.0, 0.0, T * T, -2.0 * T, 1.0]) * 16.0 / T ** 4
        n = max(len(base), 5)
        coef = np.zeros((n, 3))
        coef[: len(base)] += base
        coef[:5] += bump[:, None] * amplitude[None, :]
        return Trajectory.polynomial(coef)

    # serialization ----------------------------------------------------

    def to_dict(self):
        d = {"kind": self.kind}
        for k, v in self.params.items():
            d[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind", None)
        try:
            if kind == "stationary":
                return cls.stationary(d["position"])
            if kind == "linear":
                return cls.linear(d["position"], d["velocity"])
            if kind == "circular":
                return cls.circular(d["center"], d["radius"], d["omega"], d.get("phase", 0.0))
            if kind == "helical":
                return cls.helical(d["center"], d["radius"], d["omega"], d["vz"], d.get("phase", 0.0))
            if kind == "polynomial":
                return cls.polynomial(d["coefficients"])
            if kind == "sampled":
                return cls.sampled(d["times"], d["positions"])
        except KeyError as exc:
            raise ConfigError(f"{kind} trajectory is missing parameter {exc}") from None
        raise ConfigError(f"unknown trajectory kind {kind!r}")


def _build_evaluators(kind, p):
    if kind == "stationary":
        b0 = p["position"]
        return (lambda t: np.broadcast_to(b0, t.shape + (3,)).copy(),
                lambda t: np.zeros(t.shape + (3,)))
    if kind == "linear":
        b0, v = p["position"], p["velocity"]
        return (lambda t: b0 + t[..., None] * v,
                lambda t: np.broadcast_to(v, t.shape + (3,)).copy())
    if kind in ("circular", "helical"):
        ctr, R, w, ph = p["center"], p["radius"], p["omega"], p["phase"]
        vz = p.get("vz", 0.0)

        def pos(t):
            a = w * t + ph
            return ctr + np.stack([R * np.cos(a), R * np.sin(a), vz * t], axis=-1)

        def vel(t):
            a = w * t + ph
            return np.stack([-R * w * np.sin(a), R * w * np.cos(a), np.full_like(a, vz)], axis=-1)

        return pos, vel
    if kind == "polynomial":
        c = p["coefficients"]
        dc = (c[1:] * np.arange(1, len(c))[:, None]) if len(c) > 1 else np.zeros((1, 3))

        def horner(coef, t):
            out = np.zeros(t.shape + (3,))
            for row in coef[::-1]:
                out = out * t[..., None] + row
            return out

        return (lambda t: horner(c, t), lambda t: horner(dc, t))
    spline = CubicSpline(p["times"], p["positions"], axis=0, bc_type="natural")
    dspline = spline.derivative()
    return (lambda t: spline(t), lambda t: dspline(t))


def _poly_max_speed(coef, T):
    dc = coef[1:] * np.arange(1, len(coef))[:, None]
    if len(dc) == 0:
        return 0.0
    # |b'(t)|^2 as a polynomial; its critical points bracket the sup
    sq = np.zeros(2 * len(dc) - 1)
    for j in range(3):
        sq = sq + np.convolve(dc[:, j], dc[:, j])
    crit = np.polynomial.polynomial.polyroots(np.polynomial.polynomial.polyder(sq)) if len(sq) > 1 else []
    cand = [0.0, T] + [z.real for z in np.atleast_1d(crit) if abs(z.imag) < 1e-12 and 0 <= z.real <= T]
    vals = np.polynomial.polynomial.polyval(np.array(cand), sq)
    return float(np.sqrt(max(vals.max(), 0.0)))


def validate_subsonic(traj, cfg):
    """Measured speed bound c0 of ``traj`` on [0, T].

    Raises NotSubsonicError when the speed reaches c and BoundExceededError
    when it exceeds the declared ``cfg.c0_bound``.
    """
    t = np.linspace(0.0, cfg.T, PROBE_POINTS)
    measured = float(np.max(np.linalg.norm(traj.velocity(t), axis=-1)))
    exact = traj.analytic_max_speed(cfg.T)
    if exact is not None:
        measured = max(measured, exact)
    if measured >= cfg.c:
        raise NotSubsonicError(f"sup |b'| = {measured:.6g} >= c = {cfg.c:.6g}")
    if measured > cfg.c0_bound * (1 + 1e-12):
        raise BoundExceededError(
            f"sup |b'| = {measured:.6g} exceeds declared c0_bound = {cfg.c0_bound:.6g}")
    return measured


def check_inside_domain(traj, cfg, dom):
    t = np.linspace(0.0, cfg.T, PROBE_POINTS)
    dist = np.linalg.norm(traj.position(t) - np.asarray(dom.d_center), axis=-1)
    worst = float(dist.max())
    if worst >= dom.d_radius:
        raise OutsideDomainError(
            f"trajectory leaves D: max |b - D_center| = {worst:.6g} >= D_radius = {dom.d_radius:.6g}")
    return worst


@dataclass(frozen=True)
class SensorArray:
    points: np.ndarray = field(repr=False)
    pairing_matrix: np.ndarray = field(repr=False)
    det_X: float
    cond_X: float

    @property
    def inv_norm_inf(self):
        """Max-row-sum norm of X^-1."""
        return float(np.abs(np.linalg.inv(self.pairing_matrix)).sum(axis=1).max())

    def to_dict(self):
        return {"points": self.points.tolist(), "det_X": self.det_X, "cond_X": self.cond_X}


def pairing_matrix(points):
    p = np.asarray(points, dtype=float)
    return np.stack([p[1] - p[0], p[3] - p[2], p[5] - p[4]])


def check_sensor_matrix(points, dom=None, scale=None):
    """Validate six sensor positions and build the pairing matrix X.

    ``scale`` is the length used in the singularity threshold
    ``1e-9 * scale**3``; it defaults to diam(Omega) when ``dom`` is given and
    to the largest inter-sensor distance otherwise.  With ``dom`` the points
    must also lie on Gamma.
    """
    p = np.array(points, dtype=float)
    if p.shape != (6, 3) or not np.all(np.isfinite(p)):
        raise ConfigError("sensor array needs six finite 3-D points")
    if dom is not None:
        radii = np.linalg.norm(p - np.asarray(dom.omega_center), axis=1)
        if not np.allclose(radii, dom.omega_radius, rtol=SPHERE_RTOL, atol=0):
            raise ConfigError(f"sensors must lie on Gamma (radius {dom.omega_radius}), got radii {radii}")
        if scale is None:
            scale = dom.diam
    if scale is None:
        scale = float(np.max(np.linalg.norm(p[:, None] - p[None, :], axis=-1)))
    X = pairing_matrix(p)
    det = float(np.linalg.det(X))
    if not abs(det) > SINGULARITY_FACTOR * scale ** 3:
        raise SingularPairingError(f"|det X| = {abs(det):.3g} is below {SINGULARITY_FACTOR * scale ** 3:.3g}")
    cond = float(np.linalg.cond(X))
    if cond > CONDITION_CAP:
        warnings.warn(f"sensor pairing matrix is ill-conditioned (cond = {cond:.3g})", stacklevel=2)
    p.flags.writeable = False
    X.flags.writeable = False
    return SensorArray(points=p, pairing_matrix=X, det_X=det, cond_X=cond)


def axis_sensors(dom):
    """The +-axis pairs on Gamma: X = -2 R I."""
    c, R = np.asarray(dom.omega_center), dom.omega_radius
    e = np.eye(3) * R
    pts = [c + e[0], c - e[0], c + e[1], c - e[1], c + e[2], c - e[2]]
    return check_sensor_matrix(pts, dom)


def select_sensors(dom, n_candidates, seed):
    """Best of ``n_candidates`` random 6-tuples on Gamma by |det X|."""
    if n_candidates < 1:
        raise ConfigError("n_candidates must be >= 1")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n_candidates, 6, 3))
    pts = np.asarray(dom.omega_center) + dom.omega_radius * g / np.linalg.norm(g, axis=-1, keepdims=True)
    X = np.stack([pts[:, 1] - pts[:, 0], pts[:, 3] - pts[:, 2], pts[:, 5] - pts[:, 4]], axis=1)
    best = int(np.argmax(np.abs(np.linalg.det(X))))
    p = pts[best]
    Xb = X[best]
    p.flags.writeable = False
    Xb.flags.writeable = False
    det = float(np.linalg.det(Xb))
    cond = float(np.linalg.cond(Xb)) if det != 0 else float("inf")
    return SensorArray(points=p, pairing_matrix=Xb, det_X=det, cond_X=cond)


def horizon_constants(dom, cfg):
    T0 = dom.max_sensor_distance / cfg.c
    if cfg.T <= T0:
        raise ObservationTooShortError(
            f"T = {cfg.T:.6g} must exceed T0 = sup|x - y|/c = {T0:.6g} "
            "(the field from D must reach every sensor on Gamma before T)")
    return HorizonConstants(T0=T0, T_obs=cfg.T + T0, diam_omega=dom.diam,
                            dist_gamma_d=dom.dist_gamma_d, h0=cfg.h0)


def sensors_from_config(d, dom):
    """Sensor section of a config: explicit points, ``"axis"``, or a random search."""
    if d == "axis" or (isinstance(d, Mapping) and d.get("layout") == "axis"):
        return axis_sensors(dom)
    if isinstance(d, Mapping) and "points" in d:
        return check_sensor_matrix(d["points"], dom)
    if isinstance(d, Mapping) and "select" in d:
        sel = d["select"]
        arr = select_sensors(dom, int(sel.get("n_candidates", 1000)), int(sel.get("seed", 0)))
        return check_sensor_matrix(arr.points, dom)
    raise ConfigError("sensors must be 'axis', {'points': [...]} or {'select': {...}}")
