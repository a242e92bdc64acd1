"""JSON configuration documents and the CSV/JSON file formats."""

import copy
import csv
import json
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError
from .forward import FieldTrace
from .geometry import DomainSpec, PhysicsConfig, Trajectory, check_sensor_matrix, sensors_from_config

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "physics": {
            "type": "object",
            "properties": {"c": {"type": "number", "exclusiveMinimum": 0},
                           "lambda": {"type": "number", "exclusiveMinimum": 0},
                           "T": {"type": "number", "exclusiveMinimum": 0},
                           "c0_bound": {"type": "number", "minimum": 0}},
            "required": ["c", "lambda", "T", "c0_bound"],
        },
        "domain": {
            "type": "object",
            "properties": {"D_center": _VEC3, "D_radius": {"type": "number", "exclusiveMinimum": 0},
                           "Omega_center": _VEC3,
                           "Omega_radius": {"type": "number", "exclusiveMinimum": 0}},
            "required": ["D_center", "D_radius", "Omega_center", "Omega_radius"],
        },
        "trajectory": {
            "type": "object",
            "properties": {"kind": {"enum": ["stationary", "linear", "circular", "helical",
                                             "polynomial", "sampled"]}},
            "required": ["kind"],
        },
        "sensors": {
            "oneOf": [
                {"const": "axis"},
                {"type": "object", "properties": {"layout": {"const": "axis"}}, "required": ["layout"]},
                {"type": "object",
                 "properties": {"points": {"type": "array", "items": _VEC3, "minItems": 6, "maxItems": 6}},
                 "required": ["points"]},
                {"type": "object",
                 "properties": {"select": {"type": "object",
                                           "properties": {"n_candidates": {"type": "integer", "minimum": 1},
                                                          "seed": {"type": "integer"}}}},
                 "required": ["select"]},
            ]
        },
        "simulation": {
            "type": "object",
            "properties": {"dt": {"type": "number", "exclusiveMinimum": 0},
                           "noise_sigma": {"type": "number", "minimum": 0},
                           "seed": {"type": "integer", "minimum": 0}},
        },
        "inversion": {
            "type": "object",
            "properties": {
                "tau": {"type": "object",
                        "properties": {"start": {"type": "number"}, "stop": {"type": "number"},
                                       "num": {"type": "integer", "minimum": 1}}},
                "abs_floor": {"type": ["number", "null"]},
                "k_sigma": {"type": "number", "minimum": 0},
                "hold": {"type": "integer", "minimum": 1},
                "refine_arrivals": {"type": ["boolean", "null"]},
            },
        },
        "stability": {
            "type": "object",
            "properties": {
                "family": {"enum": ["translate", "speed", "bump"]},
                "epsilons": {"type": "array", "items": {"type": "number"}},
                "direction": _VEC3,
                "sigmas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "seeds_per_sigma": {"type": "integer", "minimum": 1},
            },
        },
    },
    "required": ["physics", "domain"],
}


def parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc, overrides):
    """Apply ``key.sub=value`` overrides; values are parsed as JSON when possible."""
    doc = copy.deepcopy(doc)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = doc
        for p in parts[:-1]:
            nxt = node.get(p) if isinstance(node, dict) else None
            if not isinstance(nxt, dict):
                nxt = {}
                node[p] = nxt
            node = nxt
        node[parts[-1]] = parse_value(text)
    return doc


def load_config(path, overrides=()):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from None
    doc = apply_overrides(doc, overrides)
    validate_config(doc)
    return doc


def validate_config(doc):
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None


def physics_of(doc):
    return PhysicsConfig.from_dict(doc["physics"])


def domain_of(doc):
    return DomainSpec.from_dict(doc["domain"])


def trajectory_of(doc):
    if "trajectory" not in doc:
        raise ConfigError("config has no trajectory section")
    return Trajectory.from_dict(doc["trajectory"])


def sensors_of(doc, dom):
    if "sensors" not in doc:
        raise ConfigError("config has no sensors section")
    return sensors_from_config(doc["sensors"], dom)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _fmt(x):
    return format(float(x), ".17g")


# -- traces ------------------------------------------------------------------

TRACE_HEADER = ["t"] + [f"phi{i}" for i in range(1, 7)]


def write_traces(out_dir, traces, cfg, dom, sensors, dt):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t = traces[0].t_grid
    with open(out / "traces.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        cols = np.column_stack([t] + [tr.values for tr in traces])
        for row in cols:
            w.writerow([_fmt(v) for v in row])
    meta = {
        "physics": cfg.to_dict(),
        "domain": dom.to_dict(),
        "sensors": {"points": np.asarray(sensors.points).tolist()},
        "dt": dt,
        "noise_sigma": traces[0].noise_sigma,
        "seed": traces[0].seed,
    }
    write_json(out / "traces.meta.json", meta)
    return out / "traces.csv", out / "traces.meta.json"


def read_traces(in_dir):
    """Load ``traces.csv`` + ``traces.meta.json``; returns (traces, cfg, dom, sensors, meta)."""
    src = Path(in_dir)
    try:
        with open(src / "traces.meta.json") as fh:
            meta = json.load(fh)
        with open(src / "traces.csv", newline="") as fh:
            rows = list(csv.reader(fh))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read traces from {src}: {exc}") from None
    if not rows or rows[0] != TRACE_HEADER:
        raise ConfigError(f"traces.csv must start with header {','.join(TRACE_HEADER)}")
    data = np.array(rows[1:], dtype=float).reshape(-1, 7)
    cfg = PhysicsConfig.from_dict(meta["physics"])
    dom = DomainSpec.from_dict(meta["domain"])
    sensors = check_sensor_matrix(meta["sensors"]["points"], dom)
    t = data[:, 0].copy()
    t.flags.writeable = False
    traces = []
    for i in range(6):
        v = data[:, i + 1].copy()
        v.flags.writeable = False
        traces.append(FieldTrace(sensor_index=i + 1, position=sensors.points[i], t_grid=t, values=v,
                                 noise_sigma=float(meta.get("noise_sigma", 0.0)),
                                 seed=int(meta.get("seed", 0))))
    return traces, cfg, dom, sensors, meta


# -- reconstruction ----------------------------------------------------------


def write_report(out_dir, report):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "report.json", report.to_dict())
    with open(out / "trajectory.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        has_err = report.errors is not None
        w.writerow(["tau", "bx", "by", "bz"] + (["err"] if has_err else []))
        for k, tau in enumerate(report.tau_grid):
            row = [tau, *report.b_hat[k]] + ([report.errors[k]] if has_err else [])
            w.writerow([_fmt(v) for v in row])
    return out / "report.json", out / "trajectory.csv"


# -- stability ---------------------------------------------------------------

NOISE_HEADER = ["sigma", "seed", "delta_phi_sup", "delta_t_max", "delta_r_max", "delta_b_sup", "status"]
PAIR_HEADER = ["family", "epsilon", "delta_phi_sup", "delta_t_max", "delta_r_max", "delta_b_sup",
               "ratio_b", "b_envelope", "arrival_bound"]


def write_noise_table(path, runs):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NOISE_HEADER)
        for r in runs:
            row = r.row()
            w.writerow([_fmt(row[0]), row[1], *(_fmt(v) for v in row[2:6]), row[6]])


def write_pair_table(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PAIR_HEADER)
        for family, eps, res in rows:
            w.writerow([family, _fmt(eps), _fmt(res.delta_phi_sup), _fmt(res.delta_t_max),
                        _fmt(res.delta_r_max), _fmt(res.delta_b_sup), _fmt(res.ratios["b"]),
                        _fmt(res.b_envelope), "pass" if bool(res.arrival_bound_pass.all()) else "fail"])
