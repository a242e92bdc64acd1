"""Command-line driver: ``moving-source <command> --config FILE --out DIR``.

Exit codes: 0 success, 2 configuration, 3 physical precondition,
4 numerical pipeline failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import ConfigError, PhysicsError, PipelineError
from .forward import synthesize_traces
from .geometry import (
    axis_sensors,
    check_inside_domain,
    horizon_constants,
    validate_subsonic,
)
from .inverse import default_threshold, reconstruct_trajectory
from .stability import ExperimentSetup, noise_sweep, pair_experiment, perturbed, theoretical_bounds

EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS, EXIT_PIPELINE = 0, 2, 3, 4
COMMANDS = ("simulate", "reconstruct", "stability", "constants", "roundtrip")

DEFAULT_DT = 1e-3


def _section(doc, name):
    return doc.get(name) or {}


def _simulation(doc):
    sim = _section(doc, "simulation")
    return float(sim.get("dt", DEFAULT_DT)), float(sim.get("noise_sigma", 0.0)), int(sim.get("seed", 0))


def _tau_grid(doc, cfg):
    tau = _section(doc, "inversion").get("tau") or {}
    start = float(tau.get("start", 0.0))
    stop = float(tau.get("stop", cfg.T))
    return np.linspace(start, stop, int(tau.get("num", 201)))


def _threshold(doc, cfg, dom):
    inv = _section(doc, "inversion")
    base = default_threshold(cfg, dom, k_sigma=float(inv.get("k_sigma", 5.0)), hold=int(inv.get("hold", 5)))
    floor = inv.get("abs_floor")
    if floor is not None:
        base = type(base)(abs_floor=float(floor), k_sigma=base.k_sigma, hold=base.hold)
    return base


def _checked_trajectory(doc, cfg, dom):
    traj = io.trajectory_of(doc)
    validate_subsonic(traj, cfg)
    check_inside_domain(traj, cfg, dom)
    return traj


def _simulate(doc, out):
    cfg, dom = io.physics_of(doc), io.domain_of(doc)
    horizon_constants(dom, cfg)
    traj = _checked_trajectory(doc, cfg, dom)
    sensors = io.sensors_of(doc, dom)
    dt, sigma, seed = _simulation(doc)
    traces = synthesize_traces(traj, sensors, cfg, dom, dt, noise_sigma=sigma, seed=seed)
    io.write_traces(out, traces, cfg, dom, sensors, dt)
    return traces, traj


def cmd_simulate(doc, out, args):
    _simulate(doc, out)
    return EXIT_OK


def cmd_reconstruct(doc, out, args):
    src = Path(args.traces) if args.traces else out
    traces, cfg, dom, sensors, _ = io.read_traces(src)
    doc = doc or {}
    truth = io.trajectory_of(doc) if "trajectory" in doc else None
    refine = _section(doc, "inversion").get("refine_arrivals")
    report = reconstruct_trajectory(traces, sensors, cfg, dom, _tau_grid(doc, cfg),
                                    threshold=_threshold(doc, cfg, dom), refine=refine, truth=truth)
    io.write_report(out, report)
    return EXIT_OK


def cmd_roundtrip(doc, out, args):
    traces, traj = _simulate(doc, out)
    cfg, dom = io.physics_of(doc), io.domain_of(doc)
    sensors = io.sensors_of(doc, dom)
    refine = _section(doc, "inversion").get("refine_arrivals")
    report = reconstruct_trajectory(traces, sensors, cfg, dom, _tau_grid(doc, cfg),
                                    threshold=_threshold(doc, cfg, dom), refine=refine, truth=traj)
    io.write_report(out, report)
    print(f"error_sup = {report.error_sup:.6e} over {report.tau_grid.size} tau values")
    return EXIT_OK


def _constants_doc(doc):
    cfg, dom = io.physics_of(doc), io.domain_of(doc)
    hc = horizon_constants(dom, cfg)
    sensors = io.sensors_of(doc, dom) if "sensors" in doc else axis_sensors(dom)
    return hc, sensors, theoretical_bounds(hc, cfg, sensors)


def cmd_constants(doc, out, args):
    hc, sensors, sc = _constants_doc(doc)
    payload = {"horizon": hc.to_dict(), "stability": sc.to_dict(), "sensors": sensors.to_dict()}
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "constants.json", payload)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_stability(doc, out, args):
    cfg, dom = io.physics_of(doc), io.domain_of(doc)
    hc, sensors, sc = _constants_doc(doc)
    traj = _checked_trajectory(doc, cfg, dom)
    st = _section(doc, "stability")
    family = st.get("family", "bump")
    epsilons = [float(e) for e in st.get("epsilons", [0.0, 1e-2, 1e-3, 1e-4])]
    direction = st.get("direction", [1.0, 0.0, 0.0])
    dt, _, seed = _simulation(doc)
    setup = ExperimentSetup(sensors=sensors, cfg=cfg, dom=dom, dt=dt, tau_grid=_tau_grid(doc, cfg),
                            threshold=_threshold(doc, cfg, dom))

    rows = []
    for eps in epsilons:
        tilde = perturbed(traj, family, eps, direction, cfg.T)
        validate_subsonic(tilde, cfg)
        check_inside_domain(tilde, cfg, dom)
        rows.append((family, eps, pair_experiment(traj, tilde, setup, sc)))
    out.mkdir(parents=True, exist_ok=True)
    io.write_pair_table(out / "perturbations.csv", rows)

    summary = {
        "horizon": hc.to_dict(),
        "constants": sc.to_dict(),
        "family": family,
        "rows": [{"epsilon": eps, "delta_phi_sup": r.delta_phi_sup, "delta_b_sup": r.delta_b_sup,
                  "ratios": r.ratios, "b_envelope": r.b_envelope,
                  "arrival_bound": "pass" if bool(r.arrival_bound_pass.all()) else "fail"}
                 for _, eps, r in rows],
    }
    sigmas = st.get("sigmas") or []
    if sigmas:
        runs, noise = noise_sweep(traj, setup, sigmas, int(st.get("seeds_per_sigma", 5)), seed0=seed)
        io.write_noise_table(out / "noise_sweep.csv", runs)
        summary["noise"] = {format(s, ".17g"): v for s, v in noise.items()}
    io.write_json(out / "stability.json", summary)
    return EXIT_OK


HANDLERS = {
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "stability": cmd_stability,
    "constants": cmd_constants,
    "roundtrip": cmd_roundtrip,
}


def build_parser():
    p = argparse.ArgumentParser(prog="moving-source",
                                description="Simulate and invert the field of a moving point source.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. --set physics.T=6 (repeatable)")
    p.add_argument("--traces", help="directory holding traces.csv and traces.meta.json (reconstruct)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        if args.config:
            doc = io.load_config(args.config, args.overrides)
        elif args.command == "reconstruct":
            doc = None
        else:
            raise ConfigError(f"{args.command} needs --config")
        return HANDLERS[args.command](doc, out, args)
    except ConfigError as exc:
        code, msg = EXIT_CONFIG, f"config error: {exc}"
    except PhysicsError as exc:
        code, msg = EXIT_PHYSICS, f"physics error ({type(exc).__name__}): {exc}"
    except PipelineError as exc:
        code, msg = EXIT_PIPELINE, f"pipeline error ({type(exc).__name__}): {exc}"
    except ValueError as exc:
        code, msg = EXIT_CONFIG, f"invalid input: {exc}"
    print(f"moving-source: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
