"""Round-trip reconstruction error of the helical scenario as dt is halved.

Writes convergence.csv (dt, error_sup, ratio to the previous dt, seconds).
"""

import argparse
import csv
import time
from pathlib import Path

import numpy as np

from moving_source import io
from moving_source.forward import synthesize_traces
from moving_source.inverse import reconstruct_trajectory

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=ROOT / "configs" / "helical.json")
    ap.add_argument("--out", default="results/convergence")
    ap.add_argument("--dts", type=float, nargs="+", default=[4e-3, 2e-3, 1e-3, 5e-4])
    ap.add_argument("--no-refine", action="store_true", help="skip the sub-grid arrival fit")
    args = ap.parse_args()

    doc = io.load_config(args.config)
    cfg, dom = io.physics_of(doc), io.domain_of(doc)
    traj, sensors = io.trajectory_of(doc), io.sensors_of(doc, dom)
    tau = np.linspace(0.25, cfg.T - 0.25, 181)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, prev = [], None
    for dt in args.dts:
        start = time.perf_counter()
        traces = synthesize_traces(traj, sensors, cfg, dom, dt)
        rep = reconstruct_trajectory(traces, sensors, cfg, dom, tau, refine=not args.no_refine, truth=traj)
        secs = time.perf_counter() - start
        ratio = prev / rep.error_sup if prev else float("nan")
        prev = rep.error_sup
        rows.append((dt, rep.error_sup, ratio, secs))
        print(f"dt={dt:.1e}  error_sup={rep.error_sup:.3e}  ratio={ratio:5.1f}  {secs:.2f}s")
    with open(out / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dt", "error_sup", "ratio", "seconds"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
