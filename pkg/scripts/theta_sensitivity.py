"""QRPL sensitivity to the exploration temperature theta at one load."""
import argparse
import csv
import sys

from qrpl_sim.config import SimConfig, with_overrides
from qrpl_sim.engine import run

METRICS = ("pdr", "qlr_avg", "delay_avg_s", "children_stddev", "overhead_fraction")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--thetas", type=float, nargs="+", default=[0.1, 0.3, 1.0, 3.0, 10.0])
    ap.add_argument("--ppm", type=float, default=120)
    ap.add_argument("--runs", type=int, default=3)
    ap.add_argument("--slotframes", type=int, default=1000)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="theta_sensitivity.csv")
    args = ap.parse_args()

    base = SimConfig(objective_function="QRPL", traffic_ppm=args.ppm, runs=args.runs,
                     slotframes_total=args.slotframes,
                     warmup_slotframes=min(50, args.slotframes // 4))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("theta",) + METRICS)
        for theta in args.thetas:
            report = run(with_overrides(base, **{"learning.theta": theta}), jobs=args.jobs)
            row = [theta] + [report.mean(m) for m in METRICS]
            w.writerow(row)
            print(" ".join(f"{v:.4f}" if isinstance(v, float) else str(v) for v in row), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
