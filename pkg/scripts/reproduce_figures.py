"""Run every figure preset and leave one directory of reports per preset.

    python scripts/reproduce_figures.py --out results --runs 10 --jobs 4
"""
import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path

from qrpl_sim.cli import PRESETS, run_preset
from qrpl_sim.config import SimConfig, parse_config


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results")
    ap.add_argument("--config")
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--slotframes", type=int)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--only", nargs="*", choices=sorted(PRESETS))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    base = parse_config(args.config) if args.config else SimConfig()
    base = dataclasses.replace(base, runs=args.runs)
    if args.slotframes:
        base = dataclasses.replace(base, slotframes_total=args.slotframes,
                                   warmup_slotframes=min(base.warmup_slotframes, args.slotframes // 4))
    failed = []
    for name in args.only or sorted(PRESETS):
        t0 = time.time()
        code = run_preset(PRESETS[name], base, Path(args.out) / name, jobs=args.jobs)
        logging.info("%s finished with exit code %d in %.0f s", name, code, time.time() - t0)
        if code:
            failed.append(name)
    if failed:
        print("failed presets:", ", ".join(failed))
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
