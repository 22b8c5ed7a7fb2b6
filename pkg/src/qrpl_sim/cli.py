"""Command line front end: single configs, figure presets and topology files.

    qrpl-sim run --config sim.ini --out results/
    qrpl-sim preset qlr-sweep --runs 3 --out results/qlr
    qrpl-sim topo export topo.txt --seed 7
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .config import SimConfig, parse_config, with_overrides
from .engine import run as run_config
from .engine import substream
from .errors import ConfigInvalid, IoFailure, SimError
from .metrics import NETWORK_METRICS, build_report, export, node_metrics, run_metrics
from .network import simulate
from .phy import Topology, load_topology, place_nodes, save_topology

log = logging.getLogger("qrpl_sim")

EXIT_OK, EXIT_CONFIG, EXIT_RUN = 0, 1, 2
LOADS = (30, 60, 90, 120)
COMPARISON_HEADER = ("variant", "parameter", "value", "metric", "mean")


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    of_variants: Tuple[str, ...]
    sweep: Dict[str, tuple]
    fixed: Dict[str, object] = field(default_factory=dict)

    @property
    def parameter(self) -> str:
        (name,) = self.sweep
        return name

    def configs(self, base: SimConfig) -> List[Tuple[str, object, SimConfig]]:
        """(variant, sweep value, config) for every point of the preset."""
        out = []
        for variant in self.of_variants:
            for value in self.sweep[self.parameter]:
                changes = dict(self.fixed)
                changes[self.parameter] = value
                changes["objective_function"] = variant
                out.append((variant, value, with_overrides(base, **changes).validate()))
        return out


PRESETS: Dict[str, ExperimentPreset] = {
    p.name: p for p in (
        ExperimentPreset("loss-breakdown", ("MRHOF",), {"traffic_ppm": LOADS}),
        ExperimentPreset("per-node-qlr", ("MRHOF",), {"traffic_ppm": (120,)}),
        ExperimentPreset("topology", ("MRHOF", "QRPL"), {"traffic_ppm": (90,)}),
        ExperimentPreset("qlr-sweep", ("OF0", "MRHOF", "QRPL"), {"traffic_ppm": LOADS}),
        ExperimentPreset("buffer-study", ("MRHOF", "QRPL"), {"buffer_size": (10, 20, 30, 40)},
                         {"traffic_ppm": 120}),
        ExperimentPreset("pdr-sweep", ("OF0", "MRHOF", "QRPL"), {"traffic_ppm": LOADS}),
        ExperimentPreset("delay-sweep", ("OF0", "MRHOF", "QRPL"), {"traffic_ppm": LOADS}),
        ExperimentPreset("dio-overhead", ("MRHOF", "QRPL"), {"traffic_ppm": LOADS}),
    )
}


def point_label(variant: str, parameter: str, value) -> str:
    return f"{variant}_{parameter}-{value}"


def _one_run(args):
    cfg, run_index, topology = args
    return simulate(cfg, run_index, topology=topology)


def _write_run(path: Path, result) -> None:
    body = {
        "run_index": result.run_index,
        "network": run_metrics(result),
        "nodes": {str(k): v for k, v in node_metrics(result).items()},
    }
    path.write_text(json.dumps(body, sort_keys=True, indent=2) + "\n")


def run_preset(preset: ExperimentPreset, base_config: SimConfig, out_dir, jobs: int = 1,
               topology: Optional[Topology] = None) -> int:
    """Run every (variant, sweep value, run) of ``preset`` and write the reports.

    Per-run files land in ``out_dir/runs`` as soon as each run finishes.  The
    comparison table is written only when every run succeeded.
    """
    out = Path(out_dir)
    runs_dir = out / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    if topology is None and base_config.topology_file:
        topology = load_topology(base_config.topology_file)
    points = preset.configs(base_config)
    tasks = [(label_i, (cfg, i, topology))
             for label_i, (variant, value, cfg) in enumerate(points)
             for i in range(cfg.runs)]
    results: Dict[int, list] = {k: [] for k in range(len(points))}
    failed = False

    def collect(k, res):
        variant, value, _ = points[k]
        name = point_label(variant, preset.parameter, value)
        _write_run(runs_dir / f"{name}_run{res.run_index}.json", res)
        results[k].append(res)
        log.info("%s run %d done", name, res.run_index)

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_one_run, args): k for k, args in tasks}
            for fut in as_completed(futures):
                try:
                    collect(futures[fut], fut.result())
                except Exception as exc:  # keep going so finished runs are saved
                    log.error("run failed: %s", exc)
                    failed = True
    else:
        for k, args in tasks:
            try:
                collect(k, _one_run(args))
            except Exception as exc:
                log.error("run failed: %s", exc)
                failed = True
                break
    if failed:
        return EXIT_RUN

    rows = []
    for k, (variant, value, cfg) in enumerate(points):
        report = build_report(cfg, results[k])
        name = point_label(variant, preset.parameter, value)
        export(report, out / f"{name}.json")
        for metric in NETWORK_METRICS:
            rows.append((variant, preset.parameter, value, metric, report.mean(metric)))
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_HEADER)
        for row in rows:
            w.writerow(["" if v is None else v for v in row])
    return EXIT_OK


def _load_base(args) -> SimConfig:
    cfg = parse_config(args.config) if args.config else SimConfig()
    changes = {}
    if args.seed is not None:
        changes["rng_seed"] = args.seed
    if args.runs is not None:
        changes["runs"] = args.runs
    if getattr(args, "slotframes", None) is not None:
        changes["slotframes_total"] = args.slotframes
        changes["warmup_slotframes"] = min(cfg.warmup_slotframes, args.slotframes // 4)
    if getattr(args, "topology", None):
        changes["topology_file"] = args.topology
    return with_overrides(cfg, **changes).validate()


def cmd_run(args) -> int:
    cfg = _load_base(args)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        report = run_config(cfg, jobs=args.jobs)
        export(report, out / "report.json")
        export(report, out / "report.csv")
    except (SimError, OSError, RuntimeError) as exc:
        log.error("%s", exc)
        return EXIT_RUN
    mean = report.aggregate["mean"]
    print(f"pdr={mean['pdr']:.4f} qlr_avg={mean['qlr_avg']:.4f} "
          f"delay_avg_s={mean['delay_avg_s']} -> {out}")
    return EXIT_OK


def cmd_preset(args) -> int:
    if args.name not in PRESETS:
        log.error("unknown preset %r; choose from %s", args.name, ", ".join(PRESETS))
        return EXIT_CONFIG
    cfg = _load_base(args)
    try:
        code = run_preset(PRESETS[args.name], cfg, args.out, jobs=args.jobs)
    except (SimError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_RUN
    if code == EXIT_OK:
        print(f"{args.name}: reports and comparison.csv in {args.out}")
    return code


def cmd_topo(args) -> int:
    cfg = _load_base(args)
    path = Path(args.file)
    if args.action == "export":
        topo = place_nodes(cfg, substream(cfg.rng_seed, args.run, "topology"))
        save_topology(topo, path)
        print(f"wrote {len(topo.positions)} nodes to {path}")
        return EXIT_OK
    try:
        topo = load_topology(path)
    except (IoFailure, ValueError) as exc:
        raise ConfigInvalid({"topology_file": str(exc)}) from None
    if len(topo.positions) != cfg.node_count:
        raise ConfigInvalid({"topology_file": f"{len(topo.positions)} nodes, "
                                              f"node_count is {cfg.node_count}"})
    if not topo.is_connected(cfg.channel):
        raise ConfigInvalid({"topology_file": "some node cannot reach the root"})
    nbrs = topo.neighbors(cfg.channel)
    print(f"{path}: {len(topo.positions)} nodes, connected, "
          f"root degree {len(nbrs[topo.root_id])}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qrpl-sim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="INI config file; omitted keys keep defaults")
        p.add_argument("--seed", type=int)
        p.add_argument("--runs", type=int)
        p.add_argument("--slotframes", type=int, help="shorten runs for smoke tests")
        p.add_argument("--topology", help="shared topology file for every run")
        if out_required:
            p.add_argument("--jobs", type=int, default=1)
            p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="simulate one config")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("preset", help="reproduce one figure sweep")
    p.add_argument("name", help=", ".join(PRESETS))
    common(p)
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("topo", help="write or check a topology file")
    p.add_argument("action", choices=("export", "import"))
    p.add_argument("file")
    p.add_argument("--run", type=int, default=0, help="run index whose placement to export")
    common(p, out_required=False)
    p.set_defaults(func=cmd_topo)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
