"""Per-run metrics, cross-run aggregation and report export."""
from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional

from .config import ASSUMPTIONS, SimConfig
from .errors import IoFailure, NoDeliveries

NETWORK_METRICS = (
    "pdr", "qlr_avg", "delay_avg_s", "dio_per_node_avg", "overhead_fraction",
    "children_stddev", "delivered_fraction", "queue_loss_fraction", "link_loss_fraction",
    "residual_fraction", "generated", "delivered", "queue_drops", "link_drops",
    "in_queue", "in_flight", "dio_total", "data_tx_total", "collisions",
)
NODE_METRICS = (
    "generated", "forwarded", "queue_drops", "link_drops", "mac_offered", "qlr",
    "dio_sent", "data_tx", "parent_changes", "hop_at_end", "parent", "children",
)
CSV_HEADER = ("run", "scope", "node_id", "metric", "value")


def qlr(queue_drops: int, mac_offered: int) -> float:
    """Queue loss ratio: overflow drops per packet offered to the node."""
    total = queue_drops + mac_offered
    return queue_drops / total if total else 0.0


def pdr(delivered: int, generated: int) -> float:
    return delivered / generated if generated else 0.0


def avg_delay(delay_slots_sum: int, delivered: int, slot_duration: float) -> float:
    if delivered == 0:
        raise NoDeliveries("no packet reached the root")
    return delay_slots_sum * slot_duration / delivered


def children_counts(parents: Mapping[int, Optional[int]]) -> Dict[int, int]:
    counts = {n: 0 for n in parents}
    for p in parents.values():
        if p is not None and p in counts:
            counts[p] += 1
    return counts


def children_stddev(parents: Mapping[int, Optional[int]]) -> float:
    """Population stddev of children per non-root node (leaves count as 0)."""
    counts = list(children_counts(parents).values())
    return statistics.pstdev(counts) if counts else 0.0


def dio_overhead(dio_total: int, data_tx_total: int, node_count: int):
    """(DIOs per node, DIO share of all transmitted frames)."""
    per_node = dio_total / node_count if node_count else 0.0
    frames = dio_total + data_tx_total
    return per_node, (dio_total / frames if frames else 0.0)


def conservation_holds(r) -> bool:
    return r.generated == r.delivered + r.queue_drops + r.link_drops + r.in_queue + r.in_flight


def run_metrics(r) -> dict:
    """Network-scope metrics of one RunResult."""
    if not conservation_holds(r):
        raise RuntimeError(
            f"packet conservation violated in run {r.run_index}: generated={r.generated} "
            f"delivered={r.delivered} qd={r.queue_drops} ld={r.link_drops} "
            f"q={r.in_queue} f={r.in_flight}")
    cfg: SimConfig = r.config
    nodes = [n for n in r.per_node if n != 0]
    qlrs = [qlr(r.per_node[n]["queue_drops"], r.per_node[n]["mac_offered"]) for n in nodes]
    try:
        delay = avg_delay(r.delay_slots_sum, r.delivered, cfg.slot_duration)
    except NoDeliveries:
        delay = None
    per_node_dio, overhead = dio_overhead(r.dio_total, r.data_tx_total, cfg.node_count)
    g = r.generated or 1
    return {
        "pdr": pdr(r.delivered, r.generated),
        "qlr_avg": statistics.fmean(qlrs) if qlrs else 0.0,
        "delay_avg_s": delay,
        "dio_per_node_avg": per_node_dio,
        "overhead_fraction": overhead,
        "children_stddev": children_stddev(r.parents),
        "delivered_fraction": r.delivered / g,
        "queue_loss_fraction": r.queue_drops / g,
        "link_loss_fraction": r.link_drops / g,
        "residual_fraction": (r.in_queue + r.in_flight) / g,
        "generated": r.generated,
        "delivered": r.delivered,
        "queue_drops": r.queue_drops,
        "link_drops": r.link_drops,
        "in_queue": r.in_queue,
        "in_flight": r.in_flight,
        "dio_total": r.dio_total,
        "data_tx_total": r.data_tx_total,
        "collisions": r.collisions,
    }


def node_metrics(r) -> Dict[int, dict]:
    kids = children_counts(r.parents)
    out = {}
    for n, c in sorted(r.per_node.items()):
        row = dict(c)
        row["qlr"] = qlr(c["queue_drops"], c["mac_offered"])
        row["children"] = kids.get(n, sum(1 for p in r.parents.values() if p == n))
        out[n] = row
    return out


@dataclass
class MetricsReport:
    config: dict
    assumptions: List[str]
    per_run: List[dict]
    per_node: List[Dict[int, dict]]
    aggregate: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "assumptions": list(self.assumptions),
            "per_run": self.per_run,
            "per_node": [{str(k): v for k, v in pn.items()} for pn in self.per_node],
            "aggregate": self.aggregate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            config=d["config"],
            assumptions=list(d["assumptions"]),
            per_run=d["per_run"],
            per_node=[{int(k): v for k, v in pn.items()} for pn in d["per_node"]],
            aggregate=d["aggregate"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def mean(self, metric: str) -> Optional[float]:
        return self.aggregate["mean"][metric]

    def csv_rows(self):
        for i, run in enumerate(self.per_run):
            for m in NETWORK_METRICS:
                yield (i, "network", "", m, run[m])
            for n, row in sorted(self.per_node[i].items()):
                for m in NODE_METRICS:
                    yield (i, "node", n, m, row[m])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in self.csv_rows():
            w.writerow(["" if v is None else v for v in row])
        return buf.getvalue()


def aggregate(per_run: List[dict]) -> dict:
    mean, vectors = {}, {}
    for m in NETWORK_METRICS:
        vals = [r[m] for r in per_run]
        vectors[m] = vals
        present = [v for v in vals if v is not None]
        mean[m] = statistics.fmean(present) if present else None
    return {"runs": len(per_run), "mean": mean, "per_run": vectors}


def build_report(config: SimConfig, results) -> MetricsReport:
    results = sorted(results, key=lambda r: r.run_index)
    per_run = [run_metrics(r) for r in results]
    for r, m in zip(results, per_run):
        m["run_index"] = r.run_index
    return MetricsReport(
        config=config.to_dict(),
        assumptions=list(ASSUMPTIONS),
        per_run=per_run,
        per_node=[node_metrics(r) for r in results],
        aggregate=aggregate(per_run),
    )


def export(report: MetricsReport, path, fmt: Optional[str] = None) -> Path:
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".")
    if fmt == "json":
        text = report.to_json()
    elif fmt == "csv":
        text = report.to_csv()
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    try:
        path.write_text(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def load_report(path) -> MetricsReport:
    try:
        return MetricsReport.from_dict(json.loads(Path(path).read_text()))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def safe_ratio(a: Optional[float], b: Optional[float]) -> float:
    if a is None or b is None or b == 0:
        return math.nan
    return a / b
