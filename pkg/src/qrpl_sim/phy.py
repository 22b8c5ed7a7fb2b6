"""Node placement, log-normal shadowing and per-transmission link success."""
from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .config import ChannelParams, SimConfig
from .errors import InvalidDistance, IoFailure, PlacementFailed, UnknownLink

MAX_PLACEMENT_RETRIES = 100


def mean_rx_power(d: float, p: ChannelParams) -> float:
    return p.tx_power_dbm - p.pathloss_ref_db - 10.0 * p.pathloss_exponent * math.log10(d)


def link_margin(d: float, p: ChannelParams) -> float:
    return mean_rx_power(d, p) - p.rx_sensitivity_dbm


def communication_range(p: ChannelParams) -> float:
    """Distance at which the mean link margin is exactly 0 dB."""
    budget = p.tx_power_dbm - p.pathloss_ref_db - p.rx_sensitivity_dbm
    return 10.0 ** (budget / (10.0 * p.pathloss_exponent))


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def link_success_prob(d: float, p: ChannelParams, static_shadow_db: Optional[float] = None) -> float:
    """Probability that one frame over distance ``d`` is received.

    per_packet: Phi(margin / sigma), shadowing redrawn for every frame.
    static_per_link: 1 or 0 depending on the fixed shadow draw of the link.
    """
    if not d > 0:
        raise InvalidDistance(f"distance must be > 0, got {d!r}")
    margin = link_margin(d, p)
    if p.shadowing_mode == "static_per_link":
        return 1.0 if margin + (static_shadow_db or 0.0) >= 0 else 0.0
    if p.shadowing_sigma_db == 0:
        return 1.0 if margin > 0 else (0.5 if margin == 0 else 0.0)
    return normal_cdf(margin / p.shadowing_sigma_db)


@dataclass
class Topology:
    positions: Dict[int, Tuple[float, float]]
    root_id: int = 0

    @property
    def node_ids(self) -> List[int]:
        return sorted(self.positions)

    def distance(self, a: int, b: int) -> float:
        (xa, ya), (xb, yb) = self.positions[a], self.positions[b]
        return math.hypot(xa - xb, ya - yb)

    def neighbors(self, p: ChannelParams) -> Dict[int, List[int]]:
        """N(x): nodes whose mean-power margin to x is >= 0 dB."""
        ids = self.node_ids
        out = {i: [] for i in ids}
        for a in ids:
            for b in ids:
                if a != b and link_margin(self.distance(a, b), p) >= 0:
                    out[a].append(b)
        return out

    def is_connected(self, p: ChannelParams) -> bool:
        nbrs = self.neighbors(p)
        seen = {self.root_id}
        todo = deque([self.root_id])
        while todo:
            for n in nbrs[todo.popleft()]:
                if n not in seen:
                    seen.add(n)
                    todo.append(n)
        return len(seen) == len(self.positions)

    def to_text(self) -> str:
        lines = ["# node_id x y"]
        for i in self.node_ids:
            x, y = self.positions[i]
            lines.append(f"{i} {x!r} {y!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Topology":
        positions = {}
        for no, line in enumerate(text.splitlines(), start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 3:
                raise IoFailure(f"line {no}: expected 'node_id x y', got {s!r}")
            positions[int(parts[0])] = (float(parts[1]), float(parts[2]))
        if 0 not in positions:
            raise IoFailure("topology has no root (node 0)")
        if sorted(positions) != list(range(len(positions))):
            raise IoFailure("node ids must be 0..n-1")
        return cls(positions)


def save_topology(topo: Topology, path) -> None:
    try:
        Path(path).write_text(topo.to_text())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_topology(path) -> Topology:
    try:
        return Topology.from_text(Path(path).read_text())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def place_nodes(config: SimConfig, rng: random.Random) -> Topology:
    """Root at the area centre, the rest uniform; redraw until connected."""
    if config.node_count < 2:
        raise PlacementFailed("need at least a root and one node")
    w, h = config.area
    for _ in range(MAX_PLACEMENT_RETRIES):
        positions = {0: (w / 2.0, h / 2.0)}
        for i in range(1, config.node_count):
            positions[i] = (rng.uniform(0, w), rng.uniform(0, h))
        topo = Topology(positions)
        if topo.is_connected(config.channel):
            return topo
    raise PlacementFailed(
        f"no connected placement of {config.node_count} nodes in {w}x{h} m "
        f"after {MAX_PLACEMENT_RETRIES} attempts"
    )


@dataclass
class LinkModel:
    """Pairwise delivery probabilities plus the neighbour/interference sets."""

    success_prob: Dict[Tuple[int, int], float]
    neighbors: Dict[int, frozenset]
    interferers: Dict[int, frozenset]
    static_shadow_db: Optional[Dict[Tuple[int, int], float]] = None
    prob_table: List[List[float]] = field(default_factory=list, repr=False)

    @classmethod
    def build(cls, topo: Topology, p: ChannelParams, rng: Optional[random.Random] = None) -> "LinkModel":
        ids = topo.node_ids
        n = len(ids)
        comm = communication_range(p)
        irange = comm * p.interference_range_factor
        shadows = None
        if p.shadowing_mode == "static_per_link":
            rng = rng or random.Random(0)
            shadows = {}
            for a in ids:
                for b in ids:
                    if a < b:
                        s = rng.gauss(0.0, p.shadowing_sigma_db)
                        shadows[(a, b)] = shadows[(b, a)] = s
        probs, table = {}, [[0.0] * n for _ in range(n)]
        nbrs, intf = {}, {}
        for a in ids:
            nb, it = [], []
            for b in ids:
                if a == b:
                    continue
                d = topo.distance(a, b)
                d = max(d, 1e-9)
                pr = link_success_prob(d, p, shadows[(a, b)] if shadows else None)
                probs[(a, b)] = pr
                table[a][b] = pr
                if link_margin(d, p) >= 0:
                    nb.append(b)
                if d <= irange:
                    it.append(b)
            nbrs[a] = frozenset(nb)
            intf[a] = frozenset(it)
        return cls(probs, nbrs, intf, shadows, table)


def draw_delivery(link: LinkModel, tx: int, rx: int, rng: random.Random) -> bool:
    try:
        p = link.success_prob[(tx, rx)]
    except KeyError:
        raise UnknownLink(f"no link {tx}->{rx}") from None
    return rng.random() < p
