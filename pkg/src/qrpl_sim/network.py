"""One simulation run: nodes, data plane and control plane wired onto the
event loop."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .config import SimConfig
from .engine import EventKind, Scheduler, substream
from .errors import NoViableParent
from .mac import DELIVERED, EXHAUSTED, CsmaMac
from .phy import LinkModel, Topology, place_nodes
from .qroute import QTable, reward, select_parent, selection_distribution
from .queue import ACCEPTED, PacketQueue
from .rpl import (DioMessage, NeighborEntry, RankCodec, TrickleState, hop_candidates,
                  mrhof_select, of0_select)

ARRIVAL = int(EventKind.PACKET_ARRIVAL)
MAC = int(EventKind.MAC_ATTEMPT)
TRICKLE = int(EventKind.TRICKLE_FIRE)
WINDOW_X = int(EventKind.TRICKLE_WINDOW_X)
SAMPLE = int(EventKind.QUEUE_SAMPLE)

ROOT = 0


class Node:
    __slots__ = ("id", "is_root", "queue", "table", "q", "parent", "hop", "path_cost",
                 "trickle", "trickle_ev", "window_ev", "mac_pending", "next_arrival_s",
                 "traffic_rng", "generated", "queue_drops", "link_drops", "mac_offered",
                 "forwarded", "dio_sent", "data_tx", "parent_changes")

    def __init__(self, nid: int, cfg: SimConfig):
        self.id = nid
        self.is_root = nid == ROOT
        self.queue = PacketQueue(cfg.buffer_size, cfg.ewma_beta)
        self.table: Dict[int, NeighborEntry] = {}
        self.q = QTable()
        self.parent: Optional[int] = None
        self.hop: Optional[int] = 0 if self.is_root else None
        self.path_cost = 0.0 if self.is_root else math.inf
        t = cfg.trickle
        self.trickle = TrickleState(i_min=t.i_min, doublings=t.doublings, phi_0=t.phi_0,
                                    phi_init=t.phi_init, window_x=t.window_x,
                                    slot_duration=cfg.slot_duration)
        self.trickle_ev = None
        self.window_ev = None
        self.mac_pending = False
        self.next_arrival_s = 0.0
        self.traffic_rng = None
        self.generated = 0
        self.queue_drops = 0
        self.link_drops = 0
        self.mac_offered = 0
        self.forwarded = 0
        self.dio_sent = 0
        self.data_tx = 0
        self.parent_changes = 0

    @property
    def joined(self) -> bool:
        return self.is_root or self.parent is not None


@dataclass
class Trace:
    """Optional per-run trace: DIO wire records and per-slotframe Q snapshots."""

    dio_records: bytearray = field(default_factory=bytearray)
    q_snapshots: List[tuple] = field(default_factory=list)  # (slotframe, node, neighbor, q)
    parent_snapshots: List[tuple] = field(default_factory=list)  # (slotframe, node, parent)


@dataclass
class RunResult:
    run_index: int
    config: SimConfig
    topology: Topology
    per_node: Dict[int, dict]
    generated: int
    delivered: int
    delay_slots_sum: int
    queue_drops: int
    link_drops: int
    in_queue: int
    in_flight: int
    dio_total: int
    data_tx_total: int
    collisions: int
    parents: Dict[int, Optional[int]]
    trace: Optional[Trace] = None


class Network:
    def __init__(self, config: SimConfig, run_index: int = 0,
                 topology: Optional[Topology] = None, trace: bool = False,
                 check_invariants: bool = False):
        cfg = config.validate()
        self.cfg = cfg
        self.run_index = run_index
        seed = cfg.rng_seed
        self.topology = topology or place_nodes(cfg, substream(seed, run_index, "topology"))
        if len(self.topology.positions) != cfg.node_count:
            raise ValueError(f"topology has {len(self.topology.positions)} nodes, "
                             f"config expects {cfg.node_count}")
        shadow_rng = substream(seed, run_index, "shadowing")
        self.link = LinkModel.build(self.topology, cfg.channel, shadow_rng)
        self.link_rng = shadow_rng
        self.mac = CsmaMac(cfg.mac, self.link, shadow_rng, substream(seed, run_index, "mac-backoff"))
        self.select_rng = substream(seed, run_index, "parent-selection")
        self.trickle_rng = substream(seed, run_index, "trickle")
        self.sched = Scheduler()
        self.codec = RankCodec(cfg.rpl.eta)
        self.of = cfg.objective_function
        self.qrpl = self.of == "QRPL"
        self.nodes = [Node(i, cfg) for i in range(cfg.node_count)]
        for n in self.nodes[1:]:
            n.traffic_rng = substream(seed, run_index, f"traffic-{n.id}")
        self.total_slots = cfg.total_slots
        self.warmup = cfg.warmup_slots
        self.x_slots = cfg.seconds_to_slots(cfg.trickle.window_x)
        i_max = cfg.trickle.i_min * 2 ** cfg.trickle.doublings
        self.evict_slots = cfg.seconds_to_slots(cfg.rpl.eviction_factor * i_max)
        self.lam = cfg.traffic_ppm / 60.0
        self.delivered = 0
        self.delay_slots_sum = 0
        self.dio_total = 0
        self.trace = Trace() if trace else None
        self.check_invariants = check_invariants
        self._dispatch_table = {
            ARRIVAL: self._on_arrival,
            MAC: self._on_mac,
            TRICKLE: self._on_trickle,
            WINDOW_X: self._on_window_x,
            SAMPLE: self._on_sample,
        }

    # --- setup / run -------------------------------------------------------

    def start(self) -> None:
        root = self.nodes[ROOT]
        self._start_trickle(root, 0)
        slot_d = self.cfg.slot_duration
        for n in self.nodes[1:]:
            n.next_arrival_s = n.traffic_rng.expovariate(self.lam)
            s = int(n.next_arrival_s / slot_d)
            if s < self.total_slots:
                self.sched.schedule(s, ARRIVAL, n)
        if self.trace is not None:
            self.sched.schedule(self.cfg.slots_per_slotframe - 1, SAMPLE, None)

    def run(self) -> RunResult:
        self.start()
        self.sched.run(self.total_slots, self._dispatch, self._end_of_slot)
        return self.result()

    def _dispatch(self, ev) -> None:
        self._dispatch_table[ev.kind](ev.payload, ev.fire_slot)

    # --- data plane --------------------------------------------------------

    def _on_arrival(self, node: Node, now: int) -> None:
        measured = now >= self.warmup
        if measured:
            node.generated += 1
        self._enqueue(node, (now, node.id, measured), now)
        node.next_arrival_s += node.traffic_rng.expovariate(self.lam)
        s = int(node.next_arrival_s / self.cfg.slot_duration)
        if s < self.total_slots:
            self.sched.schedule(s, ARRIVAL, node)

    def _enqueue(self, node: Node, pkt: tuple, now: int) -> None:
        if node.queue.enqueue(pkt) is ACCEPTED:
            if not node.mac_pending and node.parent is not None:
                # the sub-slot initial backoff fits inside the current slot
                node.mac_pending = True
                self.sched.schedule(self.sched.now, MAC, node)
            return
        if pkt[2]:
            node.queue_drops += 1
        if self.qrpl and node.joined:
            self._queue_loss_reset(node, now)

    def _queue_loss_reset(self, node: Node, now: int) -> None:
        t = node.trickle
        before = t.next_fire_slot
        t.on_queue_loss(node.queue.consecutive_drops, now, self.trickle_rng)
        if t.next_fire_slot != before:
            self._reschedule_trickle(node)
        if node.window_ev is not None:
            node.window_ev.cancel()
        node.window_ev = self.sched.schedule(now + self.x_slots, WINDOW_X, node)

    def _on_window_x(self, node: Node, now: int) -> None:
        node.window_ev = None
        node.trickle.on_window_x()
        node.queue.consecutive_drops = 0

    def _on_mac(self, node: Node, now: int) -> None:
        if not node.queue.backlog or node.parent is None:
            node.mac_pending = False
            return
        if self.mac.try_attempt(node.id, node.parent, now):
            if now >= self.warmup:
                node.data_tx += 1
        else:
            self.sched.schedule(now + self.mac.backoff(), MAC, node)

    def _end_of_slot(self, slot: int) -> None:
        results = self.mac.resolve(slot)
        if not results:
            return
        nodes = self.nodes
        for r in results:
            node = nodes[r.tx]
            entry = node.table.get(r.rx)
            if entry is not None:
                entry.record_attempt(r.status is DELIVERED)
            out = r.outcome
            if out is None:
                self.sched.schedule(slot + self.mac.backoff(), MAC, node)
                continue
            pkt = node.queue.dequeue()
            measured = pkt[2]
            if measured:
                node.mac_offered += 1
            if out.status is DELIVERED:
                if measured:
                    node.forwarded += 1
                if r.rx == ROOT:
                    if measured:
                        self.delivered += 1
                        self.delay_slots_sum += slot + 1 - pkt[0]
                else:
                    self._enqueue(nodes[r.rx], pkt, slot)
            else:
                if measured:
                    node.link_drops += 1
                if not self.qrpl:
                    self._reselect(node, slot)
            if node.queue.backlog and node.parent is not None:
                self.sched.schedule(slot + 1, MAC, node)
            else:
                node.mac_pending = False

    # --- control plane -----------------------------------------------------

    def _start_trickle(self, node: Node, now: int) -> None:
        node.trickle.start(now, self.trickle_rng)
        self._reschedule_trickle(node)

    def _reschedule_trickle(self, node: Node) -> None:
        if node.trickle_ev is not None:
            node.trickle_ev.cancel()
        node.trickle_ev = self.sched.schedule(node.trickle.next_fire_slot, TRICKLE, node)

    def _stop_trickle(self, node: Node) -> None:
        if node.trickle_ev is not None:
            node.trickle_ev.cancel()
            node.trickle_ev = None

    def make_dio(self, node: Node, now: int) -> DioMessage:
        bf = node.queue.bf if self.qrpl else 0.0
        if not node.is_root and node.parent is not None:
            e = node.table[node.parent]
            node.path_cost = e.etx + e.path_cost
        return DioMessage(node.id, self.codec.encode(node.hop, bf), now, node.path_cost)

    def _on_trickle(self, node: Node, now: int) -> None:
        node.trickle_ev = None
        if not node.joined:
            return
        dio = self.make_dio(node, now)
        if now >= self.warmup:
            node.dio_sent += 1
            self.dio_total += 1
        if self.trace is not None:
            self.trace.dio_records += dio.to_bytes()
        rnd = self.link_rng.random
        row = self.link.prob_table[node.id]
        for m in sorted(self.link.neighbors[node.id]):
            if rnd() < row[m]:
                self.process_dio(self.nodes[m], dio, now)
        node.trickle.on_fire(now, self.trickle_rng)
        self._reschedule_trickle(node)

    def process_dio(self, node: Node, dio: DioMessage, now: int) -> Optional[NeighborEntry]:
        sender = dio.sender
        if sender not in self.link.neighbors[node.id]:
            return None
        bf, hop = self.codec.decode(dio.rank_new)
        entry = node.table.get(sender)
        if entry is None:
            rp = self.cfg.rpl
            entry = NeighborEntry(sender, rp.etx_window, rp.etx_unknown, rp.etx_init)
            node.table[sender] = entry
        entry.hop = hop
        entry.bf = bf
        entry.last_dio_slot = now
        entry.path_cost = dio.path_cost
        if node.is_root:
            return entry
        self._evict_stale(node, now)
        if self.qrpl:
            lp = self.cfg.learning
            node.q.learn(sender, reward(bf, entry.etx, hop, lp), lp.alpha)
        self._reselect(node, now)
        return entry

    def _evict_stale(self, node: Node, now: int) -> None:
        limit = now - self.evict_slots
        stale = [n for n, e in node.table.items() if e.last_dio_slot < limit]
        for n in stale:
            del node.table[n]
            node.q.pop(n, None)

    def _creates_loop(self, x: int, y: int) -> bool:
        p, steps = y, 0
        nodes = self.nodes
        while p is not None and p != ROOT:
            if p == x or steps > len(nodes):
                return True
            p = nodes[p].parent
            steps += 1
        return False

    def _reselect(self, node: Node, now: int) -> None:
        table = node.table
        own_hop = None
        if node.parent is not None and node.parent in table:
            own_hop = table[node.parent].hop + 1
        cands = [e for e in hop_candidates(table.values(), own_hop)
                 if not self._creates_loop(node.id, e.neighbor)]
        if not cands:
            if node.parent is not None and node.parent not in table:
                self._detach(node)
            return
        try:
            if self.qrpl:
                ids = sorted(e.neighbor for e in cands)
                dist = selection_distribution({i: node.q.get(i, 0.0) for i in ids},
                                              self.cfg.learning.theta)
                new = select_parent(dist, ids, self.select_rng)
            elif self.of == "MRHOF":
                cur = node.parent if any(e.neighbor == node.parent for e in cands) else None
                new = mrhof_select(sorted(cands, key=lambda e: e.neighbor), cur,
                                   self.cfg.rpl.mrhof_hysteresis)
            else:
                new = of0_select(cands)
        except NoViableParent:
            return
        self._set_parent(node, new, now)

    def _set_parent(self, node: Node, new: int, now: int) -> None:
        old_parent, old_hop = node.parent, node.hop
        e = node.table[new]
        node.parent = new
        node.hop = e.hop + 1
        node.path_cost = e.etx + e.path_cost
        if old_parent is None:
            self._start_trickle(node, now)
            if node.queue.backlog and not node.mac_pending:
                node.mac_pending = True
                self.sched.schedule(self.sched.now, MAC, node)
        elif node.hop != old_hop:
            if node.trickle.reset(now, self.trickle_rng):
                self._reschedule_trickle(node)
        if new != old_parent:
            node.parent_changes += 1
            if self.check_invariants:
                assert self.is_acyclic(), f"parent loop after {node.id} -> {new}"

    def _detach(self, node: Node) -> None:
        node.parent = None
        node.hop = None
        node.path_cost = math.inf
        self._stop_trickle(node)

    def _on_sample(self, _payload, now: int) -> None:
        sf = now // self.cfg.slots_per_slotframe
        for n in self.nodes[1:]:
            self.trace.parent_snapshots.append((sf, n.id, n.parent))
            for nb in sorted(n.q):
                self.trace.q_snapshots.append((sf, n.id, nb, n.q[nb]))
        nxt = now + self.cfg.slots_per_slotframe
        if nxt < self.total_slots:
            self.sched.schedule(nxt, SAMPLE, None)

    # --- inspection --------------------------------------------------------

    def is_acyclic(self) -> bool:
        for n in self.nodes[1:]:
            p, steps = n.parent, 0
            while p is not None and p != ROOT:
                p = self.nodes[p].parent
                steps += 1
                if steps > len(self.nodes):
                    return False
        return True

    def result(self) -> RunResult:
        per_node = {}
        in_queue = in_flight = 0
        for n in self.nodes:
            measured = [p for p in n.queue.backlog if p[2]]
            head_busy = bool(n.queue.backlog) and self.mac.attempts.get(n.id, 0) > 0
            flight = 1 if head_busy and n.queue.backlog[0][2] else 0
            in_flight += flight
            in_queue += len(measured) - flight
            per_node[n.id] = {
                "generated": n.generated,
                "forwarded": n.forwarded,
                "queue_drops": n.queue_drops,
                "link_drops": n.link_drops,
                "mac_offered": n.mac_offered,
                "dio_sent": n.dio_sent,
                "data_tx": n.data_tx,
                "parent_changes": n.parent_changes,
                "hop_at_end": n.hop if n.hop is not None else -1,
                "parent": n.parent if n.parent is not None else -1,
            }
        return RunResult(
            run_index=self.run_index,
            config=self.cfg,
            topology=self.topology,
            per_node=per_node,
            generated=sum(n.generated for n in self.nodes),
            delivered=self.delivered,
            delay_slots_sum=self.delay_slots_sum,
            queue_drops=sum(n.queue_drops for n in self.nodes),
            link_drops=sum(n.link_drops for n in self.nodes),
            in_queue=in_queue,
            in_flight=in_flight,
            dio_total=self.dio_total,
            data_tx_total=sum(n.data_tx for n in self.nodes),
            collisions=self.mac.collisions,
            parents={n.id: n.parent for n in self.nodes[1:]},
            trace=self.trace,
        )


def simulate(config: SimConfig, run_index: int = 0, topology: Optional[Topology] = None,
             trace: bool = False) -> RunResult:
    return Network(config, run_index, topology, trace=trace).run()
