"""Discrete-event core: slot clock, FIFO-per-slot scheduler, RNG substreams,
Poisson traffic and run orchestration."""
from __future__ import annotations

import hashlib
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Iterable, Optional

from .errors import SchedulingInPast

RNG_SUBSTREAMS = ("topology", "shadowing", "traffic", "mac-backoff", "parent-selection")


@dataclass
class SimClock:
    slot_index: int = 0
    slot_duration: float = 0.010
    slots_per_slotframe: int = 500
    slotframes_total: int = 1000

    @property
    def time_seconds(self) -> float:
        return self.slot_index * self.slot_duration

    @property
    def slotframe_period(self) -> float:
        return self.slots_per_slotframe * self.slot_duration

    @property
    def slotframe_index(self) -> int:
        return self.slot_index // self.slots_per_slotframe


class EventKind(IntEnum):
    PACKET_ARRIVAL = 0
    MAC_ATTEMPT = 1
    TRICKLE_FIRE = 2
    TRICKLE_WINDOW_X = 3
    QUEUE_SAMPLE = 4
    RUN_END = 5


class Event:
    __slots__ = ("fire_slot", "sequence", "kind", "payload", "cancelled")

    def __init__(self, fire_slot, sequence, kind, payload=None):
        self.fire_slot = fire_slot
        self.sequence = sequence
        self.kind = kind
        self.payload = payload
        self.cancelled = False

    def cancel(self):
        self.cancelled = True

    def __repr__(self):
        return f"Event({self.fire_slot}, #{self.sequence}, {self.kind!r}, {self.payload!r})"


# The handle returned by schedule() is the event itself; call .cancel() on it.
EventHandle = Event


class Scheduler:
    """Calendar queue keyed by integer slot.

    Each slot owns a list, so events sharing a slot dispatch in insertion
    order; events scheduled for the slot being dispatched run after the ones
    already queued there.
    """

    def __init__(self, start_slot: int = 0):
        self.now = start_slot
        self._buckets: dict = {}
        self._seq = 0

    def __len__(self):
        return sum(1 for b in self._buckets.values() for e in b if not e.cancelled)

    def schedule(self, fire_slot: int, kind, payload=None) -> EventHandle:
        if fire_slot < self.now:
            raise SchedulingInPast(f"slot {fire_slot} < current slot {self.now}")
        ev = Event(fire_slot, self._seq, kind, payload)
        self._seq += 1
        bucket = self._buckets.get(fire_slot)
        if bucket is None:
            self._buckets[fire_slot] = [ev]
        else:
            bucket.append(ev)
        return ev

    def pop(self) -> Optional[Event]:
        """Remove and return the next live event, advancing the clock to it."""
        while self._buckets:
            slot = min(self._buckets)
            bucket = self._buckets[slot]
            ev = bucket.pop(0)
            if not bucket:
                del self._buckets[slot]
            if not ev.cancelled:
                self.now = slot
                return ev
        return None

    def run(self, until: int, dispatch: Callable[[Event], None],
            end_of_slot: Optional[Callable[[int], None]] = None) -> None:
        """Dispatch every event with fire_slot < until.

        ``end_of_slot(slot)`` runs after the last event of each non-empty
        slot; by then the clock reads slot + 1, so it can only schedule into
        the future.
        """
        buckets = self._buckets
        slot = self.now
        idle = 0
        while slot < until:
            bucket = buckets.get(slot)
            if bucket is None:
                if not buckets:
                    break
                idle += 1
                if idle > 256:  # long gap: jump instead of scanning
                    slot = min(buckets)
                    idle = 0
                else:
                    slot += 1
                continue
            idle = 0
            self.now = slot
            i = 0
            while i < len(bucket):
                ev = bucket[i]
                i += 1
                if not ev.cancelled:
                    dispatch(ev)
            del buckets[slot]
            slot += 1
            self.now = slot
            if end_of_slot is not None:
                end_of_slot(slot - 1)
        self.now = max(self.now, min(slot, until))


def substream(seed: int, run_index: int, name: str) -> random.Random:
    """Independent RNG for (run, purpose): seed XOR a stable hash of both."""
    digest = hashlib.blake2b(f"{run_index}:{name}".encode(), digest_size=8).digest()
    return random.Random(seed ^ int.from_bytes(digest, "little"))


def generate_arrivals(rate_ppm: float, duration_s: float, rng: random.Random) -> list:
    """Poisson arrival times in [0, duration_s) for a rate in packets/minute."""
    if rate_ppm < 0 or duration_s <= 0:
        raise ValueError("need rate_ppm >= 0 and duration_s > 0")
    if rate_ppm == 0:
        return []
    lam = rate_ppm / 60.0
    times = []
    t = rng.expovariate(lam)
    while t < duration_s:
        times.append(t)
        t += rng.expovariate(lam)
    return times


def _run_one(args):
    from .network import simulate

    config, run_index, topology = args
    return simulate(config, run_index, topology=topology)


def run(config, jobs: int = 1, topology=None, run_indices: Optional[Iterable[int]] = None):
    """Simulate ``config.runs`` independent runs and aggregate them.

    Runs are independent (own RNG substreams), so ``jobs > 1`` farms them out
    to worker processes without changing any result.
    """
    from .metrics import build_report
    from .phy import load_topology

    config.validate()
    if topology is None and config.topology_file:
        topology = load_topology(config.topology_file)
    indices = list(range(config.runs)) if run_indices is None else list(run_indices)
    work = [(config, i, topology) for i in indices]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, work))
    else:
        results = [_run_one(w) for w in work]
    return build_report(config, results)
