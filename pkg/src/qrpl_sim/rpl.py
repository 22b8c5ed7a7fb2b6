"""RPL control plane pieces: DIO wire image, the RANK piggyback codec, ETX
estimation, the modified Trickle timer and the OF0/MRHOF parent selectors."""
from __future__ import annotations

import math
import random
import struct
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

from .errors import HopOverflow, MalformedRank, NoViableParent

RANK_MAX = 0xFFFF
_DIO_STRUCT = struct.Struct("<HHI")


@dataclass(frozen=True)
class DioMessage:
    sender: int
    rank_new: int
    emit_slot: int
    # MRHOF metric-container value (advertised path ETX); not part of the wire image
    path_cost: float = 0.0

    def __post_init__(self):
        if not 0 <= self.rank_new <= RANK_MAX:
            raise MalformedRank(f"rank {self.rank_new} outside 16 bits")

    def to_bytes(self) -> bytes:
        """8-byte little-endian trace record: sender u16, rank u16, emit slot u32."""
        return _DIO_STRUCT.pack(self.sender, self.rank_new, self.emit_slot)

    @classmethod
    def from_bytes(cls, data: bytes) -> "DioMessage":
        sender, rank, slot = _DIO_STRUCT.unpack(data)
        return cls(sender, rank, slot)


@dataclass(frozen=True)
class RankCodec:
    eta: int = 100

    @property
    def bf_quantum(self) -> float:
        return 1.0 / (self.eta - 1)

    @property
    def max_hops(self) -> int:
        # largest hop with eta*(hop+1) + (eta-1) <= 65535
        return (RANK_MAX - (self.eta - 1)) // self.eta - 1

    def encode(self, hop: int, bf: float) -> int:
        return encode_rank(hop, bf, self)

    def decode(self, rank_new: int) -> Tuple[float, int]:
        return decode_rank(rank_new, self)


def encode_rank(hop: int, bf: float, codec: RankCodec = RankCodec()) -> int:
    """Pack hop count and quantised backlog factor into one 16-bit rank."""
    eta = codec.eta
    if not 0.0 <= bf <= 1.0:
        raise ValueError(f"bf must be in [0, 1], got {bf!r}")
    if hop < 0:
        raise ValueError(f"hop must be >= 0, got {hop!r}")
    q = round(bf * (eta - 1))  # round() is half-to-even
    rank = eta * (hop + 1) + q
    if rank > RANK_MAX or hop > codec.max_hops:
        raise HopOverflow(f"hop {hop} does not fit in 16 bits with eta={eta}")
    return rank


def decode_rank(rank_new: int, codec: RankCodec = RankCodec()) -> Tuple[float, int]:
    """Inverse of encode_rank: returns (bf, hop)."""
    eta = codec.eta
    if not 0 <= rank_new <= RANK_MAX:
        raise MalformedRank(f"rank {rank_new} outside 16 bits")
    hop = rank_new // eta - 1
    if hop < 0:
        raise MalformedRank(f"rank {rank_new} < eta={eta} decodes to a negative hop")
    return (rank_new % eta) / (eta - 1), hop


# --- neighbour table / ETX -------------------------------------------------

class NeighborEntry:
    """What a node knows about one neighbour.

    ETX is attempts/successes over the most recent ``window`` MAC attempts on
    the link. Before any attempt it is ``etx_init``; with attempts but no
    success it is ``etx_unknown``, which also caps the estimate.
    """

    __slots__ = ("neighbor", "hop", "bf", "last_dio_slot", "path_cost", "tx_total",
                 "tx_success", "_window", "window", "etx_unknown", "etx_init")

    def __init__(self, neighbor: int, window: int = 32, etx_unknown: float = 16.0,
                 etx_init: float = 2.0):
        self.neighbor = neighbor
        self.hop = None
        self.bf = 0.0
        self.last_dio_slot = -1
        self.path_cost = math.inf
        self.tx_total = 0
        self.tx_success = 0
        self._window = []
        self.window = window
        self.etx_unknown = etx_unknown
        self.etx_init = etx_init

    def record_attempt(self, success: bool) -> None:
        w = self._window
        w.append(success)
        self.tx_total += 1
        if success:
            self.tx_success += 1
        if len(w) > self.window:
            old = w.pop(0)
            self.tx_total -= 1
            if old:
                self.tx_success -= 1

    @property
    def etx(self) -> float:
        if self.tx_total == 0:
            return self.etx_init
        if self.tx_success == 0:
            return self.etx_unknown
        return min(self.tx_total / self.tx_success, self.etx_unknown)

    def __repr__(self):
        return (f"NeighborEntry({self.neighbor}, hop={self.hop}, bf={self.bf:.3f}, "
                f"etx={self.etx:.2f})")


def update_etx(entry: NeighborEntry, outcome) -> float:
    """Fold a finished transmission (all its attempts) into the ETX window."""
    from .mac import DELIVERED

    delivered = outcome.status is DELIVERED
    for i in range(outcome.attempts_used):
        entry.record_attempt(delivered and i == outcome.attempts_used - 1)
    return entry.etx


# --- Trickle -----------------------------------------------------------------

@dataclass
class TrickleState:
    """Trickle timer with the queue-loss reset rule.

    Intervals are kept in seconds; ``next_fire_slot`` in slots.  A reset
    while the interval already equals i_min keeps the pending fire (RFC 6206
    section 4.2), so a burst of resets cannot starve emission.
    """

    i_min: float = 3.0
    doublings: int = 8
    phi_0: int = 2
    phi_init: int = 2
    window_x: float = 0.100
    slot_duration: float = 0.010
    current_interval: float = 0.0
    phi: int = 0
    next_fire_slot: int = -1
    interval_start_slot: int = 0
    resets: int = 0
    loss_resets: int = 0

    def __post_init__(self):
        if not self.current_interval:
            self.current_interval = self.i_min
        if not self.phi:
            self.phi = self.phi_init

    @property
    def i_max(self) -> float:
        return self.i_min * 2 ** self.doublings

    def _slots(self, seconds: float) -> int:
        return max(1, int(round(seconds / self.slot_duration)))

    def _begin_interval(self, now: int, rng: random.Random) -> None:
        n = self._slots(self.current_interval)
        self.interval_start_slot = now
        self.next_fire_slot = now + rng.randrange(n // 2, n) if n > 1 else now + 1

    def start(self, now: int, rng: random.Random) -> None:
        self.current_interval = self.i_min
        self._begin_interval(now, rng)

    def on_fire(self, now: int, rng: random.Random) -> bool:
        """Emit (suppression is off); the doubled interval starts when this one ends."""
        end = self.interval_start_slot + self._slots(self.current_interval)
        self.current_interval = min(2 * self.current_interval, self.i_max)
        self._begin_interval(max(end, now), rng)
        return True

    def reset(self, now: int, rng: random.Random) -> bool:
        """Return True if the pending fire was rescheduled."""
        self.resets += 1
        if self.current_interval > self.i_min:
            self.current_interval = self.i_min
            self._begin_interval(now, rng)
            return True
        return False

    def on_queue_loss(self, consecutive_drops: int, now: int, rng: random.Random) -> bool:
        """Reset to i_min once ``phi`` consecutive drops are seen; then raise phi."""
        if consecutive_drops >= self.phi:
            self.reset(now, rng)
            self.phi += self.phi_0
            self.loss_resets += 1
            return True
        return False

    def on_window_x(self) -> None:
        """No queue loss for window_x: back to the initial threshold."""
        self.phi = self.phi_init


def trickle_schedule(i_min: float, doublings: int, horizon: float) -> List[float]:
    """Interval lengths of an undisturbed timer until their sum passes ``horizon``."""
    out, total, cur, i_max = [], 0.0, i_min, i_min * 2 ** doublings
    while total < horizon:
        out.append(cur)
        total += cur
        cur = min(2 * cur, i_max)
    return out


# --- parent selection --------------------------------------------------------

def hop_candidates(entries: Iterable[NeighborEntry], own_hop: Optional[int]) -> List[NeighborEntry]:
    """Neighbours allowed as parent: hop below our own, else hop-equal ones."""
    known = [e for e in entries if e.hop is not None]
    if own_hop is None:
        return known
    lower = [e for e in known if e.hop < own_hop]
    if lower:
        return lower
    return [e for e in known if e.hop == own_hop]


def mrhof_select(neighbors: Sequence[NeighborEntry], current: Optional[int] = None,
                 hysteresis: float = 0.5) -> int:
    """Minimum path ETX with hysteresis; ties go to the lowest node id."""
    if not neighbors:
        raise NoViableParent("no candidates")
    costs = {e.neighbor: e.etx + e.path_cost for e in neighbors}
    best = min(costs, key=lambda n: (costs[n], n))
    if math.isinf(costs[best]):
        raise NoViableParent("every candidate has infinite path cost")
    if current is not None and current in costs and not math.isinf(costs[current]):
        if costs[current] - costs[best] <= hysteresis:
            return current
    return best


def of0_select(neighbors: Sequence[NeighborEntry]) -> int:
    """Minimum hop; ties by lowest ETX, then lowest id."""
    viable = [e for e in neighbors if e.hop is not None]
    if not viable:
        raise NoViableParent("no candidates")
    return min(viable, key=lambda e: (e.hop, e.etx, e.neighbor)).neighbor
