"""Per-node FIFO output buffer with a smoothed backlog factor."""
from __future__ import annotations

from collections import deque
from enum import Enum


class EnqueueResult(Enum):
    ACCEPTED = "Accepted"
    DROPPED_OVERFLOW = "DroppedOverflow"


ACCEPTED = EnqueueResult.ACCEPTED
DROPPED_OVERFLOW = EnqueueResult.DROPPED_OVERFLOW


class _Empty:
    def __repr__(self):
        return "Empty"

    def __bool__(self):
        return False


EMPTY = _Empty()


class PacketQueue:
    """Bounded FIFO.

    ``bf`` is an EWMA of occupancy/capacity, refreshed after every enqueue
    outcome (accepted or dropped) and every dequeue, using the post-operation
    length. ``consecutive_drops`` counts overflow drops since the last
    accepted packet.
    """

    __slots__ = ("capacity", "ewma_beta", "backlog", "bf", "consecutive_drops",
                 "accepted", "dropped")

    def __init__(self, capacity: int = 10, ewma_beta: float = 0.3):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        if not 0 < ewma_beta <= 1:
            raise ValueError("ewma_beta must be in (0, 1]")
        self.capacity = capacity
        self.ewma_beta = ewma_beta
        self.backlog = deque()
        self.bf = 0.0
        self.consecutive_drops = 0
        self.accepted = 0
        self.dropped = 0

    def __len__(self):
        return len(self.backlog)

    def enqueue(self, pkt) -> EnqueueResult:
        if len(self.backlog) < self.capacity:
            self.backlog.append(pkt)
            self.consecutive_drops = 0
            self.accepted += 1
            result = ACCEPTED
        else:
            self.consecutive_drops += 1
            self.dropped += 1
            result = DROPPED_OVERFLOW
        self.update_bf()
        return result

    def dequeue(self):
        if not self.backlog:
            return EMPTY
        pkt = self.backlog.popleft()
        self.update_bf()
        return pkt

    def peek(self):
        return self.backlog[0] if self.backlog else EMPTY

    def update_bf(self) -> float:
        b = self.ewma_beta
        self.bf = b * (len(self.backlog) / self.capacity) + (1.0 - b) * self.bf
        return self.bf
