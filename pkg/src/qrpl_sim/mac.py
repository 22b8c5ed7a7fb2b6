"""Slotted CSMA/CA abstraction with bounded retransmissions.

A frame occupies exactly one slot.  Within a slot, attempts register in
dispatch order; carrier sense sees everything registered earlier in the same
slot, so perfect sensing rules out collisions among mutually audible nodes.
Collisions come from hidden terminals: another transmitter inside the
receiver's interference range in the same slot.  ACKs are instantaneous and
lossless.
"""
from __future__ import annotations

import random
from enum import Enum
from typing import List, NamedTuple, Optional

from .config import MacParams
from .errors import EmptyQueue
from .phy import LinkModel


class TxStatus(Enum):
    DELIVERED = "Delivered"
    CHANNEL_LOSS = "ChannelLoss"
    COLLISION = "Collision"
    EXHAUSTED = "Exhausted"


DELIVERED = TxStatus.DELIVERED
CHANNEL_LOSS = TxStatus.CHANNEL_LOSS
COLLISION = TxStatus.COLLISION
EXHAUSTED = TxStatus.EXHAUSTED


class TxOutcome(NamedTuple):
    status: TxStatus
    attempts_used: int
    completion_slot: int
    last_failure: Optional[TxStatus] = None


class AttemptResult(NamedTuple):
    tx: int
    rx: int
    status: TxStatus  # DELIVERED, CHANNEL_LOSS or COLLISION for this attempt
    outcome: Optional[TxOutcome]  # set when the frame is finished (delivered or given up)


class CsmaMac:
    def __init__(self, params: MacParams, link: LinkModel,
                 link_rng: random.Random, backoff_rng: random.Random):
        self.params = params
        self.link = link
        self.link_rng = link_rng
        self.backoff_rng = backoff_rng
        self._bo_random = backoff_rng.random
        self._bo_min = params.backoff_min_slots
        self._bo_span = params.backoff_max_slots - params.backoff_min_slots + 1
        self.attempts = {}  # tx node -> attempts spent on its head-of-line frame
        self.collisions = 0
        self.deferrals = 0
        self._slot = None
        self._pending = []  # (tx, rx) registered in self._slot
        self._busy = set()

    def _sync(self, slot):
        if slot != self._slot:
            self._slot = slot
            self._pending = []
            self._busy = set()

    def backoff(self) -> int:
        """Uniform integer in [backoff_min_slots, backoff_max_slots]."""
        return self._bo_min + int(self._bo_random() * self._bo_span)

    def cca_busy(self, node: int, slot: int) -> bool:
        """True iff a node within communication range of ``node`` transmits in ``slot``."""
        self._sync(slot)
        if not self._busy:
            return False
        return not self.link.neighbors[node].isdisjoint(self._busy)

    def try_attempt(self, tx: int, rx: int, slot: int) -> bool:
        """Register a transmission attempt; False means deferred (no retry consumed)."""
        self._sync(slot)
        if tx in self._busy:
            return False
        if self.params.cca_enabled and self._busy and not self.link.neighbors[tx].isdisjoint(self._busy):
            self.deferrals += 1
            return False
        self._pending.append((tx, rx))
        self._busy.add(tx)
        return True

    def resolve(self, slot: int) -> List[AttemptResult]:
        """Decide every attempt registered in ``slot``."""
        if slot != self._slot or not self._pending:
            return []
        busy = self._busy
        interferers = self.link.interferers
        table = self.link.prob_table
        rnd = self.link_rng.random
        limit = self.params.retransmission_limit
        results = []
        for tx, rx in self._pending:
            if rx in busy or (len(busy) > 1 and any(
                    t != tx and t in interferers[rx] for t in busy)):
                status = COLLISION
                self.collisions += 1
            elif rnd() < table[tx][rx]:
                status = DELIVERED
            else:
                status = CHANNEL_LOSS
            used = self.attempts.get(tx, 0) + 1
            outcome = None
            if status is DELIVERED:
                outcome = TxOutcome(DELIVERED, used, slot)
                used = 0
            elif used > limit:
                outcome = TxOutcome(EXHAUSTED, used, slot, status)
                used = 0
            self.attempts[tx] = used
            results.append(AttemptResult(tx, rx, status, outcome))
        self._pending = []
        self._busy = set()
        self._slot = None
        return results

    def abandon(self, tx: int) -> None:
        """Forget the retry count of tx's current frame (e.g. the frame was removed)."""
        self.attempts[tx] = 0


def transmit(mac: CsmaMac, tx: int, rx: int, slot: int, queue=None) -> TxOutcome:
    """Send one frame from ``tx`` to ``rx`` with nobody else on the air.

    Retries after a uniform backoff until delivered or the retry limit is
    spent.  The frame itself is not removed from ``queue``.
    """
    if queue is not None and len(queue) == 0:
        raise EmptyQueue(f"node {tx} has nothing to send")
    s = slot
    while True:
        if mac.try_attempt(tx, rx, s):
            for r in mac.resolve(s):
                if r.tx == tx and r.outcome is not None:
                    return r.outcome
        s += mac.backoff()
