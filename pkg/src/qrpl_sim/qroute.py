"""Q-learning parent selection: Q-table, composite reward, congestion gate and
the inverted-softmax selection rule."""
from __future__ import annotations

import math
import random
from typing import Dict, List, Mapping, Sequence

from .config import LearningParams
from .errors import NoViableParent


def lambda_weight(bf: float, bf_th: float) -> float:
    """Congestion gate: grows past 1 once bf exceeds bf_th, minimum 0.5 at bf_th/2."""
    ratio = bf / bf_th
    return max(ratio, 1.0 - ratio)


def reward(bf: float, etx: float, hop: float, params: LearningParams = LearningParams()) -> float:
    """Routing cost of using a neighbour: gated backlog + link ETX + its hop count."""
    return lambda_weight(bf, params.bf_th) * bf + etx + hop


def q_update(q_old: float, r: float, alpha: float) -> float:
    return q_old + alpha * (r - q_old)


class QTable(dict):
    """neighbour id -> Q value; new neighbours start at 0."""

    def learn(self, neighbor: int, r: float, alpha: float) -> float:
        q = q_update(self.get(neighbor, 0.0), r, alpha)
        self[neighbor] = q
        return q


def selection_distribution(qtable: Mapping[int, float], theta: float = 1.0) -> Dict[int, float]:
    """Selection probability per neighbour.

    Raw preference is 1 - softmax(Q/theta); over n neighbours those sum to
    n - 1, so they are renormalised. A single neighbour gets probability 1.
    """
    if not qtable:
        raise NoViableParent("empty Q-table")
    keys = list(qtable)
    if len(keys) == 1:
        return {keys[0]: 1.0}
    qmax = max(qtable.values())
    exps = [math.exp((qtable[k] - qmax) / theta) for k in keys]
    total = math.fsum(exps)
    raw = [1.0 - e / total for e in exps]
    norm = math.fsum(raw)
    return {k: w / norm for k, w in zip(keys, raw)}


def select_parent(distribution: Mapping[int, float], candidates: Sequence[int],
                  rng: random.Random) -> int:
    """Sample one candidate; mass on non-candidates is discarded."""
    allowed = [c for c in candidates if distribution.get(c, 0.0) > 0.0]
    if not allowed:
        raise NoViableParent("no candidate left after filtering")
    if len(allowed) == 1:
        return allowed[0]
    weights = [distribution[c] for c in allowed]
    total = math.fsum(weights)
    u = rng.random() * total
    acc = 0.0
    for c, w in zip(allowed, weights):
        acc += w
        if u < acc:
            return c
    return allowed[-1]
