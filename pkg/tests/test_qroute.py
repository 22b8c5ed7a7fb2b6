import math
import random

import pytest
from hypothesis import assume, given, strategies as st

from qrpl_sim.config import LearningParams
from qrpl_sim.errors import NoViableParent
from qrpl_sim.qroute import (QTable, lambda_weight, q_update, reward, select_parent,
                             selection_distribution)

finite = st.floats(0, 50, allow_nan=False)


@pytest.mark.parametrize("bf,want", [(0.0, 1.0), (0.75, 1.5), (0.25, 0.5)])
def test_lambda_examples(bf, want):
    assert lambda_weight(bf, 0.5) == pytest.approx(want)


@pytest.mark.parametrize("bf,etx,hop,want", [
    (0.0, 1.0, 1, 2.0),
    (0.8, 2.0, 3, 6.28),
    (1.0, 1.0, 1, 4.0),
])
def test_reward_examples(bf, etx, hop, want):
    assert reward(bf, etx, hop, LearningParams(bf_th=0.5)) == pytest.approx(want)


def test_q_update_examples():
    assert q_update(0.0, 2.0, 0.3) == pytest.approx(0.6)
    assert q_update(3.5, 3.5, 0.7) == 3.5


def test_qtable_starts_at_zero():
    q = QTable()
    assert q.learn(4, 2.0, 0.3) == pytest.approx(0.6)
    assert q[4] == pytest.approx(0.6)


def test_distribution_examples():
    assert selection_distribution({1: 0.4, 2: 0.4}) == pytest.approx({1: 0.5, 2: 0.5})
    d = selection_distribution({1: 1.0, 2: 2.0}, theta=1.0)
    soft1 = 1 / (1 + math.e)
    assert d[1] == pytest.approx(1 - soft1, abs=1e-12)
    assert d[1] == pytest.approx(0.7311, abs=1e-4) and d[2] == pytest.approx(0.2689, abs=1e-4)
    assert selection_distribution({1: 0, 2: 0, 3: 0}) == pytest.approx({1: 1 / 3, 2: 1 / 3, 3: 1 / 3})
    assert selection_distribution({9: 123.0}) == {9: 1.0}
    with pytest.raises(NoViableParent):
        selection_distribution({})


def test_sampling_frequencies():
    rng = random.Random(2024)
    dist = {1: 0.7311, 2: 0.2689}
    n = 100_000
    hits = sum(select_parent(dist, [1, 2], rng) == 1 for _ in range(n))
    assert abs(hits / n - 0.7311) < 0.005


def test_filtered_candidate_never_chosen():
    dist = selection_distribution({1: 0.0, 2: 5.0, 3: 6.0})
    rng = random.Random(0)
    assert {select_parent(dist, [2, 3], rng) for _ in range(500)} <= {2, 3}
    assert select_parent({5: 1.0}, [5], rng) == 5
    with pytest.raises(NoViableParent):
        select_parent(dist, [], rng)


@given(st.dictionaries(st.integers(0, 50), finite, min_size=1, max_size=8),
       st.floats(0.05, 10))
def test_distribution_valid_and_argmin_preserving(q, theta):
    d = selection_distribution(q, theta)
    assert math.fsum(d.values()) == pytest.approx(1.0, abs=1e-12)
    assert all(0.0 <= p <= 1.0 for p in d.values())
    best = min(q, key=q.get)
    assert d[best] == pytest.approx(max(d.values()))


@given(finite, finite, st.floats(0.01, 1.0))
def test_q_update_contracts(q0, r, alpha):
    q = q0
    for t in range(1, 51):
        q = q_update(q, r, alpha)
        assert abs(abs(q - r) - (1 - alpha) ** t * abs(q0 - r)) <= 1e-10 * max(1.0, abs(q0 - r))


@given(st.floats(0, 1), st.floats(1, 16), st.integers(0, 20), st.floats(0.05, 0.95))
def test_reward_monotone_in_etx_and_hop(bf, etx, hop, th):
    p = LearningParams(bf_th=th)
    base = reward(bf, etx, hop, p)
    assert reward(bf, etx + 0.5, hop, p) > base
    assert reward(bf, etx, hop + 1, p) > base
    assert base >= 0


@given(st.floats(0.05, 0.95), st.floats(0, 1), st.floats(0, 1))
def test_reward_increasing_in_bf_above_half_threshold(th, a, b):
    lo, hi = sorted((a, b))
    assume(lo >= th / 2 and hi - lo > 1e-9)
    p = LearningParams(bf_th=th)
    assert reward(hi, 1, 1, p) > reward(lo, 1, 1, p)
