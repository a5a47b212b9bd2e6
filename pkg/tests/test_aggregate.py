import itertools

import numpy as np
import pytest

from zoorank.aggregate import (
    Permutation,
    ScoreVector,
    copeland_aggregate,
    dsc_order,
    ranks_from_scores,
)
from zoorank.errors import ShapeError


def test_score_vector_rejects_bad_shapes():
    with pytest.raises(ShapeError):
        ScoreVector(np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        ScoreVector(np.array([1.0, np.inf]))


def test_permutation_rejects_non_permutations():
    with pytest.raises(ShapeError):
        Permutation(np.array([0, 0, 2]))


def test_dsc_order_basic():
    assert dsc_order(np.array([0.1, 0.9, 0.5])).order.tolist() == [1, 2, 0]


def test_dsc_order_tie_break_by_index():
    assert dsc_order(np.array([0.5, 0.5])).order.tolist() == [0, 1]


def test_dsc_order_singleton():
    assert dsc_order(np.array([3.0])).order.tolist() == [0]


def test_ranks_from_scores_inverts_order():
    scores = np.array([0.3, 0.9, 0.1, 0.5])
    ranks = ranks_from_scores(scores)
    assert ranks.tolist() == [2, 0, 3, 1]


def test_copeland_three_vector_fixture():
    vectors = [
        np.array([0.9, 0.5, 0.1]),
        np.array([0.8, 0.1, 0.4]),
        np.array([0.4, 0.9, 0.2]),
    ]
    assert copeland_aggregate(vectors).values.tolist() == [2.0, 1.0, 0.0]


def test_copeland_majority_tie():
    vectors = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    assert copeland_aggregate(vectors).values.tolist() == [0.5, 0.5]


def test_copeland_single_input_preserves_order():
    v = np.array([0.2, 0.9, 0.5, 0.1])
    agg = copeland_aggregate([v])
    assert dsc_order(agg).order.tolist() == dsc_order(v).order.tolist()


def test_copeland_rejects_empty_and_mismatched():
    with pytest.raises(ShapeError):
        copeland_aggregate([])
    with pytest.raises(ShapeError):
        copeland_aggregate([np.zeros(3), np.zeros(4)])


def copeland_oracle(vectors):
    """Brute-force pairwise-majority count, pure python."""
    m = len(vectors[0])
    wins = [[0] * m for _ in range(m)]
    for a in range(m):
        for b in range(m):
            for v in vectors:
                if v[a] > v[b]:
                    wins[a][b] += 1
    scores = []
    for a in range(m):
        s = 0.0
        for b in range(m):
            if a == b:
                continue
            if wins[a][b] > wins[b][a]:
                s += 1.0
            elif wins[a][b] == wins[b][a]:
                s += 0.5
        scores.append(s)
    return scores


def weak_orders(m):
    """All rank vectors over m items whose values form 0..k (every weak
    order appears exactly once)."""
    out = []
    for t in itertools.product(range(m), repeat=m):
        vals = set(t)
        if vals == set(range(len(vals))):
            out.append(np.array(t, dtype=np.float64))
    return out


@pytest.mark.parametrize("m,a", [(2, 1), (2, 2), (2, 3), (3, 1), (3, 2), (3, 3),
                                 (4, 1), (4, 2), (4, 3)])
def test_copeland_exhaustive_oracle_equivalence(m, a):
    orders = weak_orders(m)
    for combo in itertools.product(orders, repeat=a):
        got = copeland_aggregate(list(combo)).values
        want = copeland_oracle(list(combo))
        assert got.tolist() == want, f"mismatch on {combo}"


def test_copeland_random_oracle_equivalence():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        m = int(rng.integers(2, 11))
        a = int(rng.integers(1, 6))
        vectors = [rng.standard_normal(m) for _ in range(a)]
        got = copeland_aggregate(vectors).values
        want = copeland_oracle(vectors)
        assert got.tolist() == want
