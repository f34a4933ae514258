import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from shadowloss.errors import EmptyMiningError
from shadowloss.losses import MarginConfig
from shadowloss.mining import (
    EmbeddingBatch,
    enumerate_all_valid,
    mine_semi_hard,
    pairwise_distances,
)
from shadowloss.numerics import RandomSource


def brute_band(E, labels, a, p, alpha):
    """Negatives of (a, p) strictly inside the semi-hard band, by direct loops."""
    dap = oracles.squared_distance(E[a], E[p])
    out = []
    for n in range(len(labels)):
        if labels[n] == labels[a]:
            continue
        dan = oracles.squared_distance(E[a], E[n])
        if dap < dan < dap + alpha:
            out.append((dan, n))
    return sorted(out)


def test_pairwise_examples():
    d = pairwise_distances(EmbeddingBatch(np.array([[0.0, 0.0], [3.0, 4.0], [3.0, 4.0]]), np.array([0, 1, 1])))
    assert d[0, 1] == d[1, 0] == 25
    assert d[1, 2] == 0
    assert np.all(np.diag(d) == 0)


def test_pairwise_symmetric(rng):
    b = EmbeddingBatch(rng.gaussian(0, 3, size=(9, 5)), np.arange(9) % 3)
    d = pairwise_distances(b)
    assert np.array_equal(d, d.T)
    assert np.all(d >= 0)


def test_semi_hard_example():
    # d(a,p) = 1, d(a,n) = 1.5
    E = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, np.sqrt(1.5)]])
    rep = mine_semi_hard(EmbeddingBatch(E, np.array([0, 0, 1])), MarginConfig(1.0))
    # all ordered pairs are mined; the (0, 1) pair is the semi-hard one, (1, 0) falls back
    a0 = [t for t in rep.triplets if t.anchor == 0]
    assert a0 == [(0, 1, 2)]
    assert rep.counts.semi_hard == 1 and rep.counts.fallback_hard == 1


def test_fallback_when_band_empty():
    # d(a,p) = 1, only negative at d(a,n) = 5 (outside the band for alpha = 1)
    E = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 2.0]])
    rep = mine_semi_hard(EmbeddingBatch(E, np.array([0, 0, 1])), MarginConfig(1.0))
    a0 = [t for t in rep.triplets if t.anchor == 0]
    assert a0 == [(0, 1, 2)]
    # one fallback per ordered pair: (0, 1) and (1, 0)
    assert rep.counts.fallback_hard == 2 and rep.counts.semi_hard == 0


def test_single_class_is_empty_mining_error():
    with pytest.raises(EmptyMiningError):
        mine_semi_hard(EmbeddingBatch(np.eye(3), np.zeros(3, dtype=int)))
    with pytest.raises(EmptyMiningError):
        mine_semi_hard(EmbeddingBatch(np.eye(3), np.arange(3)))


def test_enumerate_examples():
    b = EmbeddingBatch(np.eye(3), np.array([0, 0, 1]))
    assert enumerate_all_valid(b) == [(0, 1, 2), (1, 0, 2)]
    assert enumerate_all_valid(EmbeddingBatch(np.eye(3), np.zeros(3, dtype=int))) == []
    assert enumerate_all_valid(EmbeddingBatch(np.eye(2), np.array([0, 1]))) == []


def test_hard_mode_picks_closest_negative(rng):
    b = EmbeddingBatch(rng.gaussian(0, 1, size=(10, 3)), np.arange(10) % 3)
    d = pairwise_distances(b)
    rep = mine_semi_hard(b, mode="hard")
    for a, p, n in rep.triplets:
        neg = np.flatnonzero(b.labels != b.labels[a])
        assert d[a, n] == d[a, neg].min()
    assert rep.counts.fallback_hard == len(rep.triplets)


def test_tie_goes_to_lowest_index():
    # two band negatives at the same distance from the anchor
    E = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.2], [0.0, -1.2]])
    rep = mine_semi_hard(EmbeddingBatch(E, np.array([0, 0, 1, 1])), MarginConfig(1.0))
    assert [t for t in rep.triplets if t.anchor == 0] == [(0, 1, 2)]


def test_max_triplets_subsampling(rng):
    b = EmbeddingBatch(rng.gaussian(0, 1, size=(12, 4)), np.arange(12) % 3)
    full = mine_semi_hard(b)
    capped = mine_semi_hard(b, rng=RandomSource(3), max_triplets=5)
    assert len(capped.triplets) == 5
    assert set(capped.triplets) <= set(full.triplets)
    again = mine_semi_hard(b, rng=RandomSource(3), max_triplets=5)
    assert capped.triplets == again.triplets


def test_projection_metric_runs(rng):
    b = EmbeddingBatch(rng.gaussian(0, 1, size=(8, 4)), np.arange(8) % 2)
    rep = mine_semi_hard(b, metric="projection")
    assert len(rep.triplets) == 8 * 3
    assert all(b.labels[a] == b.labels[p] != b.labels[n] for a, p, n in rep.triplets)


@settings(max_examples=150, deadline=None)
@given(st.integers(3, 12), st.integers(2, 4), st.floats(0.05, 3.0), st.integers(0, 2**31))
def test_soundness_and_completeness(size, n_classes, alpha, seed):
    r = RandomSource(seed)
    labels = r.integers(0, n_classes, size=size)
    E = r.gaussian(0, 1, size=(size, 3))
    batch = EmbeddingBatch(E, labels)
    cfg = MarginConfig(alpha)
    valid_pairs = [(a, p) for a in range(size) for p in range(size) if a != p and labels[a] == labels[p]]
    has_neg = lambda a: np.any(labels != labels[a])
    if not any(has_neg(a) for a, _ in valid_pairs):
        with pytest.raises(EmptyMiningError):
            mine_semi_hard(batch, cfg)
        return
    rep = mine_semi_hard(batch, cfg)
    assert len(rep.triplets) <= len(valid_pairs)
    assert rep.counts.semi_hard + rep.counts.fallback_hard == len(rep.triplets)
    semi = 0
    for a, p, n in rep.triplets:
        band = brute_band(E, labels, a, p, alpha)
        if band:
            semi += 1
            # band non-empty: selection inside the band with the smallest distance, then lowest index
            assert n == band[0][1]
    assert semi == rep.counts.semi_hard
    # every satisfiable pair produced a triplet
    expected = {(a, p) for a, p in valid_pairs if has_neg(a)}
    assert {(t.anchor, t.positive) for t in rep.triplets} == expected


def test_mining_is_deterministic(rng):
    b = EmbeddingBatch(rng.gaussian(0, 1, size=(12, 4)), np.arange(12) % 4)
    assert mine_semi_hard(b) == mine_semi_hard(b)
