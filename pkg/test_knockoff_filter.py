#!/usr/bin/env python3
"""
Tests for knockoff statistics, the knockoff(+) threshold and selection
"""
import sys

import numpy as np
import pytest

from utils.errors import InvalidConfig, LengthMismatch, NonFiniteInput
from utils.grip import PersistenceScores
from utils.knockoff_filter import (
    KnockoffStats,
    knockoff_stats,
    knockoff_threshold,
    select,
    select_from_scores,
)


def _brute_force_threshold(w, q, offset):
    for t in np.sort(np.unique(np.abs(w[w != 0]))):
        if (offset + np.sum(w <= -t)) / max(1, np.sum(w >= t)) <= q:
            return float(t)
    return float("inf")


def test_stats_from_scores():
    s = np.array([2.0, 0.0, 1.0, 0.5, 0.0, 1.0])
    np.testing.assert_array_equal(knockoff_stats(s, 3), [1.5, 0.0, 0.0])
    scores = PersistenceScores(s_hat=s, snapshots_used=1, regimes=[])
    np.testing.assert_array_equal(knockoff_stats(scores, 3), [1.5, 0.0, 0.0])


def test_symmetric_scores_give_zero_stats():
    s = np.tile(np.arange(4.0), 2)
    np.testing.assert_array_equal(knockoff_stats(s, 4), 0.0)


def test_stats_length_checked():
    with pytest.raises(LengthMismatch):
        knockoff_stats(np.ones(5), 3)


def test_worked_example():
    result = select(KnockoffStats(w=np.array([3.0, 2.0, 1.0, -1.0]), q=0.5, offset=1))
    assert result.threshold == 2.0
    assert result.selected.tolist() == [0, 1]


def test_offset_zero_all_positive_selects_everything():
    w = np.array([0.3, 1.2, 0.7])
    result = select(KnockoffStats(w=w, q=0.05, offset=0))
    assert result.threshold == pytest.approx(0.3)
    assert result.selected.tolist() == [0, 1, 2]


def test_zero_statistics_select_nothing():
    result = select(KnockoffStats(w=np.zeros(6), q=0.2))
    assert result.threshold == float("inf")
    assert result.selected.size == 0
    assert result.to_json()["tau"] is None


def test_duplicate_magnitudes():
    result = select(KnockoffStats(w=np.array([2.0, 2.0, -2.0]), q=1.0, offset=1))
    assert result.threshold == 2.0
    assert result.selected.tolist() == [0, 1]


def test_threshold_matches_brute_force():
    rng = np.random.default_rng(0)
    for trial in range(1000):
        p = int(rng.integers(1, 51))
        w = rng.integers(-6, 7, size=p) * rng.choice([0.5, 1.0, 1.7], size=p)
        if trial % 3 == 0:
            w = rng.standard_normal(p) + 0.8
        q = float(rng.choice([0.05, 0.1, 0.2, 0.5, 1.0]))
        offset = int(rng.integers(0, 2))
        stats = KnockoffStats(w=w, q=q, offset=offset)
        assert knockoff_threshold(stats) == _brute_force_threshold(stats.w, q, offset)


def test_selection_grows_with_q():
    rng = np.random.default_rng(1)
    w = np.concatenate([rng.exponential(2.0, 30), rng.standard_normal(70)])
    previous = set()
    for q in (0.01, 0.05, 0.1, 0.2, 0.5, 1.0):
        chosen = set(select(KnockoffStats(w=w, q=q)).selected.tolist())
        assert previous <= chosen
        previous = chosen


def test_stats_validation():
    with pytest.raises(InvalidConfig):
        KnockoffStats(w=np.ones(3), q=0.0)
    with pytest.raises(InvalidConfig):
        KnockoffStats(w=np.ones(3), q=0.1, offset=2)
    with pytest.raises(NonFiniteInput):
        KnockoffStats(w=np.array([1.0, np.nan]), q=0.1)


def test_selection_json_is_one_based():
    s = np.array([3.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0])
    result = select_from_scores(s, 4, q=0.5, offset=1)
    payload = result.to_json(["a", "b", "c", "d"])
    assert payload["selected"] == [1, 2]
    assert payload["selected_names"] == ["a", "b"]
    assert payload["tau"] == 2.0


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
