"""
Knockoff statistics, the knockoff(+) threshold and the resulting selection
"""
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np

from utils.errors import InvalidConfig, LengthMismatch, NonFiniteInput


@dataclass
class KnockoffStats:
    w: np.ndarray
    q: float
    offset: int = 1

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if not np.all(np.isfinite(self.w)):
            raise NonFiniteInput("knockoff statistics contain NaN or Inf")
        if not 0.0 < self.q <= 1.0:
            raise InvalidConfig(f"q must lie in (0, 1], got {self.q}")
        if self.offset not in (0, 1):
            raise InvalidConfig(f"offset must be 0 or 1, got {self.offset}")


@dataclass
class SelectionResult:
    threshold: float
    selected: np.ndarray
    stats: KnockoffStats

    def to_json(self, feature_names: Optional[List[str]] = None) -> Dict[str, Any]:
        payload = {
            "w": self.stats.w.tolist(),
            "tau": self.threshold if np.isfinite(self.threshold) else None,
            "selected": [int(j) + 1 for j in self.selected],
            "q": self.stats.q,
            "offset": self.stats.offset,
        }
        if feature_names is not None:
            payload["selected_names"] = [feature_names[j] for j in self.selected]
        return payload


def knockoff_stats(scores, p: int) -> np.ndarray:
    """W_j = S_j - S_{j+p}"""
    s = np.asarray(getattr(scores, "s_hat", scores), dtype=np.float64)
    if s.ndim != 1 or s.shape[0] != 2 * p:
        raise LengthMismatch(f"expected {2 * p} scores, got shape {s.shape}")
    return s[:p] - s[p:]


def knockoff_threshold(stats: KnockoffStats) -> float:
    """
    Smallest t among the nonzero |W_j| with
    (offset + #{W_j <= -t}) / max(1, #{W_j >= t}) <= q, or +inf if none qualifies.
    """
    w = stats.w
    candidates = np.unique(np.abs(w[w != 0]))
    if candidates.size == 0:
        return float("inf")
    ordered = np.sort(w)
    n_neg = np.searchsorted(ordered, -candidates, side="right")
    n_pos = w.size - np.searchsorted(ordered, candidates, side="left")
    ratio = (stats.offset + n_neg) / np.maximum(1, n_pos)
    ok = np.flatnonzero(ratio <= stats.q)
    return float(candidates[ok[0]]) if ok.size else float("inf")


def select(stats: KnockoffStats) -> SelectionResult:
    tau = knockoff_threshold(stats)
    return SelectionResult(threshold=tau, selected=np.flatnonzero(stats.w >= tau), stats=stats)


def select_from_scores(scores, p: int, q: float, offset: int = 1) -> SelectionResult:
    return select(KnockoffStats(w=knockoff_stats(scores, p), q=q, offset=offset))
