"""
Evaluation metrics: power, false discovery proportion and Jaccard stability
"""
import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from utils.errors import EmptyTruth, TooFewTrials

SUMMARY_COLUMNS = ["method", "q", "power", "power_se", "fdr", "fdr_se", "stability", "n_trials"]


@dataclass
class TrialOutcome:
    selected: List[int]
    truth: Optional[List[int]]
    trial_id: int
    method_name: str
    q: float


@dataclass
class MetricSummary:
    method: str
    q: float
    power: float
    power_se: float
    fdr: float
    fdr_se: float
    stability: float
    n_trials: int
    se_defined: bool = True
    extra: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        row = {k: getattr(self, k) for k in SUMMARY_COLUMNS}
        row["se_defined"] = self.se_defined
        row.update(self.extra)
        return row


def fdp(selected: Iterable[int], truth: Iterable[int]) -> float:
    selected, truth = set(selected), set(truth)
    return len(selected - truth) / max(1, len(selected))


def power(selected: Iterable[int], truth: Iterable[int]) -> float:
    selected, truth = set(selected), set(truth)
    if not truth:
        raise EmptyTruth("power is undefined for an empty truth set")
    return len(selected & truth) / len(truth)


def jaccard_stability(selections: Sequence[Iterable[int]]) -> float:
    """Mean pairwise Jaccard similarity; two empty sets count as identical"""
    sets = [set(s) for s in selections]
    if len(sets) < 2:
        raise TooFewTrials(f"stability needs at least 2 selections, got {len(sets)}")
    scores = []
    for a, b in itertools.combinations(sets, 2):
        union = a | b
        scores.append(1.0 if not union else len(a & b) / len(union))
    return float(np.mean(scores))


def _mean_se(values: List[float]):
    if not values:
        return float("nan"), float("nan")
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def aggregate(outcomes: Sequence[TrialOutcome]) -> MetricSummary:
    """Means, standard errors and stability over one (method, q) group"""
    if not outcomes:
        raise TooFewTrials("no outcomes to aggregate")
    ordered = sorted(outcomes, key=lambda o: o.trial_id)
    with_truth = [o for o in ordered if o.truth]
    pw, pw_se = _mean_se([power(o.selected, o.truth) for o in with_truth])
    fd, fd_se = _mean_se([fdp(o.selected, o.truth) for o in with_truth])
    stability = jaccard_stability([o.selected for o in ordered]) if len(ordered) > 1 else float("nan")
    return MetricSummary(
        method=ordered[0].method_name,
        q=ordered[0].q,
        power=pw,
        power_se=pw_se,
        fdr=fd,
        fdr_se=fd_se,
        stability=stability,
        n_trials=len(ordered),
        se_defined=len(ordered) > 1,
    )


def aggregate_by_group(outcomes: Sequence[TrialOutcome]) -> List[MetricSummary]:
    groups = {}
    for o in outcomes:
        groups.setdefault((o.method_name, o.q), []).append(o)
    return [aggregate(groups[key]) for key in sorted(groups)]


def summaries_frame(summaries: Sequence[MetricSummary]) -> pd.DataFrame:
    rows = [s.to_row() for s in summaries]
    frame = pd.DataFrame(rows)
    if frame.empty:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)
    return frame


def outcomes_frame(outcomes: Sequence[TrialOutcome]) -> pd.DataFrame:
    rows = []
    for o in sorted(outcomes, key=lambda o: (o.method_name, o.q, o.trial_id)):
        row = asdict(o)
        row["selected"] = ";".join(str(j + 1) for j in sorted(o.selected))
        row["n_selected"] = len(o.selected)
        row["power"] = power(o.selected, o.truth) if o.truth else float("nan")
        row["fdp"] = fdp(o.selected, o.truth) if o.truth else float("nan")
        del row["truth"]
        rows.append(row)
    return pd.DataFrame(rows)
