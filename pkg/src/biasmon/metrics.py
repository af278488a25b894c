"""Binary-classification metrics for one slice of scored records.

Undefined values (zero denominators, single-class AUROC) are returned as
``None`` and never coerced to 0 or NaN.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .stats import midranks

__all__ = [
    "METRIC_NAMES",
    "THRESHOLD_GRID",
    "ConfusionCounts",
    "MetricSet",
    "ThresholdChoice",
    "auroc",
    "auroc_bruteforce",
    "confusion",
    "evaluate",
    "f1_score",
    "metric_set",
    "metric_value",
    "prevalence",
    "select_threshold",
    "uncertainty",
]

METRIC_NAMES = ("ppv", "sensitivity", "specificity", "f1", "accuracy", "auroc", "prevalence")

#: Candidate operating thresholds 0.01, 0.02, ..., 1.00.
THRESHOLD_GRID = np.arange(1, 101) / 100.0


def _ratio(num, den):
    return None if den == 0 else num / den


def _as_arrays(scores, labels):
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if scores.size == 0:
        raise ValueError("empty slice")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("every record in the slice needs a 0/1 label")
    return scores, labels.astype(int)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def n_pos(self) -> int:
        return self.tp + self.fn

    @property
    def n_neg(self) -> int:
        return self.tn + self.fp


def confusion(scores, labels, threshold: float) -> ConfusionCounts:
    """Counts with "predicted positive" meaning ``score >= threshold``."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside (0, 1]")
    scores, labels = _as_arrays(scores, labels)
    pred = scores >= threshold
    pos = labels == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    tn = int(scores.size - tp - fp - fn)
    return ConfusionCounts(tp, fp, tn, fn)


def f1_score(ppv: float | None, sensitivity: float | None) -> float | None:
    """Harmonic mean of PPV and sensitivity; ``None`` if either is undefined."""
    if ppv is None or sensitivity is None:
        return None
    if ppv + sensitivity == 0:
        return 0.0
    return 2.0 * ppv * sensitivity / (ppv + sensitivity)


def prevalence(n_pos: int, n_neg: int) -> float:
    total = n_pos + n_neg
    if total <= 0:
        raise ValueError("prevalence undefined for an empty population")
    return n_pos / total


def auroc(scores, labels) -> float | None:
    """Rank-based AUROC (Mann-Whitney U / (n_pos * n_neg)), ties counted as 1/2.

    Returns ``None`` when the slice holds a single class.
    """
    scores, labels = _as_arrays(scores, labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = midranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auroc_bruteforce(scores, labels) -> float | None:
    """O(n_pos * n_neg) pair-counting AUROC; reference for :func:`auroc`."""
    scores, labels = _as_arrays(scores, labels)
    p = scores[labels == 1]
    n = scores[labels == 0]
    if p.size == 0 or n.size == 0:
        return None
    diff = p[:, None] - n[None, :]
    wins = np.count_nonzero(diff > 0) + 0.5 * np.count_nonzero(diff == 0)
    return float(wins / (p.size * n.size))


def uncertainty(replicates: Sequence[Sequence[float]], ids: Sequence[str] | None = None) -> float:
    """Mean over records of the sample standard deviation of replicate scores."""
    if len(replicates) == 0:
        raise ValueError("empty slice")
    per_record = []
    for i, reps in enumerate(replicates):
        if reps is None or len(reps) < 2:
            name = ids[i] if ids is not None else i
            raise ValueError(f"record {name} has fewer than 2 replicate scores")
        per_record.append(np.std(np.asarray(reps, dtype=float), ddof=1))
    return float(np.mean(per_record))


@dataclass(frozen=True)
class MetricSet:
    ppv: float | None
    sensitivity: float | None
    specificity: float | None
    f1: float | None
    accuracy: float | None
    auroc: float | None
    prevalence: float | None
    uncertainty: float | None
    n_pos: int
    n_neg: int
    counts: ConfusionCounts | None = None

    def get(self, name: str) -> float | None:
        if name not in METRIC_NAMES and name != "uncertainty":
            raise KeyError(f"unknown metric {name!r}")
        return getattr(self, name)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["counts"] = None if self.counts is None else asdict(self.counts)
        return d


def metric_set(scores, labels, threshold: float, replicates=None) -> MetricSet:
    """Full metric vector at a fixed threshold."""
    scores, labels = _as_arrays(scores, labels)
    c = confusion(scores, labels, threshold)
    ppv = _ratio(c.tp, c.tp + c.fp)
    sens = _ratio(c.tp, c.tp + c.fn)
    return MetricSet(
        ppv=ppv,
        sensitivity=sens,
        specificity=_ratio(c.tn, c.tn + c.fp),
        f1=f1_score(ppv, sens),
        accuracy=_ratio(c.tp + c.tn, c.total),
        auroc=auroc(scores, labels),
        prevalence=prevalence(c.n_pos, c.n_neg),
        uncertainty=None if replicates is None else uncertainty(replicates),
        n_pos=c.n_pos,
        n_neg=c.n_neg,
        counts=c,
    )


def metric_value(name: str, scores, labels, threshold: float) -> float | None:
    """A single metric, cheaper than building a whole :class:`MetricSet`."""
    if name == "auroc":
        return auroc(scores, labels)
    c = confusion(scores, labels, threshold)
    if name == "sensitivity":
        return _ratio(c.tp, c.tp + c.fn)
    if name == "ppv":
        return _ratio(c.tp, c.tp + c.fp)
    if name == "specificity":
        return _ratio(c.tn, c.tn + c.fp)
    if name == "accuracy":
        return _ratio(c.tp + c.tn, c.total)
    if name == "f1":
        return f1_score(_ratio(c.tp, c.tp + c.fp), _ratio(c.tp, c.tp + c.fn))
    if name == "prevalence":
        return prevalence(c.n_pos, c.n_neg)
    raise KeyError(f"unknown metric {name!r}")


def evaluate(dataset, threshold: float) -> MetricSet:
    """MetricSet for the labelled records of an ingest ``Dataset``."""
    data = dataset.labeled()
    reps = None
    if data.has_replicates():
        reps = [r.replicate_scores for r in data.records]
    return metric_set(data.scores, data.labels, threshold, reps)


@dataclass(frozen=True)
class ThresholdChoice:
    threshold: float
    achieved_f1: float


def _f1_over_grid(scores, labels, grid):
    pos = np.sort(scores[labels == 1])
    neg = np.sort(scores[labels == 0])
    tp = pos.size - np.searchsorted(pos, grid, side="left")
    fp = neg.size - np.searchsorted(neg, grid, side="left")
    fn = pos.size - tp
    den = 2 * tp + fp + fn
    return np.where(den > 0, 2 * tp / np.maximum(den, 1), 0.0)


def select_threshold(scores, labels, grid=THRESHOLD_GRID) -> ThresholdChoice:
    """Grid threshold with the highest F1; ties go to the smallest threshold."""
    scores, labels = _as_arrays(scores, labels)
    if not (labels == 1).any():
        raise ValueError("threshold undefined: no positives")
    grid = np.asarray(grid, dtype=float)
    f1 = _f1_over_grid(scores, labels, grid)
    best = int(np.argmax(f1))  # first maximum == smallest threshold
    return ThresholdChoice(threshold=round(float(grid[best]), 10), achieved_f1=float(f1[best]))
