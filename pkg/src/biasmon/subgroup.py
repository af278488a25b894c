"""Subgroup partitioning, per-subgroup metrics and disparity testing."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import stats
from .ingest import UNKNOWN, DataError, Dataset
from .metrics import (
    ConfusionCounts,
    MetricSet,
    _ratio,
    auroc,
    f1_score,
    metric_set,
    prevalence,
    uncertainty,
)

__all__ = [
    "AssociationReport",
    "AttributeAssociation",
    "SubgroupKey",
    "SubgroupReport",
    "analyze",
    "association_scan",
    "disparity_tests",
    "partition",
    "prevalence_correlation",
]

log = logging.getLogger(__name__)

#: Subgroups with fewer test positives than this are flagged as unreliable.
MIN_POSITIVES = 10

SubgroupKey = tuple  # tuple of (attribute, category) pairs, length 1 or 2


def key_label(key: SubgroupKey) -> str:
    return " & ".join(f"{a}={c}" for a, c in key)


def _check_attrs(dataset: Dataset, attrs: Sequence[str]) -> tuple[str, ...]:
    attrs = (attrs,) if isinstance(attrs, str) else tuple(attrs)
    if not 1 <= len(attrs) <= 2:
        raise ValueError("partition by one attribute or a pair of attributes")
    if len(set(attrs)) != len(attrs):
        raise ValueError("joint attributes must be distinct")
    for a in attrs:
        if a not in dataset.attribute_schema:
            raise DataError(f"unknown attribute {a!r}")
    return attrs


def _key_order(dataset: Dataset, attrs):
    pos = [{c: i for i, c in enumerate(dataset.attribute_schema[a])} for a in attrs]
    return lambda key: tuple(p.get(c, len(p)) for p, (_, c) in zip(pos, key))


def partition(dataset: Dataset, attrs: Sequence[str] | str) -> dict[SubgroupKey, np.ndarray]:
    """Map each observed subgroup key to the record indices falling in it.

    Keys are ordered by the schema's category order.  Missing values were
    already loaded as ``"Unknown"`` so every record lands in one subgroup.
    """
    attrs = _check_attrs(dataset, attrs)
    cols = [dataset.column(a) for a in attrs]
    groups: dict[SubgroupKey, list[int]] = {}
    for i in range(len(dataset)):
        key = tuple((a, str(col[i] if col[i] is not None else UNKNOWN)) for a, col in zip(attrs, cols))
        groups.setdefault(key, []).append(i)
    order = _key_order(dataset, attrs)
    return {k: np.array(groups[k], dtype=int) for k in sorted(groups, key=order)}


@dataclass
class SubgroupReport:
    key: SubgroupKey
    n_pos: int
    n_neg: int
    pooled: MetricSet
    folds: list[MetricSet | None]
    flags: list[str] = field(default_factory=list)

    @property
    def label(self) -> str:
        return key_label(self.key)

    def fold_values(self, metric: str) -> list[float]:
        """Defined fold-wise values of ``metric`` (folds without the subgroup are skipped)."""
        return [v for m in self.folds if m is not None and (v := m.get(metric)) is not None]

    def summary(self, metric: str) -> tuple[float | None, float | None]:
        """Mean and sample std of the fold-wise values."""
        vals = self.fold_values(metric)
        if not vals:
            return None, None
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else None
        return float(np.mean(vals)), std

    def to_dict(self) -> dict:
        return {
            "key": [[a, c] for a, c in self.key],
            "label": self.label,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "pooled": self.pooled.to_dict(),
            "folds": [None if m is None else m.to_dict() for m in self.folds],
            "flags": list(self.flags),
        }


def _slice_metrics(ds: Dataset, idx: np.ndarray, threshold: float) -> MetricSet:
    sub = ds.subset(idx)
    reps = [r.replicate_scores for r in sub.records] if sub.has_replicates() else None
    return metric_set(sub.scores, sub.labels, threshold, reps)


def analyze(
    folds: Sequence[Dataset] | Dataset,
    attrs: Sequence[str] | str,
    threshold: float | Sequence[float],
    min_positives: int = MIN_POSITIVES,
) -> list[SubgroupReport]:
    """Evaluate every subgroup on each fold and on all folds pooled.

    ``threshold`` may be a single value or one per fold.  Pooled confusion
    counts are the sum of the fold counts; pooled AUROC and uncertainty are
    computed on the union of the fold records.
    """
    if isinstance(folds, Dataset):
        folds = [folds]
    folds = [f.labeled() for f in folds]
    if not folds:
        raise ValueError("no folds given")
    thresholds = [threshold] * len(folds) if np.isscalar(threshold) else list(threshold)
    if len(thresholds) != len(folds):
        raise ValueError("one threshold per fold required")

    per_fold = [partition(f, attrs) for f in folds]
    order = _key_order(folds[0], _check_attrs(folds[0], attrs))
    keys = sorted({k for p in per_fold for k in p}, key=order)
    reports = []
    for key in keys:
        fold_metrics: list[MetricSet | None] = []
        counts = ConfusionCounts(0, 0, 0, 0)
        scores, labels, reps = [], [], []
        for f, part, t in zip(folds, per_fold, thresholds):
            idx = part.get(key)
            if idx is None:
                fold_metrics.append(None)
                continue
            m = _slice_metrics(f, idx, t)
            fold_metrics.append(m)
            counts = counts + m.counts
            scores.append(f.scores[idx])
            labels.append(f.labels[idx])
            if m.uncertainty is not None:
                reps.extend(f.records[i].replicate_scores for i in idx)
        pooled = _pooled(counts, np.concatenate(scores), np.concatenate(labels), reps,
                         fold_metrics, thresholds)
        report = SubgroupReport(key, counts.n_pos, counts.n_neg, pooled, fold_metrics)
        if counts.n_pos == 0:
            report.flags.append("no positive samples")
        elif counts.n_pos < min_positives:
            report.flags.append("unreliable estimate")
        reports.append(report)
    return reports


def _pooled(counts, scores, labels, reps, fold_metrics, thresholds) -> MetricSet:
    if len(set(thresholds)) == 1:
        m = metric_set(scores, labels, thresholds[0], reps if reps and len(reps) == len(scores) else None)
        assert m.counts == counts
        return m
    c = counts
    ppv, sens = _ratio(c.tp, c.tp + c.fp), _ratio(c.tp, c.tp + c.fn)
    return MetricSet(
        ppv=ppv, sensitivity=sens, specificity=_ratio(c.tn, c.tn + c.fp), f1=f1_score(ppv, sens),
        accuracy=_ratio(c.tp + c.tn, c.total), auroc=auroc(scores, labels),
        prevalence=prevalence(c.n_pos, c.n_neg),
        uncertainty=uncertainty(reps) if reps and len(reps) == len(scores) else None,
        n_pos=c.n_pos, n_neg=c.n_neg, counts=c,
    )


def disparity_tests(reports: Sequence[SubgroupReport], metric: str = "sensitivity",
                    bonferroni: bool = False) -> list[stats.TestResult]:
    """Compare fold-wise ``metric`` values across subgroups.

    Two subgroups: Mann-Whitney U.  More: Kruskal-Wallis, followed by Dunn's
    pairwise tests only when Kruskal-Wallis is significant.  Significant
    pairwise results add a flag to the lower-scoring subgroup's report.
    """
    usable = [r for r in reports if r.fold_values(metric)]
    if len(usable) < 2:
        warnings.warn(f"fewer than 2 subgroups with defined {metric}; no disparity test", RuntimeWarning,
                      stacklevel=2)
        return []
    samples = [r.fold_values(metric) for r in usable]
    names = [r.label for r in usable]
    if len(usable) == 2:
        res = stats.mann_whitney_u(samples[0], samples[1])
        res.details.update(metric=metric, group_a=names[0], group_b=names[1])
        if res.significant:
            _flag_lower(usable[0], usable[1], samples[0], samples[1], metric, res.p_value)
        return [res]
    kw = stats.kruskal_wallis(samples)
    kw.details.update(metric=metric, groups=names)
    out = [kw]
    if not kw.significant:
        kw.details["posthoc"] = "posthoc not run"
        return out
    kw.details["posthoc"] = "dunn"
    for res in stats.dunn_posthoc(samples, bonferroni=bonferroni, names=names):
        res.details["metric"] = metric
        out.append(res)
        if res.significant:
            a = usable[names.index(res.details["group_a"])]
            b = usable[names.index(res.details["group_b"])]
            _flag_lower(a, b, a.fold_values(metric), b.fold_values(metric), metric, res.p_value)
    return out


def _flag_lower(a, b, va, vb, metric, p):
    lower, higher = (a, b) if np.mean(va) < np.mean(vb) else (b, a)
    lower.flags.append(f"significantly lower {metric} than {higher.label} (p={p:.4g})")


@dataclass(frozen=True)
class AttributeAssociation:
    target: stats.TestResult | None
    prediction: stats.TestResult | None
    spearman_target: stats.TestResult | None = None
    spearman_prediction: stats.TestResult | None = None
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        conv = lambda r: None if r is None else r.to_dict()  # noqa: E731
        return {
            "target": conv(self.target),
            "prediction": conv(self.prediction),
            "spearman_target": conv(self.spearman_target),
            "spearman_prediction": conv(self.spearman_prediction),
            "warnings": list(self.warnings),
        }


@dataclass
class AssociationReport:
    entries: dict[str, AttributeAssociation]

    def to_dict(self) -> dict:
        return {k: v.to_dict() for k, v in self.entries.items()}


def _contingency(categories, col, binary):
    table = np.zeros((len(categories), 2))
    pos = {c: i for i, c in enumerate(categories)}
    for c, y in zip(col, binary):
        table[pos[c], int(y)] += 1
    return table


def association_scan(dataset: Dataset, predictions, attributes: Sequence[str] | None = None) -> AssociationReport:
    """Cramér's V of each attribute against the target and the predicted label.

    ``predictions`` are binary labels for ``dataset.labeled()`` (same order).
    Ordinal attributes also get Spearman correlations of category rank.
    """
    ds = dataset.labeled()
    predictions = np.asarray(predictions).astype(int).ravel()
    if predictions.size != len(ds):
        raise ValueError("one prediction per labelled record required")
    attributes = list(attributes) if attributes is not None else list(ds.attributes)
    entries = {}
    for attr in attributes:
        cats = ds.attribute_schema[attr]
        col = ds.column(attr)
        notes = []
        results = {}
        for name, y in (("target", ds.labels), ("prediction", predictions)):
            try:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always")
                    results[name] = stats.cramers_v(_contingency(cats, col, y))
                notes.extend(f"{name}: {w.message}" for w in caught)
            except ValueError as e:
                results[name] = None
                notes.append(f"{name}: {e}")
                log.warning("association %s vs %s skipped: %s", attr, name, e)
            if attr in ds.ordinal:
                known = col != UNKNOWN
                rank = np.array([cats.index(c) for c in col[known]], dtype=float)
                try:
                    results["spearman_" + name] = stats.spearman(rank, y[known])
                except ValueError as e:
                    results["spearman_" + name] = None
                    notes.append(f"spearman {name}: {e}")
        entries[attr] = AttributeAssociation(
            results["target"], results["prediction"],
            results.get("spearman_target"), results.get("spearman_prediction"), tuple(notes),
        )
    return AssociationReport(entries)


def prevalence_correlation(reports: Sequence[SubgroupReport], metric: str) -> stats.TestResult:
    """Pearson correlation between subgroup prevalence and pooled ``metric``."""
    pts = [(r.pooled.prevalence, r.pooled.get(metric)) for r in reports]
    pts = [(p, v) for p, v in pts if p is not None and v is not None]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 subgroups with defined {metric}, got {len(pts)}")
    x, y = zip(*pts)
    res = stats.pearson(x, y)
    res.details["metric"] = metric
    return res
