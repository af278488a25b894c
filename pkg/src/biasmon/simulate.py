"""Bootstrap batch streams with injected subgroup-proportion drift.

A scenario draws ``n_batches`` batches of ``batch_size`` records.  Batches
with index below ``onset`` follow the base attribute distribution (jittered
by ``flexibility``); from ``onset`` on, the proportion of ``shifted_group``
is moved by ``delta_p``.  Each batch is scored with one metric and the
resulting stream is fed to a CUSUM chart.
"""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .ingest import DataError, Dataset
from .metrics import metric_value
from .monitor import (
    K_GRID,
    AlarmEvaluation,
    Chart,
    CusumCalibration,
    calibrate,
    evaluate_alarms,
    run_chart,
    tune_k,
)

__all__ = [
    "DEFAULT_DELTA_GRID",
    "BatchComposition",
    "BatchPools",
    "DriftScenario",
    "MarginalDistribution",
    "ScenarioResult",
    "base_distribution",
    "batch_metrics",
    "calibrate_scenario",
    "compose_batch",
    "largest_remainder",
    "run_scenario",
    "sample_batch",
    "sweep_delta",
    "sweep_to_csv",
]

DEFAULT_DELTA_GRID = tuple(round(-0.3 + 0.05 * i, 2) for i in range(13))


@dataclass(frozen=True)
class MarginalDistribution:
    attribute: str
    categories: tuple[str, ...]
    proportions: np.ndarray
    prevalence: np.ndarray  # per-category positive rate

    def __post_init__(self):
        p = np.asarray(self.proportions, dtype=float)
        if p.shape != (len(self.categories),):
            raise ValueError("one proportion per category")
        if (p < 0).any() or (p > 1).any() or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("proportions must lie in [0,1] and sum to 1")
        object.__setattr__(self, "proportions", p)
        object.__setattr__(self, "prevalence", np.asarray(self.prevalence, dtype=float))

    def index(self, category: str) -> int:
        try:
            return self.categories.index(category)
        except ValueError:
            raise DataError(f"category {category!r} not in attribute {self.attribute!r}") from None


def base_distribution(dataset: Dataset, attribute: str) -> MarginalDistribution:
    """Empirical category proportions and per-category prevalence (labelled records)."""
    ds = dataset.labeled()
    if len(ds) == 0:
        raise DataError("dataset has no labelled records")
    col = ds.column(attribute)
    cats = tuple(c for c in ds.attribute_schema[attribute] if np.any(col == c))
    if not cats:
        raise DataError(f"attribute {attribute!r} has no categories")
    counts = np.array([np.sum(col == c) for c in cats], dtype=float)
    pos = np.array([np.sum((col == c) & (ds.labels == 1)) for c in cats], dtype=float)
    return MarginalDistribution(attribute, cats, counts / counts.sum(), pos / counts)


def largest_remainder(proportions, total: int) -> np.ndarray:
    """Integer counts proportional to ``proportions`` that sum to ``total``."""
    p = np.asarray(proportions, dtype=float)
    raw = p * total
    counts = np.floor(raw + 1e-9).astype(int)
    short = total - counts.sum()
    if short > 0:
        # stable sort: equal remainders go to the earlier category
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _round_half_up(x):
    return np.floor(np.asarray(x) + 0.5).astype(int)


@dataclass(frozen=True)
class BatchComposition:
    categories: tuple[str, ...]
    proportions: np.ndarray
    counts: np.ndarray
    positives: np.ndarray

    @property
    def negatives(self) -> np.ndarray:
        return self.counts - self.positives

    @property
    def size(self) -> int:
        return int(self.counts.sum())


def shifted_proportions(base: MarginalDistribution, group: str, delta_p: float) -> np.ndarray:
    """Move ``group`` to p_u + delta_p (clamped to [0,1]); rescale the others proportionally."""
    p = base.proportions.copy()
    u = base.index(group)
    new_u = min(1.0, max(0.0, p[u] + delta_p))
    rest = 1.0 - p[u]
    out = np.zeros_like(p)
    if rest <= 0:
        if new_u < 1.0 and len(p) > 1:
            raise ValueError(f"cannot move mass from {group!r}: other categories are empty")
        out[u] = 1.0
        return out
    out = p * ((1.0 - new_u) / rest)
    out[u] = new_u
    return out


def compose_batch(
    base: MarginalDistribution,
    flexibility: float,
    batch_size: int,
    rng: np.random.Generator,
    shift: tuple[str, float] | None = None,
) -> BatchComposition:
    """Per-category (positive, negative) counts for one batch."""
    if batch_size < 1:
        raise ValueError("batch size must be at least 1")
    p = base.proportions if shift is None else shifted_proportions(base, *shift)
    if flexibility > 0:
        p = np.clip(p + rng.uniform(-flexibility, flexibility, size=p.size), 0.0, None)
        if p.sum() <= 0:
            p = base.proportions
        p = p / p.sum()
    counts = largest_remainder(p, batch_size)
    pos = _round_half_up(counts * base.prevalence)
    pos = np.where((counts > 0) & (base.prevalence > 0), np.maximum(pos, 1), pos)
    pos = np.minimum(pos, counts)
    return BatchComposition(base.categories, p, counts, pos)


class BatchPools:
    """Record indices of a dataset split by (category, class)."""

    def __init__(self, dataset: Dataset, attribute: str):
        self.dataset = dataset.labeled()
        self.attribute = attribute
        col = self.dataset.column(attribute)
        labels = self.dataset.labels
        self.scores = self.dataset.scores
        self.labels = labels
        self._pools = {}
        for c in self.dataset.attribute_schema[attribute]:
            for y in (0, 1):
                self._pools[(c, y)] = np.flatnonzero((col == c) & (labels == y))

    def pool(self, category: str, cls: int) -> np.ndarray:
        return self._pools.get((category, cls), np.empty(0, dtype=int))


def sample_batch(pools: BatchPools, composition: BatchComposition, rng: np.random.Generator) -> np.ndarray:
    """Bootstrap (with replacement) record indices matching ``composition``."""
    parts = []
    for cat, n_pos, n_neg in zip(composition.categories, composition.positives, composition.negatives):
        for cls, n in ((1, n_pos), (0, n_neg)):
            if n == 0:
                continue
            pool = pools.pool(cat, cls)
            if pool.size == 0:
                kind = "positive" if cls else "negative"
                raise DataError(f"empty pool for ({cat!r}, {kind}) but {n} draws requested")
            parts.append(pool[rng.integers(0, pool.size, size=int(n))])
    return np.concatenate(parts) if parts else np.empty(0, dtype=int)


@dataclass(frozen=True)
class DriftScenario:
    attribute: str
    shifted_group: str | None = None
    delta_p: float = 0.0
    n_batches: int = 200
    batch_size: int = 1000
    flexibility: float = 0.025
    onset: int | None = None
    seed: int = 0
    metric: str = "sensitivity"

    def __post_init__(self):
        if self.n_batches < 1 or self.batch_size < 1:
            raise ValueError("n_batches and batch_size must be positive")
        if self.onset is None:
            object.__setattr__(self, "onset", self.n_batches // 2)
        if not 0 <= self.onset <= self.n_batches:
            raise ValueError("onset must lie in [0, n_batches]")
        if self.flexibility < 0:
            raise ValueError("flexibility must be non-negative")

    @property
    def drift_index(self) -> int:
        """Index of the last in-control batch."""
        return self.onset - 1

    @classmethod
    def from_config(cls, path_or_dict) -> "DriftScenario":
        """Build from a JSON file or dict; unknown keys (e.g. ``k``) are ignored."""
        if isinstance(path_or_dict, (str, os.PathLike)):
            with open(path_or_dict, encoding="utf-8") as fh:
                path_or_dict = json.load(fh)
        names = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in path_or_dict.items() if k in names})

    def to_dict(self) -> dict:
        return asdict(self)


def batch_metrics(
    scenario: DriftScenario,
    dataset: Dataset | BatchPools,
    threshold: float,
    rng: np.random.Generator,
    n_batches: int | None = None,
    shifted: bool | None = None,
    base: MarginalDistribution | None = None,
) -> list[float | None]:
    """Metric values of a stream of bootstrapped batches.

    With ``shifted=None`` batches follow the scenario's onset; ``False`` or
    ``True`` force every batch to the base or shifted distribution.
    """
    pools = dataset if isinstance(dataset, BatchPools) else BatchPools(dataset, scenario.attribute)
    if base is None:
        base = base_distribution(pools.dataset, scenario.attribute)
    n = scenario.n_batches if n_batches is None else n_batches
    shift = None
    if scenario.shifted_group is not None:
        shift = (scenario.shifted_group, scenario.delta_p)
        base.index(scenario.shifted_group)
    out = []
    for i in range(n):
        post = (i >= scenario.onset) if shifted is None else shifted
        comp = compose_batch(base, scenario.flexibility, scenario.batch_size, rng,
                             shift if post else None)
        idx = sample_batch(pools, comp, rng)
        out.append(metric_value(scenario.metric, pools.scores[idx], pools.labels[idx], threshold))
    return out


def _calibration_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1])


def calibrate_scenario(
    scenario: DriftScenario,
    dataset: Dataset,
    threshold: float,
    n_streams: int = 2,
    stream_length: int | None = None,
    k: float | str = "auto",
    k_grid: Sequence[float] = K_GRID,
    budget: int = 0,
) -> CusumCalibration:
    """Calibrate on in-control batches drawn like the scenario's pre-onset phase.

    Draws ``n_streams`` independent base-distribution streams (length defaults
    to the onset), sets mu and sigma from all of them, and either uses the
    given ``k`` or tunes it so no stream raises more than ``budget`` episodes.
    """
    pools = BatchPools(dataset, scenario.attribute)
    base = base_distribution(pools.dataset, scenario.attribute)
    length = stream_length or max(scenario.onset, 2)
    rng = _calibration_rng(scenario.seed)
    streams = [batch_metrics(scenario, pools, threshold, rng, length, shifted=False, base=base)
               for _ in range(n_streams)]
    cal = calibrate([v for s in streams for v in s], metric=scenario.metric)
    if k == "auto":
        k = tune_k(streams, k_grid, budget=budget, mu=cal.mu, sigma=cal.sigma)
    return cal.with_k(float(k))


@dataclass(frozen=True)
class ScenarioResult:
    chart: Chart
    evaluation: AlarmEvaluation
    s_lower_final: float
    calibration: CusumCalibration
    scenario: DriftScenario = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "calibration": self.calibration.to_dict(),
            "far": self.evaluation.far,
            "delay": self.evaluation.detection_delay,
            "episodes": [list(e) for e in self.chart.episodes],
            "s_lower_final": float(self.s_lower_final),
        }


def run_scenario(
    scenario: DriftScenario,
    dataset: Dataset | BatchPools,
    threshold: float,
    calibration: CusumCalibration,
) -> ScenarioResult:
    """Generate the scenario's batch stream, chart it and score the alarms."""
    if calibration.metric != scenario.metric:
        raise ValueError(f"calibration is for {calibration.metric!r}, scenario monitors {scenario.metric!r}")
    rng = np.random.default_rng(scenario.seed)
    stream = batch_metrics(scenario, dataset, threshold, rng)
    chart = run_chart(stream, calibration)
    drift = scenario.drift_index if scenario.shifted_group is not None and scenario.onset < scenario.n_batches else None
    evaluation = evaluate_alarms(chart, drift)
    return ScenarioResult(chart, evaluation, float(chart.s_lower[-1]), calibration, scenario)


@dataclass(frozen=True)
class SweepRow:
    category: str
    delta_p: float
    s_lower_final: float
    far: int
    delay: int | None


def sweep_delta(
    dataset: Dataset,
    template: DriftScenario,
    threshold: float,
    calibration: CusumCalibration,
    delta_grid: Sequence[float] = DEFAULT_DELTA_GRID,
    groups: Sequence[str] | None = None,
) -> list[SweepRow]:
    """One scenario per (group, delta_p); rows ordered by group then delta_p."""
    if len(delta_grid) == 0:
        raise ValueError("empty delta grid")
    pools = BatchPools(dataset, template.attribute)
    base = base_distribution(pools.dataset, template.attribute)
    groups = list(groups) if groups is not None else list(base.categories)
    rows = []
    for g in groups:
        for d in sorted(float(x) for x in delta_grid):
            sc = replace(template, shifted_group=g, delta_p=d)
            res = run_scenario(sc, pools, threshold, calibration)
            rows.append(SweepRow(g, d, res.s_lower_final, res.evaluation.far, res.evaluation.detection_delay))
    return rows


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["category", "delta_p", "s_lower_final", "far", "delay"])
    for r in rows:
        w.writerow([r.category, repr(r.delta_p), repr(r.s_lower_final), r.far,
                    "" if r.delay is None else r.delay])
    return buf.getvalue()
