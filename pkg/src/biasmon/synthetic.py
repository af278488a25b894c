"""Synthetic prediction tables with known per-subgroup operating points."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ingest import Dataset, PredictionRecord


@dataclass(frozen=True)
class GroupSpec:
    name: str
    n_pos: int
    n_neg: int
    sensitivity: float
    specificity: float = 0.95


def make_table(
    groups: Sequence[GroupSpec],
    attribute: str = "group",
    threshold: float = 0.5,
    seed: int = 0,
) -> Dataset:
    """Build a dataset whose subgroup sensitivities/specificities at ``threshold`` are exact.

    Within a group, ``round(sensitivity * n_pos)`` positives score above the
    threshold and the rest below; negatives likewise for specificity.
    """
    rng = np.random.default_rng(seed)
    records = []
    for g in groups:
        tp = int(round(g.sensitivity * g.n_pos))
        tn = int(round(g.specificity * g.n_neg))
        hi = lambda n: rng.uniform(threshold, 1.0, n)  # noqa: E731
        lo = lambda n: rng.uniform(0.0, threshold * 0.999, n)  # noqa: E731
        pos = np.r_[hi(tp), lo(g.n_pos - tp)]
        neg = np.r_[lo(tn), hi(g.n_neg - tn)]
        for label, scores in ((1, pos), (0, neg)):
            for s in scores:
                records.append(
                    PredictionRecord(f"{g.name}-{len(records)}", float(s), label, None, {attribute: g.name})
                )
    schema = {attribute: tuple(g.name for g in groups)}
    return Dataset(tuple(records), schema)
