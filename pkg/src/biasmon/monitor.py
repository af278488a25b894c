"""Two-sided CUSUM monitoring of a batch-level metric.

Signals run freely (no reset after an alarm).  An *episode* is a maximal
run of consecutive alarm-flagged batches; false alarms and detection delay
are counted in episodes.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "K_GRID",
    "SIGMA_FLOOR",
    "AlarmEvaluation",
    "Chart",
    "CusumCalibration",
    "CusumState",
    "alarm_episodes",
    "calibrate",
    "evaluate_alarms",
    "run_chart",
    "tune_k",
    "update",
]

log = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-9
K_GRID = tuple(round(0.01 * i, 2) for i in range(11))
# relative slack on |S| >= h so sums that equal h in exact arithmetic alarm
_BOUNDARY_RTOL = 1e-9


@dataclass(frozen=True)
class CusumCalibration:
    mu: float
    sigma: float
    k: float = 0.0
    h: float | None = None
    metric: str = "sensitivity"

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.k < 0:
            raise ValueError("allowance k must be non-negative")
        if self.h is None:
            object.__setattr__(self, "h", 4.0 * self.sigma)
        elif self.h < 0:
            raise ValueError("h must be non-negative")

    @property
    def degenerate(self) -> bool:
        return self.sigma < SIGMA_FLOOR

    def with_k(self, k: float) -> "CusumCalibration":
        return replace(self, k=float(k))

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "mu": float(self.mu),
            "sigma": float(self.sigma),
            "k": float(self.k),
            "h": float(self.h),
            "degenerate": self.degenerate,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "CusumCalibration":
        try:
            return cls(
                mu=float(d["mu"]), sigma=float(d["sigma"]), k=float(d.get("k", 0.0)),
                h=float(d["h"]) if d.get("h") is not None else None,
                metric=str(d.get("metric", "sensitivity")),
            )
        except KeyError as e:
            raise ValueError(f"calibration is missing field {e.args[0]!r}") from None

    @classmethod
    def from_json(cls, text: str) -> "CusumCalibration":
        return cls.from_dict(json.loads(text))


def calibrate(values: Sequence[float], k: float = 0.0, metric: str = "sensitivity") -> CusumCalibration:
    """mu = mean, sigma = sample std of in-control batch metrics, h = 4 sigma.

    Undefined batch values (``None``/NaN) are ignored.
    """
    x = np.array([np.nan if v is None else v for v in values], dtype=float)
    x = x[~np.isnan(x)]
    if x.size < 2:
        raise ValueError("calibration needs at least 2 batch values")
    cal = CusumCalibration(float(x.mean()), float(x.std(ddof=1)), k=float(k), metric=metric)
    if cal.degenerate:
        warnings.warn("calibration is degenerate: metric has (near) zero spread", RuntimeWarning, stacklevel=2)
    return cal


@dataclass(frozen=True)
class CusumState:
    s_upper: float = 0.0
    s_lower: float = 0.0
    batch_index: int = 0
    alarm_active: bool = False


def _is_alarm(s_upper: float, s_lower: float, h: float) -> bool:
    edge = h - _BOUNDARY_RTOL * h
    return s_upper >= edge or s_lower <= -edge


def update(state: CusumState, m: float | None, cal: CusumCalibration) -> CusumState:
    """One CUSUM step.  An undefined metric (None/NaN) leaves the signals unchanged."""
    if cal.degenerate:
        raise ValueError("cannot monitor with a degenerate calibration (sigma ~ 0)")
    if m is None or (isinstance(m, float) and math.isnan(m)):
        log.info("batch %d: undefined metric, skipped", state.batch_index)
        return replace(state, batch_index=state.batch_index + 1)
    dev = m - cal.mu
    su = max(0.0, state.s_upper + dev - cal.k)
    sl = min(0.0, state.s_lower + dev + cal.k)
    return CusumState(su, sl, state.batch_index + 1, _is_alarm(su, sl, cal.h))


@dataclass(frozen=True)
class Chart:
    """One row per batch: index, metric (NaN = undefined), signals and alarm flag."""

    metric: np.ndarray
    s_upper: np.ndarray
    s_lower: np.ndarray
    alarm: np.ndarray
    h: float | None = None

    HEADER = ("index", "metric", "s_upper", "s_lower", "alarm")

    def __len__(self) -> int:
        return int(self.metric.size)

    @property
    def index(self) -> np.ndarray:
        return np.arange(len(self))

    @property
    def episodes(self) -> list[tuple[int, int]]:
        return alarm_episodes(self.alarm)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        for i in range(len(self)):
            m = self.metric[i]
            w.writerow([
                i,
                "" if np.isnan(m) else repr(float(m)),
                repr(float(self.s_upper[i])),
                repr(float(self.s_lower[i])),
                int(self.alarm[i]),
            ])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, h: float | None = None) -> "Chart":
        """Parse chart CSV; malformed content raises ``ValueError`` naming the line."""
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(c.strip() for c in rows[0]) != cls.HEADER:
            raise ValueError(f"line 1: chart header must be {','.join(cls.HEADER)}")
        metric, su, sl, alarm = [], [], [], []
        for line_no, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ValueError(f"line {line_no}: expected 5 fields, got {len(row)}")
            try:
                if int(row[0]) != len(metric):
                    raise ValueError
                metric.append(float(row[1]) if row[1].strip() else np.nan)
                su.append(float(row[2]))
                sl.append(float(row[3]))
                flag = int(row[4])
                if flag not in (0, 1):
                    raise ValueError
                alarm.append(bool(flag))
            except ValueError:
                raise ValueError(f"line {line_no}: malformed chart row {row!r}") from None
        return cls(np.array(metric, float), np.array(su, float), np.array(sl, float),
                   np.array(alarm, bool), h)


def alarm_episodes(alarm: Iterable[bool]) -> list[tuple[int, int]]:
    """(start, end) inclusive index pairs of maximal runs of True."""
    a = np.asarray(list(alarm) if not isinstance(alarm, np.ndarray) else alarm, dtype=bool)
    if a.size == 0:
        return []
    padded = np.r_[False, a, False].astype(int)
    d = np.diff(padded)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1) - 1
    return [(int(s), int(e)) for s, e in zip(starts, ends)]


def run_chart(metric_stream: Sequence[float | None], cal: CusumCalibration) -> Chart:
    if cal.degenerate:
        raise ValueError("cannot monitor with a degenerate calibration (sigma ~ 0)")
    n = len(metric_stream)
    metric = np.full(n, np.nan)
    su = np.zeros(n)
    sl = np.zeros(n)
    alarm = np.zeros(n, dtype=bool)
    state = CusumState()
    for i, m in enumerate(metric_stream):
        state = update(state, m, cal)
        if m is not None:
            metric[i] = m
        su[i], sl[i], alarm[i] = state.s_upper, state.s_lower, state.alarm_active
    return Chart(metric, su, sl, alarm, cal.h)


@dataclass(frozen=True)
class AlarmEvaluation:
    far: int
    detection_delay: int | None

    def to_dict(self) -> dict:
        return {"far": self.far, "delay": self.detection_delay}


def evaluate_alarms(chart: Chart | Sequence[tuple[int, int]], drift_index: int | None) -> AlarmEvaluation:
    """Count false-alarm episodes and the detection delay.

    ``drift_index`` is the index of the last in-control batch: episodes that
    start at or before it are false alarms, and the delay is measured from it
    to the start of the first later episode.  ``None`` means no drift, so
    every episode is false.
    """
    episodes = chart.episodes if isinstance(chart, Chart) else list(chart)
    starts = [s for s, _ in episodes]
    if drift_index is None:
        return AlarmEvaluation(len(starts), None)
    far = sum(1 for s in starts if s <= drift_index)
    later = [s for s in starts if s > drift_index]
    return AlarmEvaluation(far, later[0] - drift_index if later else None)


def tune_k(
    training_streams: Sequence[Sequence[float | None]],
    grid: Sequence[float] = K_GRID,
    *,
    budget: int = 0,
    mu: float | None = None,
    sigma: float | None = None,
    h: float | None = None,
) -> float:
    """Smallest allowance whose false-alarm episodes on no-drift streams fit ``budget``.

    mu and sigma default to the statistics of all training values pooled.
    If no grid value meets the budget, the one with the fewest episodes is
    returned (first on ties) and a warning is issued.
    """
    if len(grid) == 0:
        raise ValueError("empty k grid")
    if not training_streams:
        raise ValueError("need at least one training stream")
    if mu is None or sigma is None:
        pooled = calibrate([v for s in training_streams for v in s])
        mu = pooled.mu if mu is None else mu
        sigma = pooled.sigma if sigma is None else sigma
    grid = sorted(float(k) for k in grid)
    counts = []
    for k in grid:
        cal = CusumCalibration(mu, sigma, k=k, h=h)
        n = sum(len(run_chart(s, cal).episodes) for s in training_streams)
        if n <= budget:
            return k
        counts.append(n)
    best = int(np.argmin(counts))
    warnings.warn(
        f"no k in grid keeps false alarms within {budget}; using k={grid[best]} ({counts[best]} episodes)",
        RuntimeWarning,
        stacklevel=2,
    )
    return grid[best]
