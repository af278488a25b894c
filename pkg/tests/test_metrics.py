import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biasmon.metrics import (
    THRESHOLD_GRID,
    ConfusionCounts,
    auroc,
    confusion,
    f1_score,
    metric_set,
    prevalence,
    select_threshold,
    uncertainty,
)


def pair_count_auroc(scores, labels):
    """Independent oracle: enumerate every (positive, negative) pair."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p, n in itertools.product(pos, neg):
        total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


@pytest.mark.parametrize(
    "scores,labels,t,expected",
    [
        ([0.9, 0.2, 0.6, 0.4], [1, 0, 1, 0], 0.5, ConfusionCounts(2, 0, 2, 0)),
        ([0.3, 0.7], [1, 0], 0.5, ConfusionCounts(0, 1, 0, 1)),
        ([0.5], [1], 0.5, ConfusionCounts(1, 0, 0, 0)),
    ],
)
def test_confusion(scores, labels, t, expected):
    assert confusion(scores, labels, t) == expected


def test_confusion_errors():
    with pytest.raises(ValueError, match="empty slice"):
        confusion([], [], 0.5)
    with pytest.raises(ValueError):
        confusion([0.5], [1], 0.0)


def test_f1_table_values():
    assert f1_score(0.896, 0.679) == pytest.approx(0.773, abs=5e-4)
    assert f1_score(0.548, 0.500) == pytest.approx(0.523, abs=5e-4)
    assert f1_score(None, 0.5) is None


def test_zero_predicted_positives():
    m = metric_set([0.1, 0.2, 0.3], [1, 0, 0], 0.5)
    assert m.ppv is None
    assert m.sensitivity == 0.0
    assert m.f1 is None
    assert m.specificity == 1.0


def test_metric_set_formulas():
    m = metric_set([0.9, 0.8, 0.3, 0.6, 0.1], [1, 1, 1, 0, 0], 0.5)
    c = m.counts
    assert (c.tp, c.fp, c.tn, c.fn) == (2, 1, 1, 1)
    assert m.ppv == pytest.approx(2 / 3)
    assert m.sensitivity == pytest.approx(2 / 3)
    assert m.specificity == pytest.approx(0.5)
    assert m.accuracy == pytest.approx(3 / 5)
    assert m.prevalence == pytest.approx(3 / 5)
    assert m.uncertainty is None


@pytest.mark.parametrize(
    "scores,labels,expected",
    [([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1], 0.75), ([0.9, 0.8, 0.1], [1, 1, 0], 1.0), ([0.5] * 4, [0, 1, 0, 1], 0.5)],
)
def test_auroc_examples(scores, labels, expected):
    assert auroc(scores, labels) == expected
    assert pair_count_auroc(scores, labels) == expected


def test_auroc_single_class_is_undefined():
    assert auroc([0.1, 0.2], [1, 1]) is None


def test_auroc_matches_pair_counting(rng):
    for _ in range(200):
        n = int(rng.integers(2, 60))
        scores = rng.integers(0, 8, n) / 8.0  # heavy ties
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            continue
        assert abs(auroc(scores, labels) - pair_count_auroc(scores, labels)) < 1e-12


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=2, max_size=40))
def test_auroc_monotone_invariance(rows):
    scores = np.array([s for s, _ in rows])
    labels = np.array([y for _, y in rows])
    if labels.min() == labels.max():
        return
    a = auroc(scores, labels)
    for f in (np.sqrt, lambda x: 3 * x - 7, np.expm1):
        moved = f(scores)
        # a floating-point transform can merge neighbouring values; skip those draws
        if np.unique(moved).size == np.unique(scores).size:
            assert auroc(moved, labels) == pytest.approx(a, abs=1e-12)


@settings(max_examples=80)
@given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=1, max_size=50), st.sampled_from(THRESHOLD_GRID))
def test_metric_identities(rows, t):
    scores = [s for s, _ in rows]
    labels = [y for _, y in rows]
    m = metric_set(scores, labels, t)
    c = m.counts
    assert c.total == len(rows)
    if m.sensitivity is not None:
        assert m.sensitivity + c.fn / (c.tp + c.fn) == pytest.approx(1.0)
    if m.specificity is not None:
        assert m.specificity + c.fp / (c.tn + c.fp) == pytest.approx(1.0)
    if m.sensitivity is not None and m.specificity is not None:
        weighted = (m.sensitivity * m.n_pos + m.specificity * m.n_neg) / (m.n_pos + m.n_neg)
        assert m.accuracy == pytest.approx(weighted)
    if m.ppv is not None and m.sensitivity is not None and m.ppv + m.sensitivity > 0:
        assert m.f1 == pytest.approx(2 * m.ppv * m.sensitivity / (m.ppv + m.sensitivity))


@given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=2, max_size=40), st.data())
def test_confusion_merges(rows, data):
    cut = data.draw(st.integers(1, len(rows) - 1))
    s = [r[0] for r in rows]
    y = [r[1] for r in rows]
    assert confusion(s[:cut], y[:cut], 0.5) + confusion(s[cut:], y[cut:], 0.5) == confusion(s, y, 0.5)


def test_select_threshold_examples():
    choice = select_threshold([0.2, 0.4, 0.6, 0.8], [0, 0, 1, 1])
    assert choice.threshold == 0.41 and choice.achieved_f1 == 1.0
    choice = select_threshold([1.0, 1.0, 1.0], [1, 1, 1])
    assert choice.threshold == 0.01 and choice.achieved_f1 == 1.0
    with pytest.raises(ValueError, match="no positives"):
        select_threshold([0.9], [0])


def test_select_threshold_exhaustive(rng):
    for _ in range(30):
        scores = rng.random(40).round(2)
        labels = (rng.random(40) < 0.4).astype(int)
        if labels.sum() == 0:
            continue
        choice = select_threshold(scores, labels)
        f1s = []
        for t in THRESHOLD_GRID:
            m = metric_set(scores, labels, t)
            f1s.append(m.f1 or 0.0)
        assert choice.achieved_f1 == pytest.approx(max(f1s))
        first = THRESHOLD_GRID[int(np.argmax(np.isclose(f1s, max(f1s), rtol=0, atol=1e-12)))]
        assert choice.threshold == pytest.approx(first)


def test_prevalence():
    assert prevalence(7346, 210326) == pytest.approx(0.0337, abs=1e-4)
    assert prevalence(1158, 53548) == pytest.approx(0.0212, abs=1e-4)
    assert prevalence(0, 100) == 0.0
    with pytest.raises(ValueError):
        prevalence(0, 0)


def test_uncertainty():
    assert uncertainty([[0.5, 0.5, 0.5]]) == 0.0
    assert uncertainty([[0.4, 0.6]]) == pytest.approx(0.1414, abs=1e-4)
    assert uncertainty([[0.5, 0.5, 0.5], [0.4, 0.6]]) == pytest.approx(0.0707, abs=1e-4)
    with pytest.raises(ValueError, match="rec-b"):
        uncertainty([[0.1, 0.2], [0.3]], ids=["rec-a", "rec-b"])
