"""Nonparametric tests, correlations and contingency association.

Every test returns a :class:`TestResult` judged against ``ALPHA = 0.05``.
Tail probabilities come from :mod:`scipy.special` (regularised incomplete
gamma / beta functions and the normal CDF).
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy import special

__all__ = [
    "ALPHA",
    "EXACT_MAX_N",
    "RankedSample",
    "TestResult",
    "chi2_sf",
    "cramers_v",
    "dunn_posthoc",
    "kruskal_wallis",
    "mann_whitney_u",
    "midranks",
    "normal_two_sided",
    "pearson",
    "rank_sample",
    "spearman",
    "t_two_sided",
]

ALPHA = 0.05
#: Pooled sample size up to which Mann-Whitney p-values are exact.
EXACT_MAX_N = 12


@dataclass(frozen=True)
class TestResult:
    test_name: str
    statistic: float
    p_value: float
    effect: float | None = None
    details: dict = field(default_factory=dict, compare=False)

    __test__ = False  # keep pytest from collecting this class

    def __post_init__(self):
        p = float(min(1.0, max(0.0, self.p_value)))
        object.__setattr__(self, "p_value", p)

    @property
    def significant(self) -> bool:
        return self.p_value < ALPHA

    def to_dict(self) -> dict:
        return {
            "test_name": self.test_name,
            "statistic": float(self.statistic),
            "p_value": self.p_value,
            "significant": self.significant,
            "effect": None if self.effect is None else float(self.effect),
            **{k: v for k, v in self.details.items()},
        }


@dataclass(frozen=True)
class RankedSample:
    values: np.ndarray
    ranks: np.ndarray
    tie_groups: tuple[int, ...]

    @property
    def tie_sum(self) -> float:
        """Sum of t^3 - t over tie groups."""
        t = np.asarray(self.tie_groups, dtype=float)
        return float(np.sum(t**3 - t))


def rank_sample(values) -> RankedSample:
    """Midranks (1-based) with the sizes of tie groups larger than one."""
    values = np.asarray(values, dtype=float).ravel()
    n = values.size
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])
    sizes = np.diff(np.r_[starts, n])
    avg = starts + (sizes + 1) / 2.0
    ranks = np.empty(n, dtype=float)
    ranks[order] = np.repeat(avg, sizes)
    return RankedSample(values, ranks, tuple(int(s) for s in sizes if s > 1))


def midranks(values) -> np.ndarray:
    return rank_sample(values).ranks


def normal_two_sided(z: float) -> float:
    return float(2.0 * special.ndtr(-abs(z)))


def chi2_sf(x: float, df: int) -> float:
    if x <= 0:
        return 1.0
    return float(special.gammaincc(df / 2.0, x / 2.0))


def t_two_sided(t: float, df: int) -> float:
    if not np.isfinite(t):
        return 0.0
    # P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2)
    return float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))


def _sample(x, name):
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise ValueError(f"sample {name} is empty")
    return x


def mann_whitney_u(a, b, exact: bool | None = None) -> TestResult:
    """Two-sided Mann-Whitney U (Wilcoxon rank-sum) test.

    ``statistic`` is U for sample ``a``.  The p-value is exact (full
    enumeration of group assignments of the pooled midranks) when the
    pooled size is at most :data:`EXACT_MAX_N`, otherwise it uses the
    tie-corrected normal approximation with a 0.5 continuity correction.
    """
    a = _sample(a, "a")
    b = _sample(b, "b")
    n1, n2 = a.size, b.size
    n = n1 + n2
    rs = rank_sample(np.concatenate([a, b]))
    r1 = rs.ranks[:n1].sum()
    u = r1 - n1 * (n1 + 1) / 2.0
    mean = n1 * n2 / 2.0
    var = n1 * n2 / 12.0 * ((n + 1) - rs.tie_sum / (n * (n - 1))) if n > 1 else 0.0
    if exact is None:
        exact = n <= EXACT_MAX_N
    details = {"n_a": n1, "n_b": n2}
    if exact:
        if comb(n, n1) > 2_000_000:
            raise ValueError("exact enumeration too large; use exact=False")
        ranks = rs.ranks
        observed = abs(u - mean)
        extreme = 0
        total = 0
        offset = n1 * (n1 + 1) / 2.0
        # tolerance guards the comparison of midrank sums that are equal in exact arithmetic
        for idx in itertools.combinations(range(n), n1):
            total += 1
            if abs(ranks[list(idx)].sum() - offset - mean) >= observed - 1e-9:
                extreme += 1
        p = extreme / total
        details["method"] = "exact"
    else:
        if var <= 0:
            p = 1.0
            z = 0.0
        else:
            z = max(abs(u - mean) - 0.5, 0.0) / np.sqrt(var)
            p = normal_two_sided(z)
        details["method"] = "normal"
        details["z"] = float(np.copysign(z, u - mean))
    return TestResult("mann_whitney_u", float(u), p, details=details)


def _groups(groups, minimum):
    groups = [_sample(g, f"group {i}") for i, g in enumerate(groups)]
    if len(groups) < minimum:
        raise ValueError(f"need at least {minimum} groups, got {len(groups)}")
    return groups


def kruskal_wallis(groups) -> TestResult:
    """Kruskal-Wallis H with tie correction; p from chi-square with g-1 df."""
    groups = _groups(groups, 2)
    sizes = np.array([g.size for g in groups])
    n = sizes.sum()
    rs = rank_sample(np.concatenate(groups))
    bounds = np.r_[0, np.cumsum(sizes)]
    rank_sums = np.array([rs.ranks[bounds[i]:bounds[i + 1]].sum() for i in range(len(groups))])
    h = 12.0 / (n * (n + 1)) * np.sum(rank_sums**2 / sizes) - 3.0 * (n + 1)
    correction = 1.0 - rs.tie_sum / (n**3 - n)
    h = 0.0 if correction <= 0 else max(h / correction, 0.0)
    df = len(groups) - 1
    return TestResult("kruskal_wallis", float(h), chi2_sf(h, df), details={"df": df})


def dunn_posthoc(groups, bonferroni: bool = False, names=None) -> list[TestResult]:
    """Dunn's pairwise z-tests on mean ranks of the pooled sample.

    ``statistic`` is z = (mean rank i - mean rank j) / SE.  p-values are
    unadjusted unless ``bonferroni`` is set, in which case each is multiplied
    by the number of pairs and capped at 1.
    """
    if len(groups) < 3:
        raise ValueError("dunn_posthoc needs at least 3 groups; use mann_whitney_u for two")
    groups = _groups(groups, 3)
    names = list(names) if names is not None else list(range(len(groups)))
    sizes = np.array([g.size for g in groups], dtype=float)
    n = sizes.sum()
    rs = rank_sample(np.concatenate(groups))
    bounds = np.r_[0, np.cumsum(sizes.astype(int))]
    mean_ranks = [rs.ranks[bounds[i]:bounds[i + 1]].mean() for i in range(len(groups))]
    tie_term = rs.tie_sum / (12.0 * (n - 1)) if n > 1 else 0.0
    base = n * (n + 1) / 12.0 - tie_term
    pairs = list(itertools.combinations(range(len(groups)), 2))
    out = []
    for i, j in pairs:
        se = np.sqrt(base * (1.0 / sizes[i] + 1.0 / sizes[j]))
        diff = mean_ranks[i] - mean_ranks[j]
        z = 0.0 if se == 0 else diff / se
        p = normal_two_sided(z)
        if bonferroni:
            p = min(1.0, p * len(pairs))
        out.append(
            TestResult(
                "dunn", float(z), p,
                details={"group_a": names[i], "group_b": names[j], "adjust": "bonferroni" if bonferroni else "none"},
            )
        )
    return out


def _paired(x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError("x and y differ in length")
    if x.size < 3:
        raise ValueError("need at least 3 paired observations")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("degenerate vector: zero variance")
    return x, y


def _correlation(name, x, y) -> TestResult:
    n = x.size
    xc = x - x.mean()
    yc = y - y.mean()
    rho = float(np.dot(xc, yc) / np.sqrt(np.dot(xc, xc) * np.dot(yc, yc)))
    rho = min(1.0, max(-1.0, rho))
    df = n - 2
    if abs(rho) >= 1.0:
        t, p = np.copysign(np.inf, rho), 0.0
    else:
        t = rho * np.sqrt(df / (1.0 - rho * rho))
        p = t_two_sided(t, df)
    return TestResult(name, float(t), p, effect=rho, details={"df": df})


def pearson(x, y) -> TestResult:
    """Pearson correlation; ``effect`` is rho, ``statistic`` the t value."""
    x, y = _paired(x, y)
    return _correlation("pearson", x, y)


def spearman(x, y) -> TestResult:
    """Pearson correlation of midranks."""
    x, y = _paired(x, y)
    return _correlation("spearman", midranks(x), midranks(y))


def cramers_v(table) -> TestResult:
    """Chi-square test of independence and Cramér's V for an r x c table.

    Rows or columns with a zero total are dropped (with a warning).  No
    continuity correction is applied.
    """
    t = np.asarray(table, dtype=float)
    if t.ndim != 2:
        raise ValueError("contingency table must be 2-D")
    if (t < 0).any():
        raise ValueError("contingency counts must be non-negative")
    rows = t.sum(axis=1) > 0
    cols = t.sum(axis=0) > 0
    if not rows.all() or not cols.all():
        warnings.warn(
            f"dropping {int((~rows).sum())} empty row(s) and {int((~cols).sum())} empty column(s)",
            RuntimeWarning,
            stacklevel=2,
        )
        t = t[rows][:, cols]
    r, c = t.shape
    if r < 2 or c < 2:
        raise ValueError(f"need at least a 2x2 table after dropping empty margins, got {r}x{c}")
    n = t.sum()
    expected = np.outer(t.sum(axis=1), t.sum(axis=0)) / n
    chi2 = float(np.sum((t - expected) ** 2 / expected))
    v = float(np.sqrt(chi2 / (n * (min(r, c) - 1))))
    df = (r - 1) * (c - 1)
    return TestResult("cramers_v", chi2, chi2_sf(chi2, df), effect=min(v, 1.0), details={"df": df})
