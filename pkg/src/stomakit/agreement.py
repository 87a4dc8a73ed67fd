"""Agreement between manually measured and predicted phenotypes.

``g`` is always the manual (reference) series and ``d`` the predicted one.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import DegenerateSeries, DimensionMismatch, NonPositiveReference, SampleTooSmall

EXACT_MAX_N = 12


def _paired(g, d, min_len=1):
    g = np.asarray(g, dtype=float)
    d = np.asarray(d, dtype=float)
    if g.ndim != 1 or g.shape != d.shape:
        raise DimensionMismatch(f"paired series must be 1-D and equal length, got {g.shape} and {d.shape}")
    if len(g) < min_len:
        raise SampleTooSmall(f"need at least {min_len} pairs, got {len(g)}")
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(d))):
        raise DimensionMismatch("series contain non-finite values")
    return g, d


def ccc(g: Sequence[float], d: Sequence[float], sample: bool = False) -> float:
    """Lin's concordance correlation coefficient.

    Population (1/n) moments by default; ``sample=True`` uses 1/(n-1) for the
    variances and covariance.
    """
    g, d = _paired(g, d, min_len=2)
    ddof = 1 if sample else 0
    mg, md = g.mean(), d.mean()
    vg, vd = g.var(ddof=ddof), d.var(ddof=ddof)
    cov = np.sum((g - mg) * (d - md)) / (len(g) - ddof)
    denom = (mg - md) ** 2 + vg + vd
    if denom == 0.0:
        raise DegenerateSeries("both series are constant and equal; CCC undefined")
    return float(2 * cov / denom)


def pearson(g, d) -> float:
    g, d = _paired(g, d, min_len=2)
    return float(np.corrcoef(g, d)[0, 1])


def dimension_accuracy(g: Sequence[float], d: Sequence[float]) -> tuple[list[float], float]:
    """Per-item signed accuracy ``1 - (g-d)/g`` and the averaged ``1 - mean(|g-d|/g)``."""
    g, d = _paired(g, d)
    if np.any(g <= 0):
        raise NonPositiveReference("reference values must be positive")
    per_item = 1.0 - (g - d) / g
    avg = 1.0 - float(np.mean(np.abs(g - d) / g))
    return per_item.tolist(), avg


def mse(g, d) -> float:
    g, d = _paired(g, d)
    return float(np.mean((g - d) ** 2))


def rmse(g, d) -> float:
    return math.sqrt(mse(g, d))


# ------------------------------------------------------------ rank-sum test


def rank_sum_statistic(a, b) -> tuple[float, np.ndarray]:
    """Rank sum of ``a`` in the pooled sample (mid-ranks for ties) and the pooled ranks."""
    pooled = np.concatenate([np.asarray(a, float), np.asarray(b, float)])
    ranks = stats.rankdata(pooled)
    return float(ranks[: len(a)].sum()), ranks


def wilcoxon_rank_sum(a, b, exact: bool | None = None) -> float:
    """Two-sided Wilcoxon rank-sum p-value.

    Exact permutation distribution of the (mid-)rank sum when
    ``n1 + n2 <= 12`` (or ``exact=True``), otherwise a tie-corrected normal
    approximation without continuity correction.
    """
    n1, n2 = len(a), len(b)
    if n1 < 1 or n2 < 1:
        raise SampleTooSmall("both samples must be non-empty")
    w, ranks = rank_sum_statistic(a, b)
    if exact is None:
        exact = n1 + n2 <= EXACT_MAX_N
    if exact:
        return _exact_rank_sum_p(ranks, n1, w)

    n = n1 + n2
    mean_w = n1 * (n + 1) / 2
    _, counts = np.unique(ranks, return_counts=True)
    tie = float(np.sum(counts ** 3 - counts))
    var_w = n1 * n2 / 12 * ((n + 1) - tie / (n * (n - 1)))
    if var_w <= 0:
        return 1.0
    z = (w - mean_w) / math.sqrt(var_w)
    return float(min(1.0, 2 * stats.norm.sf(abs(z))))


def _exact_rank_sum_p(ranks: np.ndarray, n1: int, w_obs: float) -> float:
    # mid-ranks are multiples of 1/2: work in doubled integer units
    r2 = [int(round(2 * r)) for r in ranks]
    w2 = int(round(2 * w_obs))
    total = lo = hi = 0
    for combo in itertools.combinations(r2, n1):
        s = sum(combo)
        total += 1
        lo += s <= w2
        hi += s >= w2
    p = 2 * Fraction(min(lo, hi), total)
    return float(min(p, Fraction(1)))


@dataclass(frozen=True)
class DistributionTest:
    test: str  # "t-test" (Welch) or "wilcoxon"
    p_value: float
    significant: bool
    normal_a: bool
    normal_b: bool


def _is_normal(x: np.ndarray, alpha: float) -> bool:
    if np.ptp(x) == 0:
        return False
    return bool(stats.shapiro(x).pvalue > alpha)


def compare_distributions(a, b, alpha: float = 0.05) -> DistributionTest:
    """Welch t-test if both samples pass Shapiro-Wilk at ``alpha``, else rank-sum."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 3 or len(b) < 3:
        raise SampleTooSmall("each sample needs at least 3 values")
    na, nb = _is_normal(a, alpha), _is_normal(b, alpha)
    if na and nb:
        p = float(stats.ttest_ind(a, b, equal_var=False).pvalue)
        test = "t-test"
    else:
        p = wilcoxon_rank_sum(a, b)
        test = "wilcoxon"
    return DistributionTest(test, p, p < alpha, na, nb)


@dataclass(frozen=True)
class TraitAgreement:
    trait: str
    n: int
    ccc: float
    avg_accuracy: float
    mse: float
    rmse: float
    test: str
    p_value: float
    significant: bool


def agree(trait: str, g, d, alpha: float = 0.05) -> TraitAgreement:
    """All agreement statistics for one trait."""
    g, d = _paired(g, d, min_len=3)
    cmp = compare_distributions(g, d, alpha)
    try:
        c = ccc(g, d)
    except DegenerateSeries:
        c = math.nan
    try:
        _, acc = dimension_accuracy(g, d)
    except NonPositiveReference:
        acc = math.nan
    m = mse(g, d)
    return TraitAgreement(trait, len(g), c, acc, m, math.sqrt(m), cmp.test, cmp.p_value, cmp.significant)
