import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import stats

from oracles import enumerate_rank_sum_p, moments_ccc
from stomakit.agreement import (
    agree, ccc, compare_distributions, dimension_accuracy, mse, pearson, rmse, wilcoxon_rank_sum,
)
from stomakit.errors import DegenerateSeries, DimensionMismatch, NonPositiveReference, SampleTooSmall


def test_ccc_hand_case():
    assert ccc([1, 2, 3], [1, 2, 4]) == pytest.approx(6 / 7, abs=1e-9)
    assert ccc([1, 2, 3], [1, 2, 4]) == pytest.approx(moments_ccc([1, 2, 3], [1, 2, 4]), abs=1e-12)


def test_ccc_identity_and_reversal():
    assert ccc([1, 2, 3], [1, 2, 3]) == 1.0
    assert ccc([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)


def test_ccc_penalises_shift_and_scale():
    g = [1.0, 2.0, 3.0, 4.0]
    assert pearson(g, [x + 5 for x in g]) == pytest.approx(1.0)
    assert ccc(g, [x + 5 for x in g]) < 0.2
    assert ccc(g, [2 * x for x in g]) < 1.0


def test_ccc_errors():
    with pytest.raises(DegenerateSeries):
        ccc([2, 2, 2], [2, 2, 2])
    with pytest.raises(DimensionMismatch):
        ccc([1, 2], [1, 2, 3])
    with pytest.raises(SampleTooSmall):
        ccc([1], [1])


def test_ccc_sample_variant():
    g, d = [1, 2, 3], [1, 2, 4]
    # sample moments: cov 1.5, vars 1 and 7/3, mean gap 1/3
    assert ccc(g, d, sample=True) == pytest.approx(3 / (1 / 9 + 1 + 7 / 3))


series = st.lists(st.floats(-100, 100), min_size=3, max_size=20)


@given(series, st.data())
def test_ccc_bounded_by_pearson(g, data):
    d = data.draw(st.lists(st.floats(-100, 100), min_size=len(g), max_size=len(g)))
    assume(np.ptp(g) > 1e-3 and np.ptp(d) > 1e-3)
    c = ccc(g, d)
    assert abs(c) <= abs(pearson(g, d)) + 1e-9
    assert c == pytest.approx(ccc(d, g), abs=1e-9)
    assert c == pytest.approx(moments_ccc(g, d), abs=1e-9)


@given(series, st.floats(0.1, 10), st.floats(-50, 50))
def test_ccc_common_affine_map_invariant(g, a, b):
    assume(np.ptp(g) > 1e-3)
    d = [x * 0.9 + 1 for x in g]
    c0 = ccc(g, d)
    c1 = ccc([a * x + b for x in g], [a * x + b for x in d])
    assert c0 == pytest.approx(c1, abs=1e-7)


def test_accuracy_examples():
    per, avg = dimension_accuracy([10, 20], [11, 18])
    assert per == pytest.approx([1.1, 0.9])
    assert avg == pytest.approx(0.9)
    per, avg = dimension_accuracy([5, 5], [5, 5])
    assert per == [1.0, 1.0] and avg == 1.0
    with pytest.raises(NonPositiveReference):
        dimension_accuracy([0, 1], [1, 1])


def test_mse_rmse():
    assert mse([0, 0], [5, 0]) == 12.5
    assert rmse([0, 0], [5, 0]) == pytest.approx(math.sqrt(12.5))


@given(series)
def test_rmse_squared_is_mse(g):
    d = [x + 0.5 * (i % 3) for i, x in enumerate(g)]
    assert rmse(g, d) ** 2 == pytest.approx(mse(g, d), rel=1e-12, abs=1e-12)


def test_exact_wilcoxon_hand_case():
    assert wilcoxon_rank_sum([1, 2, 3], [10, 11, 12]) == 0.1
    assert enumerate_rank_sum_p([1, 2, 3], [10, 11, 12]) == pytest.approx(0.1)


def test_wilcoxon_identical_tied():
    assert wilcoxon_rank_sum([5, 5, 5], [5, 5, 5]) == 1.0
    assert wilcoxon_rank_sum([5] * 10, [5] * 10) == 1.0


small = st.lists(st.integers(0, 6), min_size=1, max_size=6)


@settings(max_examples=60, deadline=None)
@given(small, small)
def test_exact_matches_enumeration(a, b):
    assume(len(a) + len(b) <= 12)
    assert wilcoxon_rank_sum(a, b) == pytest.approx(float(enumerate_rank_sum_p(a, b)), abs=1e-12)


def test_normal_approximation_matches_scipy():
    rng = np.random.default_rng(4)
    for _ in range(10):
        a = rng.integers(0, 20, 15).astype(float)
        b = rng.integers(3, 25, 18).astype(float)
        ref = stats.mannwhitneyu(a, b, use_continuity=False, method="asymptotic").pvalue
        assert wilcoxon_rank_sum(a, b) == pytest.approx(ref, rel=1e-9)


def test_compare_distributions_normal_samples():
    rng = np.random.default_rng(11)
    a, b = rng.normal(10, 1, 40), rng.normal(10, 1, 40)
    r = compare_distributions(a, b)
    assert r.test == "t-test"
    assert r.p_value == pytest.approx(stats.ttest_ind(a, b, equal_var=False).pvalue)
    assert r.p_value > 0.05 and not r.significant


def test_compare_distributions_skewed_uses_rank_sum():
    rng = np.random.default_rng(2)
    a, b = rng.exponential(1, 60), rng.exponential(1, 60) + 3
    r = compare_distributions(a, b)
    assert r.test == "wilcoxon" and r.significant


def test_compare_needs_three():
    with pytest.raises(SampleTooSmall):
        compare_distributions([1, 2], [1, 2, 3])


def test_agree_bundle():
    g = [10.0, 12.0, 14.0, 16.0, 18.0]
    d = [10.5, 11.5, 14.2, 16.1, 17.6]
    r = agree("length", g, d)
    assert r.n == 5
    assert r.ccc == pytest.approx(moments_ccc(g, d))
    assert r.rmse == pytest.approx(math.sqrt(r.mse))
    assert 0.9 < r.avg_accuracy <= 1.0


def test_agree_degenerate_ccc_is_nan():
    r = agree("x", [3, 3, 3], [3, 3, 3])
    assert math.isnan(r.ccc) and r.mse == 0.0
