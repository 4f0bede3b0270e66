import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from structok import stats as S

# frozen output of bca_reference(seed-20240601 normal draws, resample seed 7)
GOLDEN_BCA = (-0.336766841487987, 0.3062689429664972)


# --- independent straight-line references -----------------------------------

def bca_reference(x, B=9999, seed=0, level=0.95):
    """Loop-based BCa for the mean, written without the library helpers."""
    x = list(map(float, x))
    n = len(x)
    theta = sum(x) / n
    idx = np.random.default_rng(seed).integers(0, n, size=(B, n))
    boot = []
    for row in idx:
        boot.append(sum(x[i] for i in row) / n)
    below = sum(1 for b in boot if b < theta) + 0.5 * sum(1 for b in boot if b == theta)
    frac = min(max(below / B, 0.5 / B), 1 - 0.5 / B)
    z0 = sps.norm.ppf(frac)
    jack = [(sum(x) - x[i]) / (n - 1) for i in range(n)]
    jbar = sum(jack) / n
    num = sum((jbar - j) ** 3 for j in jack)
    den = 6 * sum((jbar - j) ** 2 for j in jack) ** 1.5
    a = num / den if den else 0.0
    boot.sort()
    ends = []
    for q in ((1 - level) / 2, (1 + level) / 2):
        z = sps.norm.ppf(q)
        alpha = sps.norm.cdf(z0 + (z0 + z) / (1 - a * (z0 + z)))
        k = min(B, max(1, math.ceil(alpha * B)))
        ends.append(boot[k - 1])
    return tuple(ends)


def perm_p(a, b, shuffles=100_000, seed=0):
    """Two-sided permutation p for |U - n1 n2 / 2|."""
    rng = np.random.default_rng(seed)
    allv = np.concatenate([a, b]).astype(float)
    n1, n2 = len(a), len(b)
    ranks = sps.rankdata(allv)
    obs = abs(ranks[:n1].sum() - n1 * (n1 + 1) / 2 - n1 * n2 / 2)
    hits = 0
    block = 10_000
    for _ in range(shuffles // block):
        perm = rng.permuted(np.tile(ranks, (block, 1)), axis=1)
        u = perm[:, :n1].sum(axis=1) - n1 * (n1 + 1) / 2
        hits += int(np.sum(np.abs(u - n1 * n2 / 2) >= obs - 1e-9))
    return hits / shuffles


# --- BCa ----------------------------------------------------------------------

def test_default_resamples():
    assert S.DEFAULT_RESAMPLES == 9999
    assert S.bootstrap_bca([1.0, 2.0, 4.0]).resamples == 9999


def test_degenerate_sample():
    ci = S.bootstrap_bca([5, 5, 5, 5])
    assert (ci.low, ci.high) == (5, 5)


def test_needs_two_values_and_finite():
    with pytest.raises(ValueError):
        S.bootstrap_bca([1.0])
    with pytest.raises(ValueError):
        S.bootstrap_bca([1.0, float("nan")])


def test_reduction_to_percentile():
    assert S.bca_levels(0.0, 0.0, 0.95) == pytest.approx((0.025, 0.975))
    rng = np.random.default_rng(4)
    boot = np.sort(rng.normal(size=9999))
    lo, hi = S.bca_levels(0.0, 0.0, 0.95)
    pct = S.percentile_interval(boot, 0.95)
    k_lo = np.searchsorted(boot, S.order_statistic(boot, lo))
    k_pct = np.searchsorted(boot, pct[0])
    assert abs(int(k_lo) - int(k_pct)) <= 1


def test_symmetric_sample_matches_percentile_within_one_order_statistic():
    x = np.array([-3, -2, -1, 0, 1, 2, 3], float)
    ci = S.bootstrap_bca(x, resamples=9999, seed=1)
    boot = np.sort(S.bootstrap_replicates(x, 9999, 1))
    pct = S.percentile_interval(boot)
    # symmetric data gives a = 0 and z0 close to 0
    assert S.jackknife_acceleration(x) == 0
    for got, ref in zip((ci.low, ci.high), pct):
        i, j = np.searchsorted(boot, got), np.searchsorted(boot, ref)
        assert abs(int(i) - int(j)) <= 1


def test_matches_reference_and_golden():
    x = np.random.default_rng(20240601).normal(size=30)
    ref = bca_reference(x, seed=7)
    ci = S.bootstrap_bca(x, seed=7)
    assert (ci.low, ci.high) == pytest.approx(ref, abs=1e-12)
    assert (ci.low, ci.high) == pytest.approx(GOLDEN_BCA, abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_reference_agreement_skewed(seed):
    x = np.random.default_rng(seed).exponential(size=15)
    ci = S.bootstrap_bca(x, resamples=2000, seed=seed)
    assert (ci.low, ci.high) == pytest.approx(bca_reference(x, 2000, seed), abs=1e-12)


def test_scipy_cross_check():
    x = np.random.default_rng(3).gamma(2.0, size=40)
    ci = S.bootstrap_bca(x, seed=5)
    ref = sps.bootstrap((x,), np.mean, n_resamples=9999, method="BCa",
                        random_state=np.random.default_rng(5)).confidence_interval
    # different resampling streams: agree to within bootstrap noise
    assert ci.low == pytest.approx(ref.low, abs=0.05)
    assert ci.high == pytest.approx(ref.high, abs=0.05)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=25), st.integers(0, 1000))
def test_interval_contains_mean_and_within_range(values, seed):
    x = np.array(values)
    ci = S.bootstrap_bca(x, seed=seed)
    tol = 1e-12 * max(1.0, float(np.abs(x).max()))  # resample means are float sums
    assert ci.low <= ci.high
    assert x.min() - tol <= ci.low and ci.high <= x.max() + tol
    assert ci.low - tol <= x.mean() <= ci.high + tol


def test_coverage_small():
    rng = np.random.default_rng(123)
    hits = 0
    for t in range(200):
        x = rng.normal(size=30)
        ci = S.bootstrap_bca(x, resamples=1999, seed=t)
        hits += ci.contains(0.0)
    assert 0.88 <= hits / 200 <= 0.99


def test_seed_determinism():
    x = [1.0, 3.0, 2.0, 8.0, 5.0]
    assert S.bootstrap_bca(x, seed=[1, 2]) == S.bootstrap_bca(x, seed=[1, 2])


# --- Mann-Whitney ---------------------------------------------------------------

def test_exact_example():
    r = S.mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert r.u_statistic == 0 and r.exact
    assert r.p_value == pytest.approx(0.1, abs=1e-12)


def test_identical_samples():
    assert S.mann_whitney_u([3, 3, 3], [3, 3]).p_value == 1.0
    assert S.mann_whitney_u([1, 2, 3, 4], [1, 2, 3, 4]).p_value == 1.0


def test_exact_matches_scipy():
    rng = np.random.default_rng(8)
    for _ in range(30):
        n1, n2 = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        v = rng.permutation(100)[:n1 + n2].astype(float)
        a, b = v[:n1], v[n1:]
        r = S.mann_whitney_u(a, b)
        ref = sps.mannwhitneyu(a, b, alternative="two-sided", method="exact")
        assert r.u_statistic == ref.statistic
        assert r.p_value == pytest.approx(ref.pvalue, abs=1e-12)


def test_asymptotic_matches_scipy():
    rng = np.random.default_rng(9)
    for _ in range(30):
        a = rng.integers(1, 6, size=int(rng.integers(5, 30)))
        b = rng.integers(1, 6, size=int(rng.integers(5, 30)))
        r = S.mann_whitney_u(a, b)
        ref = sps.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic",
                               use_continuity=True)
        assert r.p_value == pytest.approx(ref.pvalue, abs=1e-9)


def likert_fixtures():
    # survey-sized groups; below about 15 per group the normal approximation
    # itself drifts from the permutation p by up to 0.05
    rng = np.random.default_rng(2023)
    out = []
    for i in range(20):
        n1, n2 = int(rng.integers(20, 41)), int(rng.integers(20, 41))
        shift = (i % 4) * 0.4
        a = np.clip(np.round(rng.normal(3.0, 1.0, n1)), 1, 5)
        b = np.clip(np.round(rng.normal(3.0 + shift, 1.0, n2)), 1, 5)
        out.append((a, b))
    return out


@pytest.mark.parametrize("i, ab", list(enumerate(likert_fixtures())))
def test_tied_likert_against_permutation(i, ab):
    a, b = ab
    r = S.mann_whitney_u(a, b)
    assert not r.exact
    assert r.p_value == pytest.approx(perm_p(a, b, seed=i), abs=0.01)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=1, max_size=20),
       st.lists(st.integers(1, 5), min_size=1, max_size=20))
def test_u_properties(a, b):
    ra, rb = S.mann_whitney_u(a, b), S.mann_whitney_u(b, a)
    assert ra.u_statistic + rb.u_statistic == len(a) * len(b)
    assert 0 <= ra.u_statistic <= len(a) * len(b)
    assert ra.p_value == pytest.approx(rb.p_value, abs=1e-12)
    assert 0 <= ra.p_value <= 1
    ta = S.mann_whitney_u([math.exp(v) for v in a], [math.exp(v) for v in b])
    assert ta.p_value == pytest.approx(ra.p_value, abs=1e-12)


# --- improvement and comparison tables ---------------------------------------------

def test_improvement_examples():
    assert S.improvement_pct([0.1], [0.2]) == pytest.approx(100)
    assert S.improvement_pct([0.3, 0.5], [0.5, 0.3]) == 0
    assert S.improvement_pct([0.175], [0.145]) == pytest.approx(-17.142857, abs=1e-5)
    with pytest.raises(S.Undefined):
        S.improvement_pct([0.0, 0.0], [1.0])


def test_compare_identical_sets():
    reps = [{"x": v} for v in (0.1, 0.4, 0.3, 0.2)]
    t = S.compare_sets(reps, reps, ["x"])
    c = t.cell("x")
    assert c.improvement == 0 and not c.significant and c.status == "ok"


def test_compare_disjoint_sets_flagged():
    a = [{"x": v} for v in (0.10, 0.11, 0.12, 0.13)]
    b = [{"x": v} for v in (0.50, 0.52, 0.51, 0.53)]
    assert S.compare_sets(a, b, ["x"]).cell("x").significant


def test_compare_partial_availability():
    a = [{"x": 1.0, "y": None}, {"x": 2.0, "y": 3.0}]
    b = [{"x": 1.5, "y": None}, {"x": 2.5, "y": None}]
    t = S.compare_sets(a, b, ["x", "y", "z"])
    assert t.cell("x").status == "ok"
    assert t.cell("y").status == "missing"
    assert t.cell("z").status == "missing"
    with pytest.raises(ValueError):
        S.compare_sets([], b, ["x"])
