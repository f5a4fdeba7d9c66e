import math
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import bernoulli_volume, random_volume
from ratiobound.core import (
    BadConfidenceBudget,
    EmptyDenominator,
    InstanceVolume,
    LabelsRequired,
    Method,
    TooFewPixels,
)
from ratiobound.estimators import (
    clip01,
    debiased_ratio,
    labeled_ratio,
    markov_half_width,
    markov_interval,
    point_ratio,
    ratio_moments,
    squared_error_estimate,
)

pixels = st.lists(st.tuples(st.floats(0, 1), st.floats(0.01, 1)), min_size=2, max_size=60)


def test_point_ratio_examples(rng):
    assert point_ratio(InstanceVolume("a", [1, 0, 1, 0], [1, 1, 1, 1])) == 0.5
    g = rng.random(20) + 0.01
    g = g / g.max()
    assert point_ratio(InstanceVolume("b", g, g)) == 1.0
    v = random_volume(rng, 200)
    assert math.isclose(point_ratio(v), sum(v.g_a.tolist()) / sum(v.g_b.tolist()), rel_tol=1e-12)


def test_point_ratio_clips_and_errors():
    assert point_ratio(InstanceVolume("c", [0.9, 0.9], [0.1, 0.1])) == 1.0
    with pytest.raises(EmptyDenominator):
        point_ratio(InstanceVolume("z", [0.0, 0.0], [0.0, 0.0]))


def test_labeled_ratio(rng):
    assert labeled_ratio(InstanceVolume("a", [0, 0], [1, 1], [1, 0], [1, 1])) == 0.5
    assert labeled_ratio(InstanceVolume("a", [0, 0], [1, 1], [0, 0], [1, 1])) == 0.0
    v = random_volume(rng, 300)
    count_a = sum(1 for y in v.y_a if y)
    count_b = sum(1 for y in v.y_b if y)
    assert labeled_ratio(v) == count_a / count_b
    with pytest.raises(LabelsRequired):
        labeled_ratio(InstanceVolume("u", [0.1], [0.2]))
    with pytest.raises(EmptyDenominator):
        labeled_ratio(InstanceVolume("e", [0.1], [0.2], [0], [0]))


def test_moments_constant_and_identical(rng):
    m = ratio_moments(InstanceVolume("c", [0.2] * 5, [0.4] * 5))
    for name in ("var_x", "var_y", "cov_xy", "cov_x2_x", "cov_x2_y", "cov_y2_x"):
        assert getattr(m, name) == pytest.approx(0.0, abs=1e-15)
    g = rng.random(30)
    m = ratio_moments(InstanceVolume("i", g, g))
    assert m.var_x == m.var_y == m.cov_xy
    with pytest.raises(TooFewPixels):
        ratio_moments(InstanceVolume("one", [0.1], [0.2]))


def test_moments_match_two_pass_oracle(rng):
    v = random_volume(rng, 500)
    x, y = v.g_b.tolist(), v.g_a.tolist()
    m = ratio_moments(v)
    oracle = {
        "var_x": statistics.variance(x),
        "var_y": statistics.variance(y),
        "cov_xy": statistics.covariance(x, y),
        "cov_x2_x": statistics.covariance([a * a for a in x], x),
        "cov_x2_y": statistics.covariance([a * a for a in x], y),
        "cov_y2_x": statistics.covariance([b * b for b in y], x),
    }
    for name, expected in oracle.items():
        assert getattr(m, name) == pytest.approx(expected, rel=1e-10)
    assert m.mean_x == pytest.approx(statistics.fmean(x), rel=1e-12)


def test_se_identical_channels_is_zero(rng):
    g = rng.random(40) + 0.05
    g = g / g.max()
    assert squared_error_estimate(ratio_moments(InstanceVolume("i", g, g))) == 0.0
    assert squared_error_estimate(ratio_moments(InstanceVolume("c", [0.3] * 9, [0.6] * 9))) == 0.0


def test_se_bernoulli_closed_form(rng):
    # x ~ Bern(p), y = x Bern(r): population SE = r (1 - r) / (n p)
    n, p, r = 20000, 0.3, 0.4
    v = bernoulli_volume(rng, n, p, r)
    assert squared_error_estimate(ratio_moments(v)) == pytest.approx(r * (1 - r) / (n * p), rel=0.05)


def test_se_matches_monte_carlo_small(rng):
    n, p, r = 2000, 0.3, 0.4
    sx = rng.binomial(n, p, size=20000)
    sy = rng.binomial(sx, r)
    mc = np.mean((sy / sx - r) ** 2)
    est = squared_error_estimate(ratio_moments(bernoulli_volume(rng, n, p, r)))
    assert abs(est - mc) / mc < 0.10


def test_se_zero_mean_raises():
    m = ratio_moments(InstanceVolume("z", [0.0, 0.0], [0.0, 0.0]))
    with pytest.raises(EmptyDenominator):
        squared_error_estimate(m)


@settings(max_examples=40)
@given(pixels, st.integers(2, 4))
def test_se_scales_inverse_with_duplication(px, k):
    g_a = np.array([a * b for a, b in px])
    g_b = np.array([b for _, b in px])
    n = len(px)
    se1 = squared_error_estimate(ratio_moments(InstanceVolume("1", g_a, g_b)))
    sek = squared_error_estimate(ratio_moments(InstanceVolume("k", np.tile(g_a, k), np.tile(g_b, k))))
    if se1 < 1e-12:
        assert sek < 1e-12
    else:
        assert sek * k == pytest.approx(se1, rel=2 / n)


def test_markov_examples():
    assert markov_half_width(0.0009, 0.25) == 2 * math.sqrt(0.0009)
    assert markov_half_width(0.0001, 0.04) == pytest.approx(0.05, rel=1e-15)
    e = markov_interval(0.4, 0.0, 0.1)
    assert (e.lower, e.upper) == (0.4, 0.4) and e.method is Method.MARKOV_ONLY
    e = markov_interval(0.95, 0.01, 0.25)
    assert e.upper == 1.0 and e.degenerate
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(BadConfidenceBudget):
            markov_interval(0.5, 0.01, bad)


@given(st.floats(0, 1), st.floats(0, 0.1), st.floats(0, 0.1), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_markov_monotone(r, s1, s2, a1, a2):
    s_lo, s_hi = sorted((s1, s2))
    a_lo, a_hi = sorted((a1, a2))
    assert markov_half_width(s_lo, a1) <= markov_half_width(s_hi, a1)
    assert markov_half_width(s1, a_hi) <= markov_half_width(s1, a_lo)
    assert markov_interval(r, s_lo, a1).width <= markov_interval(r, s_hi, a1).width + 1e-15


@settings(max_examples=50)
@given(pixels, st.randoms(use_true_random=False))
def test_point_ratio_permutation_invariant(px, rnd):
    shuffled = list(px)
    rnd.shuffle(shuffled)
    a = InstanceVolume("a", [x * y for x, y in px], [y for _, y in px])
    b = InstanceVolume("b", [x * y for x, y in shuffled], [y for _, y in shuffled])
    assert point_ratio(a) == pytest.approx(point_ratio(b), rel=1e-12)


def test_debiased_constant_denominator(rng):
    v = InstanceVolume("c", rng.random(25) * 0.5, np.full(25, 0.8))
    assert debiased_ratio(v) == pytest.approx(point_ratio(v), rel=1e-14)


def test_debiased_zero_numerator():
    assert debiased_ratio(InstanceVolume("z", [0.0] * 4, [0.5, 0.2, 0.9, 0.4])) == 0.0
    with pytest.raises(TooFewPixels):
        debiased_ratio(InstanceVolume("t", [0.1, 0.1], [0.2, 0.2]))


def test_debiased_correction_decays_like_one_over_n():
    ns = [100, 1000, 10000]
    gaps = []
    for n in ns:
        reps = []
        for seed in range(30):
            r = np.random.default_rng([n, seed])
            # independent channels so the first-order bias term is nonzero
            x = r.beta(2, 3, n)
            y = r.beta(1, 4, n)
            v = InstanceVolume("d", y, x)
            reps.append(abs(debiased_ratio(v) - float(y.mean() / x.mean())))
        gaps.append(np.mean(reps))
    slope = np.polyfit(np.log(ns), np.log(gaps), 1)[0]
    assert -1.3 < slope < -0.7


def test_debiased_reduces_bias_small_mc():
    # independent Bernoulli channels: E[mean(y) / mean(x)] > p_y / p_x
    n, p_x, p_y = 50, 0.3, 0.1
    r = p_y / p_x
    gen = np.random.default_rng(5)
    naive, corr = [], []
    for _ in range(20000):
        x = gen.random(n) < p_x
        if not x.any():
            continue
        y = gen.random(n) < p_y
        v = InstanceVolume("m", y.astype(float), x.astype(float))
        naive.append(point_ratio(v))
        corr.append(debiased_ratio(v))
    assert abs(np.mean(corr) - r) < abs(np.mean(naive) - r)


def test_clip01():
    assert clip01(-0.1) == (0.0, True)
    assert clip01(1.5) == (1.0, True)
    assert clip01(0.3) == (0.3, False)
    assert clip01(float("nan")) == (0.0, True)
