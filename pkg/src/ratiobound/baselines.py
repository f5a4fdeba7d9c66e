"""Pixel-resampling interval baselines: bootstrap and subsampling."""

from __future__ import annotations

import math

import numpy as np

from .core import EmptyDenominator, InstanceVolume, IntervalEstimate, Method
from .estimators import point_ratio

DEFAULT_REPS = 100
DEFAULT_LO_Q = 0.16
DEFAULT_HI_Q = 0.84
DEFAULT_FRAC = 0.1


def nearest_rank(sorted_values: np.ndarray, q: float) -> float:
    """Nearest-rank quantile: the ceil(q*m)-th smallest (at least the first)."""
    m = sorted_values.size
    k = min(max(math.ceil(q * m - 1e-9), 1), m)
    return float(sorted_values[k - 1])


def resample_ratios(
    v: InstanceVolume, size: int, replace: bool, reps: int, seed: int
) -> np.ndarray:
    """Clipped ratios of ``reps`` pixel resamples; zero-denominator draws dropped.

    Resample ``i`` draws from its own generator seeded by ``(seed, i)``.
    """
    g_a, g_b = v.g_a, v.g_b
    n = v.n_pixels
    out = []
    for i in range(reps):
        rng = np.random.default_rng([seed, i])
        if replace:
            idx = rng.integers(0, n, size=size)
        else:
            idx = rng.choice(n, size=size, replace=False)
        # pixel order is irrelevant to the ratio; sorting makes frac=1 exact
        idx.sort()
        den = g_b[idx].sum()
        if den > 0:
            out.append(min(max(g_a[idx].sum() / den, 0.0), 1.0))
    return np.array(out)


def _interval(v, ratios, reps, lo_q, hi_q, method) -> IntervalEstimate:
    if ratios.size == 0 or ratios.size < math.ceil(reps / 2):
        raise EmptyDenominator(
            f"{v.id}: only {ratios.size} of {reps} resamples had a nonzero denominator"
        )
    ratios = np.sort(ratios)
    lower = nearest_rank(ratios, lo_q)
    upper = nearest_rank(ratios, hi_q)
    r_hat = point_ratio(v)
    # percentile intervals need not contain r_hat; widen minimally so they do
    return IntervalEstimate(r_hat, min(lower, r_hat), max(upper, r_hat), method)


def _check(reps, lo_q, hi_q):
    if reps < 2:
        raise ValueError("reps must be >= 2")
    if not 0 <= lo_q <= hi_q <= 1:
        raise ValueError("need 0 <= lo_q <= hi_q <= 1")


def bootstrap_interval(
    v: InstanceVolume,
    reps: int = DEFAULT_REPS,
    lo_q: float = DEFAULT_LO_Q,
    hi_q: float = DEFAULT_HI_Q,
    seed: int = 0,
) -> IntervalEstimate:
    _check(reps, lo_q, hi_q)
    ratios = resample_ratios(v, v.n_pixels, True, reps, seed)
    return _interval(v, ratios, reps, lo_q, hi_q, Method.BOOTSTRAP)


def subsample_interval(
    v: InstanceVolume,
    frac: float = DEFAULT_FRAC,
    reps: int = DEFAULT_REPS,
    lo_q: float = DEFAULT_LO_Q,
    hi_q: float = DEFAULT_HI_Q,
    seed: int = 0,
) -> IntervalEstimate:
    _check(reps, lo_q, hi_q)
    size = math.floor(frac * v.n_pixels)
    if size < 1 or frac > 1:
        raise ValueError(f"{v.id}: frac={frac} gives an empty subsample of {v.n_pixels} pixels")
    ratios = resample_ratios(v, size, False, reps, seed)
    return _interval(v, ratios, reps, lo_q, hi_q, Method.SUBSAMPLE)
