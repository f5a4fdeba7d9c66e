"""Point ratio, squared-error estimate, Markov interval and debiased ratio.

Throughout, ``x`` is the denominator channel (``g_b``) and ``y`` the
numerator channel (``g_a``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    BadConfidenceBudget,
    EmptyDenominator,
    InstanceVolume,
    IntervalEstimate,
    Method,
    TooFewPixels,
)


@dataclass(frozen=True)
class RatioMoments:
    mean_x: float
    mean_y: float
    var_x: float
    var_y: float
    cov_xy: float
    cov_x2_x: float
    cov_x2_y: float
    cov_y2_x: float
    n: int


def clip01(value: float) -> tuple[float, bool]:
    """Clip to [0, 1]; the flag reports whether clipping (or a NaN) fired."""
    if not value == value:  # NaN
        return 0.0, True
    if value < 0.0:
        return 0.0, True
    if value > 1.0:
        return 1.0, True
    return float(value), False


def point_ratio(v: InstanceVolume) -> float:
    den = float(np.sum(v.g_b))
    if den <= 0.0:
        raise EmptyDenominator(f"{v.id}: predicted denominator volume is zero")
    return clip01(float(np.sum(v.g_a)) / den)[0]


def labeled_ratio(v: InstanceVolume) -> float:
    y_a = v.label("A")
    y_b = v.label("B")
    den = int(np.count_nonzero(y_b))
    if den == 0:
        raise EmptyDenominator(f"{v.id}: labeled denominator region is empty")
    return int(np.count_nonzero(y_a)) / den


def _cov(u: np.ndarray, w: np.ndarray) -> float:
    n = u.size
    return float(np.dot(u - u.mean(), w - w.mean()) / (n - 1))


def ratio_moments(v: InstanceVolume) -> RatioMoments:
    n = v.n_pixels
    if n < 2:
        raise TooFewPixels(f"{v.id}: need at least 2 pixels for sample moments")
    x = v.g_b
    y = v.g_a
    x2 = x * x
    return RatioMoments(
        mean_x=float(x.mean()),
        mean_y=float(y.mean()),
        var_x=_cov(x, x),
        var_y=_cov(y, y),
        cov_xy=_cov(x, y),
        cov_x2_x=_cov(x2, x),
        cov_x2_y=_cov(x2, y),
        cov_y2_x=_cov(y * y, x),
        n=n,
    )


def squared_error_estimate(m: RatioMoments) -> float:
    """Delta-method estimate of E[(r_hat - r)^2], floored at zero."""
    if m.mean_x <= 0.0:
        raise EmptyDenominator("mean of the denominator channel must be positive")
    mx, my = m.mean_x, m.mean_y
    se = (
        m.var_y / mx**2
        + m.var_x * my**2 / mx**4
        - 2.0 * m.cov_xy * my / mx**3
    ) / m.n
    return max(se, 0.0)


def markov_half_width(se: float, alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise BadConfidenceBudget(f"alpha must lie in (0, 1), got {alpha}")
    if se < 0:
        raise ValueError("squared error must be nonnegative")
    return math.sqrt(se) / math.sqrt(alpha)


def markov_interval(r_hat: float, se: float, alpha: float) -> IntervalEstimate:
    beta = markov_half_width(se, alpha)
    lower, lo_clip = clip01(r_hat - beta)
    upper, up_clip = clip01(r_hat + beta)
    return IntervalEstimate(
        r_hat=r_hat,
        lower=lower,
        upper=upper,
        method=Method.MARKOV_ONLY,
        alpha=alpha,
        delta=0.0,
        degenerate=lo_clip or up_clip,
    )


def debiased_ratio(v: InstanceVolume) -> float:
    """Second-order bias-corrected ratio (unclipped diagnostic value).

    Corrects the naive ratio for its O(1/n) and O(1/n^2) bias terms, with
    the O(1/n) plug-ins themselves corrected for their own small-sample bias.
    """
    if v.n_pixels < 3:
        raise TooFewPixels(f"{v.id}: need at least 3 pixels")
    m = ratio_moments(v)
    if m.mean_x <= 0.0:
        raise EmptyDenominator(f"{v.id}: predicted denominator volume is zero")
    if m.mean_y == 0.0:
        # numerator identically zero: every correction term vanishes with it
        return 0.0
    n = m.n
    mx, my = m.mean_x, m.mean_y
    vx, vy, cxy = m.var_x, m.var_y, m.cov_xy

    r_a = cxy / (mx * my)
    r_b = vx / mx**2
    # r_a * (stuff / cov_xy) expanded so that a zero covariance never divides
    r_a_star = (
        r_a
        + ((my * m.cov_x2_y + mx * m.cov_y2_x) / (mx**2 * my**2) - 4.0 * r_a) / (n - 1)
        - r_a * (vx / mx**2 + vy / my**2 + 2.0 * r_a) / (n - 1)
    )
    r_b_star = (
        r_b
        + 4.0 * (0.5 * m.cov_x2_x / mx**3 - r_b) / (n - 1)
        - 4.0 * r_b * r_b / (n - 1)
    )
    second = (
        (m.cov_x2_y - 2.0 * mx * cxy) / (mx**2 * my)
        - (m.cov_x2_x - 2.0 * mx * vx) / mx**3
        - 3.0 * vx * cxy / (mx**3 * my)
        + 3.0 * vx**2 / mx**4
    )
    return (my / mx) * (1.0 - (r_b_star - r_a_star) / n - second / n**2)


def debiased_ratio_clipped(v: InstanceVolume) -> float:
    return clip01(debiased_ratio(v))[0]
