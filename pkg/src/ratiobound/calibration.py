"""Volume bias, binned calibration error and the calibration-based interval."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    Channel,
    EmptyCalibrationSet,
    InstanceVolume,
    Source,
    conformal_quantile,
)
from .estimators import clip01, point_ratio

DEFAULT_BINS = 15


@dataclass(frozen=True)
class BinnedCalibrationStats:
    n_bins: int
    bin_edges: np.ndarray
    bin_counts: np.ndarray
    bin_conf: np.ndarray
    bin_acc: np.ndarray


def bin_index(g: np.ndarray, n_bins: int) -> np.ndarray:
    """Equal-width bins on [0, 1]; bin b holds (b/K, (b+1)/K], 0 goes to bin 0."""
    idx = np.ceil(g * n_bins).astype(np.int64) - 1
    return np.clip(idx, 0, n_bins - 1)


def _gaps(v: InstanceVolume, channel: Channel) -> np.ndarray:
    g = v.pred(channel)
    y = v.label(channel)
    return g - y


def volume_bias(v: InstanceVolume, channel: Channel) -> float:
    """Mean of (prediction - label) over all pixels of one channel."""
    d = _gaps(v, channel)
    return math.fsum(d) / d.size


def ece(v: InstanceVolume, channel: Channel, n_bins: int = DEFAULT_BINS):
    """Equal-width binned ECE over all pixels of one channel.

    Returns ``(ece, stats)``. Sums are exact-rounded so that
    ``abs(volume_bias) <= ece`` holds in floating point, not only in exact arithmetic.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    g = v.pred(channel)
    y = v.label(channel)
    d = g - y
    idx = bin_index(g, n_bins)
    order = np.argsort(idx, kind="stable")
    counts = np.bincount(idx, minlength=n_bins)
    splits = np.cumsum(counts)[:-1]
    sign = np.zeros(n_bins)
    for b, chunk in enumerate(np.split(d[order], splits)):
        if chunk.size:
            sign[b] = np.sign(math.fsum(chunk))
    # sum_b |D_b| == sum_i sign(bin(i)) * d_i, exactly; one rounding at the end
    total = math.fsum(sign[idx] * d) / d.size

    with np.errstate(invalid="ignore", divide="ignore"):
        conf = np.bincount(idx, weights=g, minlength=n_bins) / counts
        acc = np.bincount(idx, weights=y.astype(np.float64), minlength=n_bins) / counts
    stats = BinnedCalibrationStats(
        n_bins=n_bins,
        bin_edges=np.linspace(0.0, 1.0, n_bins + 1),
        bin_counts=counts,
        bin_conf=conf,
        bin_acc=acc,
    )
    return total, stats


def instance_statistic(v: InstanceVolume, channel: Channel, source: Source, n_bins: int) -> float:
    if Source(source) is Source.VBIAS:
        return abs(volume_bias(v, channel))
    return ece(v, channel, n_bins)[0]


def instance_statistics(val: Sequence[InstanceVolume], source: Source, n_bins: int = DEFAULT_BINS):
    """Per-instance (stat_A, stat_B) arrays; computed once, requantiled per delta."""
    if len(val) == 0:
        raise EmptyCalibrationSet("validation set is empty")
    a = np.array([instance_statistic(v, Channel.A, source, n_bins) for v in val])
    b = np.array([instance_statistic(v, Channel.B, source, n_bins) for v in val])
    return a, b


def quantiles_from_statistics(stats_a, stats_b, delta: float) -> tuple[float, float]:
    level = 1.0 - delta / 2.0
    return conformal_quantile(stats_a, level), conformal_quantile(stats_b, level)


def fit_calibration_quantiles(
    val: Sequence[InstanceVolume],
    delta: float,
    source: Source = Source.VBIAS,
    n_bins: int = DEFAULT_BINS,
) -> tuple[float, float]:
    """Per-channel conformal quantile of |V-Bias| or ECE at level 1 - delta/2."""
    stats_a, stats_b = instance_statistics(val, source, n_bins)
    return quantiles_from_statistics(stats_a, stats_b, delta)


def calibration_bounds(sum_a: float, sum_b: float, n: int, q_a: float, q_b: float):
    """Ratio bounds from channel volumes shifted by per-pixel quantiles.

    Works on sums (``n * mean``) so that zero quantiles reproduce the point
    ratio bit-for-bit. Returns ``(lower, upper, degenerate)``.
    """
    if math.isinf(q_a) or math.isinf(q_b):
        return 0.0, 1.0, True
    lower, lo_flag = clip01((sum_a - n * q_a) / (sum_b + n * q_b))
    den = sum_b - n * q_b
    if den <= 0.0:
        upper, up_flag = 1.0, True
    else:
        upper, up_flag = clip01((sum_a + n * q_a) / den)
    return lower, upper, lo_flag or up_flag


def calibration_interval(v: InstanceVolume, q_a: float, q_b: float):
    """Half-widths ``(eps_l, eps_u, degenerate)`` around the point ratio."""
    r_hat = point_ratio(v)
    lower, upper, degenerate = calibration_bounds(
        float(np.sum(v.g_a)), float(np.sum(v.g_b)), v.n_pixels, q_a, q_b
    )
    # keep r_hat inside its own interval when clipping moved a bound past it
    lower = min(lower, r_hat)
    upper = max(upper, r_hat)
    return r_hat - lower, upper - r_hat, degenerate
