"""Shared value types, errors and the conformal rank rule."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

# Slack on ceil((n+1)*level) so that products like 5 * 0.84 = 4.2000000000000002
# don't bump the rank when the exact value is an integer.
_RANK_EPS = 1e-9


class RatioBoundError(ValueError):
    """Base class for all library errors."""


class EmptyCalibrationSet(RatioBoundError):
    pass


class EmptyDenominator(RatioBoundError):
    pass


class EmptyTestSet(RatioBoundError):
    pass


class LabelsRequired(RatioBoundError):
    pass


class TooFewPixels(RatioBoundError):
    pass


class BadConfidenceBudget(RatioBoundError):
    pass


class ProfileMismatch(RatioBoundError):
    pass


class ConfigError(RatioBoundError):
    pass


class FormatError(RatioBoundError):
    pass


class CorruptVolume(FormatError):
    pass


class Channel(str, enum.Enum):
    A = "A"
    B = "B"


class Method(str, enum.Enum):
    CQR = "CQR"
    ACQR = "ACQR"
    CARE_VBIAS = "CARE_VBIAS"
    CARE_ECE = "CARE_ECE"
    MARKOV_ONLY = "MARKOV_ONLY"
    BOOTSTRAP = "BOOTSTRAP"
    SUBSAMPLE = "SUBSAMPLE"


METHOD_ORDER = {m: i for i, m in enumerate(Method)}


class Source(str, enum.Enum):
    VBIAS = "VBIAS"
    ECE = "ECE"


@dataclass(frozen=True, eq=False)
class InstanceVolume:
    """Per-pixel predictions (and optionally labels) for one case.

    ``g_a``/``y_a`` belong to the sub-region (numerator), ``g_b``/``y_b`` to
    the enclosing region (denominator). Pixels are a flat sequence.
    """

    id: str
    g_a: np.ndarray
    g_b: np.ndarray
    y_a: Optional[np.ndarray] = None
    y_b: Optional[np.ndarray] = None
    meta: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        g_a = np.asarray(self.g_a, dtype=np.float64)
        g_b = np.asarray(self.g_b, dtype=np.float64)
        if g_a.ndim != 1 or g_a.shape != g_b.shape:
            raise ValueError(f"{self.id}: g_a and g_b must be 1-d with equal length")
        if g_a.size < 1:
            raise ValueError(f"{self.id}: an instance needs at least one pixel")
        for name, g in (("g_a", g_a), ("g_b", g_b)):
            if not np.all((g >= 0.0) & (g <= 1.0)):
                raise ValueError(f"{self.id}: {name} must lie in [0, 1]")
        if (self.y_a is None) != (self.y_b is None):
            raise ValueError(f"{self.id}: provide both label channels or neither")
        y_a = y_b = None
        if self.y_a is not None:
            y_a = np.asarray(self.y_a)
            y_b = np.asarray(self.y_b)
            if y_a.shape != g_a.shape or y_b.shape != g_a.shape:
                raise ValueError(f"{self.id}: label length differs from n_pixels")
            for name, y in (("y_a", y_a), ("y_b", y_b)):
                if not np.all((y == 0) | (y == 1)):
                    raise ValueError(f"{self.id}: {name} must be 0/1")
            y_a = y_a.astype(np.uint8)
            y_b = y_b.astype(np.uint8)
            if np.any(y_a > y_b):
                raise ValueError(f"{self.id}: region A must lie inside region B")
            y_a.setflags(write=False)
            y_b.setflags(write=False)
        g_a.setflags(write=False)
        g_b.setflags(write=False)
        object.__setattr__(self, "g_a", g_a)
        object.__setattr__(self, "g_b", g_b)
        object.__setattr__(self, "y_a", y_a)
        object.__setattr__(self, "y_b", y_b)
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def n_pixels(self) -> int:
        return int(self.g_a.size)

    @property
    def has_labels(self) -> bool:
        return self.y_a is not None

    def pred(self, channel: Channel) -> np.ndarray:
        return self.g_a if Channel(channel) is Channel.A else self.g_b

    def label(self, channel: Channel) -> np.ndarray:
        if not self.has_labels:
            raise LabelsRequired(f"{self.id}: labels required")
        return self.y_a if Channel(channel) is Channel.A else self.y_b

    def __eq__(self, other):
        if not isinstance(other, InstanceVolume):
            return NotImplemented
        same_labels = (self.y_a is None and other.y_a is None) or (
            self.has_labels
            and other.has_labels
            and np.array_equal(self.y_a, other.y_a)
            and np.array_equal(self.y_b, other.y_b)
        )
        return (
            self.id == other.id
            and np.array_equal(self.g_a, other.g_a)
            and np.array_equal(self.g_b, other.g_b)
            and same_labels
        )

    __hash__ = None


@dataclass(frozen=True)
class IntervalEstimate:
    r_hat: float
    lower: float
    upper: float
    method: Method
    alpha: float = 0.0
    delta: float = 0.0
    degenerate: bool = False

    def __post_init__(self):
        if not (0.0 <= self.lower <= self.r_hat <= self.upper <= 1.0):
            raise ValueError(
                f"interval must satisfy 0 <= lower <= r_hat <= upper <= 1, got "
                f"{self.lower}, {self.r_hat}, {self.upper}"
            )
        if not (0.0 <= self.alpha < 1 and 0.0 <= self.delta < 1 and self.alpha + self.delta < 1):
            raise BadConfidenceBudget(f"bad budget alpha={self.alpha}, delta={self.delta}")
        object.__setattr__(self, "method", Method(self.method))

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class CalibrationProfile:
    """Fitted validation state reused at test time.

    Quantiles may be ``inf`` when the validation set is too small for the
    requested level; interval builders turn that into a full-width interval.
    """

    q_a: float
    q_b: float
    source: Source
    q_residual: float
    q_score: float
    v_t_max: float
    delta: float
    n_val: int
    alpha: float = 0.0
    confidence: float = 0.68
    n_bins: int = 15
    acqr_lambda: float = 1.0
    acqr_kind: str = "SIZE_SCALED"
    voxel_volume: float = 0.0
    epsilon: float = 1e-6
    grid_step: float = 0.02
    flags: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "source", Source(self.source))
        for name in ("q_a", "q_b", "q_residual", "q_score", "v_t_max"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.n_val < 1:
            raise ValueError("n_val must be >= 1")
        object.__setattr__(self, "flags", tuple(self.flags))


def conformal_quantile(values: Sequence[float], level: float) -> float:
    """Return the ``ceil((n+1)*level)``-th smallest value.

    Returns ``inf`` when that rank exceeds ``n``; callers map this to a
    full-width interval.
    """
    arr = np.asarray(values, dtype=np.float64).ravel()
    n = arr.size
    if n == 0:
        raise EmptyCalibrationSet("cannot take a quantile of an empty set")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    k = math.ceil((n + 1) * level - _RANK_EPS)
    if k > n:
        return math.inf
    k = max(k, 1)
    return float(np.partition(arr, k - 1)[k - 1])


def soft_volume(v: InstanceVolume, channel: Channel) -> float:
    """Sum of predicted probabilities of one channel."""
    return float(np.sum(v.pred(channel)))
