"""Residual split-conformal (CQR) and size-adaptive (ACQR) baselines."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

from .core import (
    Channel,
    EmptyCalibrationSet,
    InstanceVolume,
    IntervalEstimate,
    Method,
    conformal_quantile,
    soft_volume,
)
from .estimators import clip01

log = logging.getLogger(__name__)


class UncertaintyKind(str, enum.Enum):
    UNIT = "UNIT"
    SIZE_SCALED = "SIZE_SCALED"
    SIZE_NO_LAMBDA = "SIZE_NO_LAMBDA"
    VOXEL_FRACTION = "VOXEL_FRACTION"


@dataclass(frozen=True)
class UncertaintySpec:
    kind: UncertaintyKind = UncertaintyKind.UNIT
    v_t_max: float = 0.0
    voxel_volume: float = 0.0
    epsilon: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "kind", UncertaintyKind(self.kind))
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.kind in (UncertaintyKind.SIZE_SCALED, UncertaintyKind.SIZE_NO_LAMBDA):
            if not self.v_t_max > 0:
                raise ValueError(f"{self.kind.value} needs v_t_max > 0")
        if self.kind is UncertaintyKind.VOXEL_FRACTION and not self.voxel_volume > 0:
            raise ValueError("VOXEL_FRACTION needs voxel_volume > 0")


@dataclass(frozen=True)
class AcqrFit:
    q_score: float
    lam: float
    degenerate: bool = False


def fit_cqr(val_pairs: Sequence[Tuple[float, float]], delta: float) -> float:
    """Conformal quantile of |r_gt - r_hat| at level 1 - delta."""
    if len(val_pairs) == 0:
        raise EmptyCalibrationSet("validation set is empty")
    residuals = [abs(r_gt - r_hat) for r_gt, r_hat in val_pairs]
    return conformal_quantile(residuals, 1.0 - delta)


def _symmetric(r_hat: float, half_width: float, method: Method, delta: float) -> IntervalEstimate:
    if math.isinf(half_width):
        return IntervalEstimate(r_hat, 0.0, 1.0, method, delta=delta, degenerate=True)
    lower, lo_flag = clip01(r_hat - half_width)
    upper, up_flag = clip01(r_hat + half_width)
    return IntervalEstimate(r_hat, lower, upper, method, delta=delta, degenerate=lo_flag or up_flag)


def cqr_interval(r_hat: float, q_residual: float, delta: float = 0.0) -> IntervalEstimate:
    return _symmetric(r_hat, q_residual, Method.CQR, delta)


def uncertainty_measure(
    v: InstanceVolume,
    spec: UncertaintySpec,
    q_score_for_lambda: Optional[float] = None,
) -> float:
    """Size-based uncertainty u(x) > 0; small predicted tumors get larger u."""
    kind = spec.kind
    if kind is UncertaintyKind.UNIT:
        return 1.0
    v_t = soft_volume(v, Channel.B)
    if kind is UncertaintyKind.VOXEL_FRACTION:
        u = 1.0 - v_t / (spec.voxel_volume / 8.0)
    else:
        u = 1.0 - v_t / (spec.v_t_max + spec.epsilon)
        if kind is UncertaintyKind.SIZE_SCALED:
            if q_score_for_lambda is None:
                raise ValueError("SIZE_SCALED needs the fitted score quantile")
            u *= size_lambda(q_score_for_lambda)
    return max(u, spec.epsilon)


def size_lambda(q_score: float) -> float:
    """Scale making the widest (zero-size) interval span exactly [0, 1]."""
    if q_score <= 0 or math.isinf(q_score):
        return 1.0
    return 1.0 / (2.0 * q_score)


def fit_acqr(
    val: Sequence[Tuple[float, float, InstanceVolume]],
    delta: float,
    spec: UncertaintySpec,
) -> AcqrFit:
    """Fit the ACQR score quantile (and lambda for SIZE_SCALED).

    Scores are computed with lambda = 1 first; lambda is then set from that
    quantile. The interval product u * q therefore keeps the size profile
    and reaches width 1 at zero predicted size.
    """
    if len(val) == 0:
        raise EmptyCalibrationSet("validation set is empty")
    base = spec
    if spec.kind is UncertaintyKind.SIZE_SCALED:
        base = UncertaintySpec(
            UncertaintyKind.SIZE_NO_LAMBDA, spec.v_t_max, spec.voxel_volume, spec.epsilon
        )
    scores = [abs(r_gt - r_hat) / uncertainty_measure(v, base) for r_gt, r_hat, v in val]
    q_raw = conformal_quantile(scores, 1.0 - delta)
    if spec.kind is not UncertaintyKind.SIZE_SCALED:
        return AcqrFit(q_score=q_raw, lam=1.0)
    if q_raw == 0.0 or math.isinf(q_raw):
        log.warning("ACQR score quantile is %s; falling back to lambda = 1", q_raw)
        return AcqrFit(q_score=q_raw, lam=1.0, degenerate=True)
    return AcqrFit(q_score=q_raw, lam=size_lambda(q_raw))


def acqr_interval(
    r_hat: float, u: float, q_score: float, delta: float = 0.0, method: Method = Method.ACQR
) -> IntervalEstimate:
    if not u > 0:
        raise ValueError("uncertainty measure must be positive")
    if math.isinf(q_score):
        return _symmetric(r_hat, math.inf, method, delta)
    return _symmetric(r_hat, u * q_score, method, delta)


def acqr_predict(
    v: InstanceVolume, r_hat: float, spec: UncertaintySpec, fit: AcqrFit, delta: float = 0.0
) -> IntervalEstimate:
    """ACQR interval; the UNIT measure reduces to CQR and is tagged as such."""
    u = uncertainty_measure(v, spec, fit.q_score)
    method = Method.CQR if spec.kind is UncertaintyKind.UNIT else Method.ACQR
    return acqr_interval(r_hat, u, fit.q_score, delta, method)
