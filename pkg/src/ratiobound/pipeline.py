"""Combined estimation + calibration intervals, budget grid search, alarms."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import baselines
from .calibration import DEFAULT_BINS, instance_statistics, quantiles_from_statistics
from .conformal import (
    AcqrFit,
    UncertaintyKind,
    UncertaintySpec,
    acqr_predict,
    cqr_interval,
    fit_acqr,
    fit_cqr,
)
from .core import (
    BadConfidenceBudget,
    CalibrationProfile,
    Channel,
    EmptyCalibrationSet,
    InstanceVolume,
    IntervalEstimate,
    LabelsRequired,
    Method,
    ProfileMismatch,
    Source,
    soft_volume,
)
from .estimators import (
    labeled_ratio,
    markov_interval,
    point_ratio,
    ratio_moments,
    squared_error_estimate,
)

log = logging.getLogger(__name__)

_BUDGET_TOL = 1e-12


@dataclass(frozen=True)
class BudgetSplit:
    alpha: float
    delta: float
    confidence: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.delta > 0 and self.alpha + self.delta < 1):
            raise BadConfidenceBudget(f"invalid split alpha={self.alpha}, delta={self.delta}")
        if abs(self.alpha + self.delta - (1.0 - self.confidence)) > _BUDGET_TOL:
            raise BadConfidenceBudget("alpha + delta must equal 1 - confidence")

    @classmethod
    def from_alpha(cls, alpha: float, confidence: float) -> "BudgetSplit":
        # rounding keeps grid values like 0.32 - 0.12 printable as 0.2
        return cls(alpha, round((1.0 - confidence) - alpha, 12), confidence)


@dataclass(frozen=True)
class Summary:
    """Per-instance quantities every interval method needs."""

    sum_a: float
    sum_b: float
    n: int
    r_hat: float
    se: float
    size: float
    r_gt: Optional[float] = None


def summarize(v: InstanceVolume) -> Summary:
    sum_a = float(np.sum(v.g_a))
    sum_b = float(np.sum(v.g_b))
    r_gt = labeled_ratio(v) if v.has_labels else None
    se = squared_error_estimate(ratio_moments(v)) if v.n_pixels >= 2 else 0.0
    return Summary(sum_a, sum_b, v.n_pixels, point_ratio(v), se, soft_volume(v, Channel.B), r_gt)


def care_bounds(sum_a, sum_b, n, r_hat, se, q_a, q_b, alpha):
    """Vectorized combined bounds.

    Returns ``(lower, upper, cal_lower, cal_upper, beta, degenerate)``; the
    calibration bounds are already clipped and widened to contain r_hat.
    """
    sum_a, sum_b, n, r_hat, se = (np.asarray(a, dtype=np.float64) for a in (sum_a, sum_b, n, r_hat, se))
    beta = np.sqrt(se) / math.sqrt(alpha)
    if math.isinf(q_a) or math.isinf(q_b):
        cal_lo = np.zeros_like(r_hat)
        cal_up = np.ones_like(r_hat)
        degenerate = np.ones(r_hat.shape, dtype=bool)
    else:
        raw_lo = (sum_a - n * q_a) / (sum_b + n * q_b)
        den = sum_b - n * q_b
        with np.errstate(divide="ignore", invalid="ignore"):
            raw_up = np.where(den > 0, (sum_a + n * q_a) / np.where(den > 0, den, 1.0), np.inf)
        degenerate = (raw_lo < 0) | (raw_lo > 1) | (raw_up < 0) | (raw_up > 1)
        cal_lo = np.minimum(np.clip(raw_lo, 0.0, 1.0), r_hat)
        cal_up = np.maximum(np.clip(raw_up, 0.0, 1.0), r_hat)
    raw_lower = cal_lo - beta
    raw_upper = cal_up + beta
    degenerate = degenerate | (raw_lower < 0) | (raw_upper > 1)
    return (
        np.clip(raw_lower, 0.0, 1.0),
        np.clip(raw_upper, 0.0, 1.0),
        cal_lo,
        cal_up,
        beta,
        degenerate,
    )


def _care_method(source: Source) -> Method:
    return Method.CARE_VBIAS if Source(source) is Source.VBIAS else Method.CARE_ECE


def care_interval(v: InstanceVolume, profile: CalibrationProfile, split: BudgetSplit) -> IntervalEstimate:
    if not math.isclose(profile.delta, split.delta, rel_tol=0.0, abs_tol=_BUDGET_TOL):
        raise ProfileMismatch(
            f"profile fitted at delta={profile.delta}, split asks for delta={split.delta}"
        )
    return _care_from_summary(summarize(v), profile.q_a, profile.q_b, profile.source, split)


def _care_from_summary(s: Summary, q_a, q_b, source, split: BudgetSplit) -> IntervalEstimate:
    lower, upper, _, _, _, degenerate = care_bounds(
        s.sum_a, s.sum_b, s.n, s.r_hat, s.se, q_a, q_b, split.alpha
    )
    return IntervalEstimate(
        r_hat=s.r_hat,
        lower=float(lower),
        upper=float(upper),
        method=_care_method(source),
        alpha=split.alpha,
        delta=split.delta,
        degenerate=bool(degenerate),
    )


def candidate_splits(confidence: float, grid_step: float) -> List[BudgetSplit]:
    """All (alpha, delta) with alpha on the step grid and both parts positive."""
    if not 0 < confidence < 1:
        raise BadConfidenceBudget("confidence must lie in (0, 1)")
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    budget = 1.0 - confidence
    splits = []
    k = 1
    while budget - k * grid_step > 1e-9:
        splits.append(BudgetSplit.from_alpha(round(k * grid_step, 12), confidence))
        k += 1
    if not splits:
        raise BadConfidenceBudget(f"grid_step {grid_step} leaves no room in budget {budget}")
    return splits


@dataclass
class GridCandidate:
    split: BudgetSplit
    q_a: float
    q_b: float
    coverage: float
    mean_width: float


@dataclass
class GridSearchResult:
    split: BudgetSplit
    candidates: List[GridCandidate]
    flagged: bool = False

    @property
    def chosen(self) -> GridCandidate:
        return next(c for c in self.candidates if c.split == self.split)


def _arrays(summaries: Sequence[Summary]):
    return (
        np.array([s.sum_a for s in summaries]),
        np.array([s.sum_b for s in summaries]),
        np.array([s.n for s in summaries], dtype=np.float64),
        np.array([s.r_hat for s in summaries]),
        np.array([s.se for s in summaries]),
    )


def evaluate_splits(summaries, stats_a, stats_b, splits) -> List[GridCandidate]:
    arrays = _arrays(summaries)
    r_gt = np.array([s.r_gt for s in summaries], dtype=np.float64)
    out = []
    for split in splits:
        q_a, q_b = quantiles_from_statistics(stats_a, stats_b, split.delta)
        lower, upper, *_ = care_bounds(*arrays, q_a, q_b, split.alpha)
        covered = (lower <= r_gt) & (r_gt <= upper)
        out.append(
            GridCandidate(split, q_a, q_b, float(covered.mean()), float(np.mean(upper - lower)))
        )
    return out


def grid_search(
    val: Sequence[InstanceVolume],
    confidence: float = 0.68,
    grid_step: float = 0.02,
    source: Source = Source.VBIAS,
    n_bins: int = DEFAULT_BINS,
    *,
    _summaries: Optional[Sequence[Summary]] = None,
    _stats=None,
) -> GridSearchResult:
    """Narrowest (alpha, delta) split whose validation coverage reaches the target.

    Falls back to the highest-coverage split (flagged) when none qualifies.
    """
    if len(val) == 0:
        raise EmptyCalibrationSet("validation set is empty")
    summaries = _summaries if _summaries is not None else [summarize(v) for v in val]
    if any(s.r_gt is None for s in summaries):
        raise LabelsRequired("grid search needs labeled validation instances")
    stats_a, stats_b = _stats if _stats is not None else instance_statistics(val, source, n_bins)
    candidates = evaluate_splits(summaries, stats_a, stats_b, candidate_splits(confidence, grid_step))

    qualified = [c for c in candidates if c.coverage >= confidence]
    if qualified:
        best = min(qualified, key=lambda c: c.mean_width)
        return GridSearchResult(best.split, candidates, flagged=False)
    log.warning("no split reaches coverage %.3f on validation; using max-coverage split", confidence)
    best = max(candidates, key=lambda c: (c.coverage, -c.mean_width))
    return GridSearchResult(best.split, candidates, flagged=True)


def fit_profile(
    val: Sequence[InstanceVolume],
    confidence: float = 0.68,
    source: Source = Source.VBIAS,
    n_bins: int = DEFAULT_BINS,
    grid_step: float = 0.02,
    split: Optional[BudgetSplit] = None,
    acqr_kind: UncertaintyKind = UncertaintyKind.SIZE_SCALED,
    v_t_max: Optional[float] = None,
    voxel_volume: float = 0.0,
    epsilon: float = 1e-6,
) -> CalibrationProfile:
    """Fit everything a test-time interval needs from one labeled validation set.

    With ``split`` given the grid search is skipped and that split is used.
    """
    if len(val) == 0:
        raise EmptyCalibrationSet("validation set is empty")
    summaries = [summarize(v) for v in val]
    stats = instance_statistics(val, source, n_bins)
    flags = []
    if split is None:
        result = grid_search(
            val, confidence, grid_step, source, n_bins, _summaries=summaries, _stats=stats
        )
        split = result.split
        if result.flagged:
            flags.append("grid_no_qualifying_split")
    q_a, q_b = quantiles_from_statistics(*stats, split.delta)

    budget = 1.0 - confidence
    pairs = [(s.r_gt, s.r_hat) for s in summaries]
    q_residual = fit_cqr(pairs, budget)
    if v_t_max is None:
        v_t_max = max(s.size for s in summaries)
    acqr_kind = UncertaintyKind(acqr_kind)
    spec = UncertaintySpec(acqr_kind, v_t_max, voxel_volume, epsilon)
    fit = fit_acqr([(s.r_gt, s.r_hat, v) for s, v in zip(summaries, val)], budget, spec)
    if fit.degenerate:
        flags.append("acqr_lambda_fallback")
    return CalibrationProfile(
        q_a=q_a,
        q_b=q_b,
        source=source,
        q_residual=q_residual,
        q_score=fit.q_score,
        v_t_max=v_t_max,
        delta=split.delta,
        n_val=len(val),
        alpha=split.alpha,
        confidence=confidence,
        n_bins=n_bins,
        acqr_lambda=fit.lam,
        acqr_kind=acqr_kind.value,
        voxel_volume=voxel_volume,
        epsilon=epsilon,
        grid_step=grid_step,
        flags=tuple(flags),
    )


def profile_split(profile: CalibrationProfile) -> BudgetSplit:
    return BudgetSplit(profile.alpha, profile.delta, 1.0 - profile.alpha - profile.delta)


def profile_uncertainty_spec(profile: CalibrationProfile) -> UncertaintySpec:
    return UncertaintySpec(profile.acqr_kind, profile.v_t_max, profile.voxel_volume, profile.epsilon)


METHOD_NAMES = (
    "cqr",
    "acqr",
    "acqr_unit",
    "care_vbias",
    "care_ece",
    "markov",
    "bootstrap",
    "subsample",
)


def predict(
    v: InstanceVolume,
    method: str,
    profile: Optional[CalibrationProfile] = None,
    seed: int = 0,
) -> IntervalEstimate:
    """Interval for one instance by CLI method name."""
    method = method.lower()
    if method == "bootstrap":
        return baselines.bootstrap_interval(v, seed=seed)
    if method == "subsample":
        return baselines.subsample_interval(v, seed=seed)
    if profile is None:
        raise ValueError(f"method {method!r} needs a fitted profile")
    budget = 1.0 - profile.confidence
    r_hat = point_ratio(v)
    if method == "cqr":
        return cqr_interval(r_hat, profile.q_residual, delta=budget)
    if method == "acqr_unit":
        unit = AcqrFit(q_score=profile.q_residual, lam=1.0)
        return acqr_predict(v, r_hat, UncertaintySpec(UncertaintyKind.UNIT), unit, budget)
    if method == "acqr":
        fit = AcqrFit(q_score=profile.q_score, lam=profile.acqr_lambda)
        return acqr_predict(v, r_hat, profile_uncertainty_spec(profile), fit, budget)
    if method in ("care_vbias", "care_ece"):
        wanted = Source.VBIAS if method == "care_vbias" else Source.ECE
        if profile.source is not wanted:
            raise ProfileMismatch(f"{method} needs a {wanted.value} profile, got {profile.source.value}")
        return care_interval(v, profile, profile_split(profile))
    if method == "markov":
        se = squared_error_estimate(ratio_moments(v))
        return markov_interval(r_hat, se, profile.alpha)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class Decomposition:
    i_est: float
    i_vbias: float
    i_ece: float
    i_overall: float


def decompose_uncertainty(
    v: InstanceVolume,
    profile_vbias: CalibrationProfile,
    profile_ece: CalibrationProfile,
    split: BudgetSplit,
) -> Decomposition:
    """Widths of the estimation-only, calibration-only and combined intervals.

    The combined interval uses the ECE profile.
    """
    for p, src in ((profile_vbias, Source.VBIAS), (profile_ece, Source.ECE)):
        if p.source is not src:
            raise ProfileMismatch(f"expected a {src.value} profile, got {p.source.value}")
        if not math.isclose(p.delta, split.delta, rel_tol=0.0, abs_tol=_BUDGET_TOL):
            raise ProfileMismatch(
                f"{src.value} profile was fitted at delta={p.delta}, split has delta={split.delta}; "
                "fit both profiles with the same alpha"
            )
    s = summarize(v)
    i_est = markov_interval(s.r_hat, s.se, split.alpha).width
    widths = {}
    for name, p in (("vbias", profile_vbias), ("ece", profile_ece)):
        lower, upper, cal_lo, cal_up, _, _ = care_bounds(
            s.sum_a, s.sum_b, s.n, s.r_hat, s.se, p.q_a, p.q_b, split.alpha
        )
        widths[name] = float(cal_up - cal_lo)
        widths[name + "_overall"] = float(upper - lower)
    return Decomposition(i_est, widths["vbias"], widths["ece"], widths["ece_overall"])


class Alarm(str, enum.Enum):
    CLEAR_BELOW = "CLEAR_BELOW"
    CLEAR_ABOVE = "CLEAR_ABOVE"
    REVIEW = "REVIEW"


def threshold_alarm(interval: IntervalEstimate, threshold: float) -> Alarm:
    """REVIEW when the interval touches or straddles the clinical threshold."""
    if interval.lower <= threshold <= interval.upper:
        return Alarm.REVIEW
    if interval.upper < threshold:
        return Alarm.CLEAR_BELOW
    return Alarm.CLEAR_ABOVE
