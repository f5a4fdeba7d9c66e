"""Coverage, width and error metrics, overall and by size tercile."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    METHOD_ORDER,
    CalibrationProfile,
    Channel,
    EmptyTestSet,
    InstanceVolume,
    IntervalEstimate,
    Method,
    soft_volume,
)
from .estimators import labeled_ratio

log = logging.getLogger(__name__)

STRATUM_LABELS = ("S", "M", "L")

Pair = Tuple[IntervalEstimate, float]


@dataclass(frozen=True)
class Stratum:
    label: str
    n: int
    coverage: float
    mean_width: float
    mse_r: float


@dataclass(frozen=True)
class CoverageReport:
    method: Method
    n: int
    coverage: float
    mean_width: float
    median_width: float
    mse_r: float
    strata: Tuple[Stratum, ...] = ()

    def stratum(self, label: str) -> Stratum:
        return next(s for s in self.strata if s.label == label)


def _check(pairs) -> None:
    if len(pairs) == 0:
        raise EmptyTestSet("no test pairs")


def coverage_rate(pairs: Sequence[Pair]) -> float:
    """Fraction of pairs whose truth lies in the closed interval."""
    _check(pairs)
    return sum(1 for est, r in pairs if est.covers(r)) / len(pairs)


def mean_width(pairs: Sequence[Pair]) -> float:
    _check(pairs)
    return float(np.mean([est.width for est, _ in pairs]))


def mse_r(pairs: Sequence[Pair]) -> float:
    _check(pairs)
    return float(np.mean([(est.r_hat - r) ** 2 for est, r in pairs]))


def size_strata(sizes: Sequence[float]) -> List[str]:
    """S/M/L labels from the 1/3 and 2/3 quantiles; boundary ties go down."""
    sizes = np.asarray(sizes, dtype=np.float64)
    if sizes.size < 3:
        log.warning("fewer than 3 instances; using a single stratum")
        return ["L"] * sizes.size
    t1, t2 = np.quantile(sizes, [1 / 3, 2 / 3])
    return ["S" if s <= t1 else "M" if s <= t2 else "L" for s in sizes]


def stratify_by_size(
    instances: Sequence[InstanceVolume], pairs: Sequence[Pair]
) -> Tuple[Stratum, ...]:
    if len(instances) != len(pairs):
        raise ValueError("instances and pairs must align")
    _check(pairs)
    labels = size_strata([soft_volume(v, Channel.B) for v in instances])
    out = []
    for label in STRATUM_LABELS:
        sub = [p for p, lab in zip(pairs, labels) if lab == label]
        if sub:
            out.append(Stratum(label, len(sub), coverage_rate(sub), mean_width(sub), mse_r(sub)))
    return tuple(out)


def coverage_report(
    instances: Sequence[InstanceVolume], pairs: Sequence[Pair], method: Optional[Method] = None
) -> CoverageReport:
    _check(pairs)
    if method is None:
        method = pairs[0][0].method
    widths = [est.width for est, _ in pairs]
    return CoverageReport(
        method=Method(method),
        n=len(pairs),
        coverage=coverage_rate(pairs),
        mean_width=float(np.mean(widths)),
        median_width=float(np.median(widths)),
        mse_r=mse_r(pairs),
        strata=stratify_by_size(instances, pairs),
    )


def compare_methods(
    instances: Sequence[InstanceVolume],
    methods: Sequence[Tuple[str, Optional[CalibrationProfile]]],
    truth: Callable[[InstanceVolume], float] = labeled_ratio,
    seed: int = 0,
) -> List[CoverageReport]:
    """One report per ``(method name, profile)`` over the same instances.

    Reports are ordered by the reported method tag, then by input order.
    """
    from .pipeline import predict

    if len(instances) == 0:
        raise EmptyTestSet("no test instances")
    truths = [truth(v) for v in instances]
    reports = []
    for name, profile in methods:
        pairs = [(predict(v, name, profile, seed), t) for v, t in zip(instances, truths)]
        reports.append(coverage_report(instances, pairs))
    order = sorted(range(len(reports)), key=lambda i: (METHOD_ORDER[reports[i].method], i))
    return [reports[i] for i in order]


def reports_from_results(
    instances: Sequence[InstanceVolume],
    results: Dict[str, IntervalEstimate],
    truth: Callable[[InstanceVolume], float] = labeled_ratio,
) -> List[CoverageReport]:
    """Group a results table by method tag and report each group."""
    by_id = {v.id: v for v in instances}
    missing = sorted(set(results) - set(by_id))
    if missing:
        raise KeyError(f"results mention unknown instance {missing[0]}")
    groups: Dict[Method, list] = {}
    for id in sorted(results):
        groups.setdefault(results[id].method, []).append(id)
    reports = []
    for method in sorted(groups, key=METHOD_ORDER.get):
        ids = groups[method]
        vols = [by_id[i] for i in ids]
        pairs = [(results[i], truth(by_id[i])) for i in ids]
        reports.append(coverage_report(vols, pairs, method))
    return reports
