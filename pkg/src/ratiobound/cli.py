"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 computation
error. Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import io
from .conformal import UncertaintyKind
from .core import (
    BadConfidenceBudget,
    Channel,
    ConfigError,
    FormatError,
    LabelsRequired,
    ProfileMismatch,
    RatioBoundError,
    Source,
    soft_volume,
)
from .estimators import labeled_ratio
from .evaluation import reports_from_results, size_strata
from .pipeline import (
    METHOD_NAMES,
    BudgetSplit,
    decompose_uncertainty,
    fit_profile,
    predict,
    profile_split,
    threshold_alarm,
)
from .synthgen import generate, true_ratio

log = logging.getLogger("ratiobound")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_COMPUTE = 0, 1, 2, 3
_DATA_ERRORS = (FormatError, ConfigError, LabelsRequired, ProfileMismatch)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class UsageError(Exception):
    pass


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, _DATA_ERRORS):
        return EXIT_DATA
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    return EXIT_COMPUTE


def cmd_synth(args) -> int:
    config = io.read_synth_config(args.config)
    io.write_dataset(args.out, generate(config))
    return EXIT_OK


def cmd_fit(args) -> int:
    if not 0 < args.confidence < 1:
        raise UsageError("--confidence must lie in (0, 1)")
    val = io.load_dataset(args.val)
    split = None
    if args.alpha is not None:
        try:
            split = BudgetSplit.from_alpha(args.alpha, args.confidence)
        except BadConfidenceBudget as exc:
            raise UsageError(str(exc)) from exc
    profile = fit_profile(
        val,
        confidence=args.confidence,
        source=Source(args.source.upper()),
        n_bins=args.bins,
        grid_step=args.grid_step,
        split=split,
        acqr_kind=UncertaintyKind(args.acqr_kind.upper()),
        voxel_volume=args.voxel_volume,
    )
    for flag in profile.flags:
        log.warning("profile flag: %s", flag)
    io.write_profile(args.out, profile)
    return EXIT_OK


def cmd_estimate(args) -> int:
    instances = io.load_dataset(args.inp)
    profile = io.read_profile(args.profile) if args.profile else None
    if profile is None and args.method not in ("bootstrap", "subsample"):
        raise UsageError(f"--method {args.method} needs --profile")
    results, failures = {}, 0
    for v in instances:
        try:
            results[v.id] = predict(v, args.method, profile, seed=args.seed)
        except _DATA_ERRORS:
            raise
        except RatioBoundError as exc:
            failures += 1
            print(f"error: {v.id}: {exc}", file=sys.stderr)
    if instances and failures == len(instances):
        print("error: estimation failed on every instance", file=sys.stderr)
        return EXIT_COMPUTE
    io.write_results(args.out, results)
    return EXIT_OK


def _truth_fn(name):
    return true_ratio if name == "latent" else labeled_ratio


def cmd_eval(args) -> int:
    instances = io.load_dataset(args.inp)
    results = io.read_results(args.results)
    try:
        reports = reports_from_results(instances, results, _truth_fn(args.truth))
    except KeyError as exc:
        raise FormatError(str(exc.args[0])) from exc
    lines = []
    for r in reports:
        lines += [
            f"method: {r.method.value}",
            f"  n: {r.n}",
            f"  coverage: {r.coverage!r}",
            f"  mean_width: {r.mean_width!r}",
            f"  median_width: {r.median_width!r}",
            f"  mse_r: {r.mse_r!r}",
        ]
        for s in r.strata:
            lines.append(
                f"  stratum {s.label}: n={s.n} coverage={s.coverage!r} "
                f"mean_width={s.mean_width!r} mse_r={s.mse_r!r}"
            )
    Path(args.out).write_text("\n".join(lines) + "\n")
    strata_path = args.strata or f"{args.out}.strata.csv"
    rows = [
        [r.method.value, s.label, s.n, s.coverage, s.mean_width, s.mse_r]
        for r in reports
        for s in r.strata
    ]
    io.write_table(strata_path, ["method", "stratum", "n", "coverage", "mean_width", "mse_r"], rows)
    return EXIT_OK


def cmd_decompose(args) -> int:
    paths = args.profiles.split(",")
    if len(paths) != 2:
        raise UsageError("--profiles takes two comma-separated files: vbias,ece")
    p_vbias, p_ece = (io.read_profile(p) for p in paths)
    split = profile_split(p_ece)
    instances = io.load_dataset(args.inp)
    strata = size_strata([soft_volume(v, Channel.B) for v in instances])
    rows, failures = [], 0
    for v, stratum in zip(instances, strata):
        try:
            d = decompose_uncertainty(v, p_vbias, p_ece, split)
        except _DATA_ERRORS:
            raise
        except RatioBoundError as exc:
            failures += 1
            print(f"error: {v.id}: {exc}", file=sys.stderr)
            continue
        rows.append([v.id, stratum, d.i_est, d.i_vbias, d.i_ece, d.i_overall])
    if instances and failures == len(instances):
        return EXIT_COMPUTE
    io.write_table(args.out, ["id", "stratum", "i_est", "i_vbias", "i_ece", "i_overall"], rows)
    return EXIT_OK


def cmd_alarm(args) -> int:
    if not 0 <= args.threshold <= 1:
        raise UsageError("--threshold must lie in [0, 1]")
    results = io.read_results(args.results)
    rows = []
    for id in sorted(results):
        e = results[id]
        rows.append([id, e.lower, e.upper, args.threshold, threshold_alarm(e, args.threshold).value])
    io.write_table(args.out, ["id", "lower", "upper", "threshold", "alarm"], rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ratiobound", description="Calibrated intervals for volume-ratio biomarkers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit a calibration profile on labeled data")
    p.add_argument("--val", required=True)
    p.add_argument("--confidence", type=float, default=0.68)
    p.add_argument("--source", choices=["vbias", "ece"], default="vbias")
    p.add_argument("--bins", type=int, default=15)
    p.add_argument("--grid-step", type=float, default=0.02)
    p.add_argument("--alpha", type=float, help="fix the estimation budget instead of searching")
    p.add_argument("--acqr-kind", choices=[k.value.lower() for k in UncertaintyKind], default="size_scaled")
    p.add_argument("--voxel-volume", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("estimate", help="per-instance intervals")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--profile")
    p.add_argument("--method", choices=METHOD_NAMES, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("eval", help="coverage report for a results table")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--truth", choices=["labeled", "latent"], default="labeled")
    p.add_argument("--strata", help="strata table path (default: <out>.strata.csv)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("decompose", help="estimation/calibration width breakdown")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--profiles", required=True, help="vbias_profile,ece_profile")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("alarm", help="flag intervals against a clinical threshold")
    p.add_argument("--results", required=True)
    p.add_argument("--threshold", type=float, default=0.25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_alarm)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (RatioBoundError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
