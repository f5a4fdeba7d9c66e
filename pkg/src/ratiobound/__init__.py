"""Calibrated uncertainty intervals for ratio biomarkers from segmentation outputs."""

from .core import (
    CalibrationProfile,
    Channel,
    InstanceVolume,
    IntervalEstimate,
    Method,
    RatioBoundError,
    Source,
)
from .pipeline import BudgetSplit, fit_profile, grid_search, predict
from .synthgen import SynthConfig, generate

__all__ = [
    "BudgetSplit",
    "CalibrationProfile",
    "Channel",
    "InstanceVolume",
    "IntervalEstimate",
    "Method",
    "RatioBoundError",
    "Source",
    "SynthConfig",
    "fit_profile",
    "generate",
    "grid_search",
    "predict",
]
__version__ = "0.1.0"
