"""Seeded generator of labeled, optionally miscalibrated, segmentation outputs.

Each pixel (or block of ``block_size`` pixels) draws a latent foreground
probability ``pi ~ Beta(k*p_b, k*(1-p_b))`` and a latent sub-region share
``rho ~ Beta(k*r, k*(1-r))``. Labels follow ``y_b ~ Bern(pi)`` and
``y_a = y_b * Bern(rho)``; predictions are ``sigmoid(logit(p)/T + noise)``
with ``p = pi`` for channel B and ``p = pi*rho`` for channel A. At T = 1 and
zero noise both channels are calibrated and E[g_a]/E[g_b] = r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import expit, logit

from .core import ConfigError, InstanceVolume
from .estimators import labeled_ratio

_P_CLIP = 1e-6
_MAX_TRIES = 100


@dataclass(frozen=True)
class SynthConfig:
    n_instances: int = 500
    pixels_min: int = 1000
    pixels_max: int = 20000
    p_b_range: Tuple[float, float] = (0.1, 0.5)
    ratio_range: Tuple[float, float] = (0.1, 0.6)
    temperature: float = 1.0
    noise_sd: float = 0.0
    block_size: int = 1
    seed: int = 0
    concentration: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "p_b_range", tuple(float(x) for x in self.p_b_range))
        object.__setattr__(self, "ratio_range", tuple(float(x) for x in self.ratio_range))
        lo, hi = self.p_b_range
        if not 0 < lo <= hi < 1:
            raise ConfigError(f"p_b_range must be ordered inside (0, 1), got {self.p_b_range}")
        lo, hi = self.ratio_range
        if not 0 <= lo <= hi <= 1:
            raise ConfigError(f"ratio_range must be ordered inside [0, 1], got {self.ratio_range}")
        if not 1 <= self.pixels_min <= self.pixels_max:
            raise ConfigError("need 1 <= pixels_min <= pixels_max")
        if self.n_instances < 0:
            raise ConfigError("n_instances must be nonnegative")
        if not self.temperature > 0:
            raise ConfigError("temperature must be positive")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be nonnegative")
        if self.block_size < 1:
            raise ConfigError("block_size must be >= 1")
        if not self.concentration > 0:
            raise ConfigError("concentration must be positive")

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]


def _beta(rng, mean: float, k: float, size: int) -> np.ndarray:
    if mean <= 0.0:
        return np.zeros(size)
    if mean >= 1.0:
        return np.ones(size)
    return rng.beta(k * mean, k * (1.0 - mean), size=size)


def _predict(rng, p: np.ndarray, config: SynthConfig) -> np.ndarray:
    z = logit(np.clip(p, _P_CLIP, 1.0 - _P_CLIP)) / config.temperature
    if config.noise_sd > 0:
        z = z + rng.normal(0.0, config.noise_sd, size=p.size)
    return expit(z)


def instance_id(index: int) -> str:
    return f"case{index:06d}"


def generate_instance(config: SynthConfig, index: int) -> InstanceVolume:
    """Instance ``index``; depends only on ``(config, index)``."""
    rng = np.random.default_rng([config.seed, index])
    log_lo, log_hi = math.log(config.pixels_min), math.log(config.pixels_max + 1)
    n = min(int(math.exp(rng.uniform(log_lo, log_hi))), config.pixels_max)
    p_b = rng.uniform(*config.p_b_range)
    r = rng.uniform(*config.ratio_range)
    k = config.concentration
    n_blocks = -(-n // config.block_size)

    # redraw until region B is nonempty; conditioning is identical for every index
    for _ in range(_MAX_TRIES):
        pi = np.repeat(_beta(rng, p_b, k, n_blocks), config.block_size)[:n]
        rho = np.repeat(_beta(rng, r, k, n_blocks), config.block_size)[:n]
        y_b = rng.random(n) < pi
        y_a = y_b & (rng.random(n) < rho)
        if y_b.any():
            break
    else:
        raise ConfigError(f"instance {index}: region B stayed empty after {_MAX_TRIES} draws")

    g_b = _predict(rng, pi, config)
    g_a = _predict(rng, pi * rho, config)
    return InstanceVolume(
        id=instance_id(index),
        g_a=g_a,
        g_b=g_b,
        y_a=y_a,
        y_b=y_b,
        meta={"true_ratio": r, "p_b": p_b, "index": index},
    )


def generate(config: SynthConfig, start: int = 0, stop: Optional[int] = None) -> List[InstanceVolume]:
    stop = config.n_instances if stop is None else stop
    return [generate_instance(config, i) for i in range(start, stop)]


def true_ratio(v: InstanceVolume) -> float:
    """Latent ratio used to generate ``v``."""
    try:
        return float(v.meta["true_ratio"])
    except KeyError:
        raise ConfigError(f"{v.id}: no latent ratio recorded (not a synthetic instance?)") from None


def realized_ratio(v: InstanceVolume) -> float:
    return labeled_ratio(v)
