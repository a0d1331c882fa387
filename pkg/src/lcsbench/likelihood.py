"""Online anomaly likelihood over a reconstruction-error stream.

At each step the last ``W`` errors define a rolling normal model (mean and
sample standard deviation); the mean of the last ``W'`` errors is compared
against it through the Gaussian tail function::

    L_t = 1 - Q((short_mean - long_mean) / long_std)

During warm-up (< W points seen) both windows shrink to the available
history and no flags are raised.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from lcsbench.errors import ConfigError

# Largest/smallest doubles strictly inside (0, 1).
_L_MAX = math.nextafter(1.0, 0.0)
_L_MIN = math.nextafter(0.0, 1.0)

THRESHOLD_GRID = (0.9990, 0.9995, 0.9996, 0.9997, 0.9998)
LONG_WINDOW_GRID = (20, 25, 30, 35, 40, 50)
SHORT_WINDOW_GRID = (1, 2, 3, 4, 5)


def q_function(x: float) -> float:
    """Gaussian tail probability P(Z > x)."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


@dataclass(frozen=True)
class LikelihoodParams:
    long_window: int = 30
    short_window: int = 2
    threshold: float = 0.9996
    sigma_floor: float = 1e-9

    def __post_init__(self) -> None:
        if self.long_window < 2:
            raise ConfigError("long_window must be >= 2")
        if not 1 <= self.short_window < self.long_window:
            raise ConfigError("short_window must satisfy 1 <= W' < W")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie in (0, 1)")
        if not self.sigma_floor > 0:
            raise ConfigError("sigma_floor must be positive")


@dataclass(frozen=True)
class LikelihoodPoint:
    error: float
    likelihood: float
    warmup: bool
    mean: float
    std: float
    short_mean: float


def _likelihood(short_mean: float, mean: float, std: float) -> float:
    # 1 - Q(z) == Q(-z); the latter keeps precision near 1
    z = (short_mean - mean) / std
    return min(max(q_function(-z), _L_MIN), _L_MAX)


@dataclass
class LikelihoodState:
    params: LikelihoodParams
    buffer: deque = field(init=False)
    count: int = 0

    def __post_init__(self) -> None:
        self.buffer = deque(maxlen=self.params.long_window)

    def update(self, error: float) -> LikelihoodPoint:
        if not (math.isfinite(error) and error >= 0):
            raise ValueError(f"reconstruction error must be finite and >= 0, got {error}")
        self.buffer.append(float(error))
        self.count += 1
        window = np.fromiter(self.buffer, dtype=np.float64, count=len(self.buffer))
        # deviations from the newest point keep a constant window exactly at z = 0
        dev = window - window[-1]
        dmean = float(dev.mean())
        dshort = float(dev[-self.params.short_window:].mean())
        std = float(dev.std(ddof=1)) if window.size > 1 else 0.0
        std = max(std, self.params.sigma_floor)
        return LikelihoodPoint(
            error=float(error),
            likelihood=_likelihood(dshort, dmean, std),
            warmup=self.count < self.params.long_window,
            mean=float(window[-1] + dmean),
            std=std,
            short_mean=float(window[-1] + dshort),
        )


def classify(point: LikelihoodPoint | float, params: LikelihoodParams, warmup: bool = False) -> bool:
    if isinstance(point, LikelihoodPoint):
        warmup, value = point.warmup, point.likelihood
    else:
        value = float(point)
    return (not warmup) and value >= params.threshold


def likelihood_series(errors: Iterable[float], params: LikelihoodParams) -> tuple[np.ndarray, np.ndarray]:
    """Stream ``errors`` through a fresh state; returns (likelihoods, warmup flags)."""
    state = LikelihoodState(params)
    pts = [state.update(e) for e in errors]
    return (
        np.array([p.likelihood for p in pts], dtype=np.float64),
        np.array([p.warmup for p in pts], dtype=bool),
    )


def detect(errors: Iterable[float], params: LikelihoodParams) -> tuple[np.ndarray, np.ndarray]:
    """Likelihoods and anomaly flags for a full error stream."""
    lik, warm = likelihood_series(errors, params)
    return lik, (lik >= params.threshold) & ~warm


def parameter_grid():
    """The built-in sweep: 5 thresholds x 6 long windows x 5 short windows."""
    for w in LONG_WINDOW_GRID:
        for ws in SHORT_WINDOW_GRID:
            for thr in THRESHOLD_GRID:
                yield LikelihoodParams(long_window=w, short_window=ws, threshold=thr)
