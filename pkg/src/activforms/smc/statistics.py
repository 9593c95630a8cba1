#!/usr/bin/env python
"""
Sample-size bounds, confidence intervals and accuracy measures for SMC.

USAGE EXAMPLES:
    required_runs_chernoff(0.05, 0.05)      # 738
    wilson_interval(48, 100, 0.05)          # (0.385..., 0.577...)
    compute_rsem([1, 2, 3, 4, 5])           # 23.57
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from src.activforms.smc.errors import DomainError, InsufficientSamples


@dataclass(frozen=True)
class ExpressionStats:
    """Summary of one monitored expression over N simulation runs."""
    expression: str
    n: int
    mean: float
    sd: float
    sem: float
    rsem: Optional[float]       # percent; None when the mean is zero

    @property
    def zero_mean(self) -> bool:
        return self.rsem is None


def _check_unit(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise DomainError(f"{name} must lie in (0, 1), got {value}")


def required_runs_chernoff(epsilon: float, alpha: float) -> int:
    """
    Number of runs after which the Chernoff-Hoeffding bound guarantees
    P(|p_hat - p| > epsilon) <= alpha.

    Args:
        epsilon: Half-width of the approximation interval
        alpha: One minus the confidence level

    Returns:
        ceil(ln(2/alpha) / (2 * epsilon^2))
    """
    _check_unit('epsilon', epsilon)
    _check_unit('alpha', alpha)
    return int(math.ceil(math.log(2.0 / alpha) / (2.0 * epsilon ** 2)))


def wilson_interval(successes: int, n: int, alpha: float) -> Tuple[float, float]:
    """(1 - alpha) Wilson score interval for a binomial proportion."""
    _check_unit('alpha', alpha)
    if n < 1:
        return 0.0, 1.0
    z = norm.ppf(1.0 - alpha / 2.0)
    p_hat = successes / n
    denominator = 1.0 + z * z / n
    center = (p_hat + z * z / (2 * n)) / denominator
    half = z * math.sqrt(p_hat * (1 - p_hat) / n + z * z / (4 * n * n)) / denominator
    low = 0.0 if successes == 0 else max(0.0, center - half)
    high = 1.0 if successes == n else min(1.0, center + half)
    return low, high


def compute_rsem(samples: Sequence[float]) -> Optional[float]:
    """
    Relative standard error of the mean, in percent.

    Returns:
        100 * (sd / sqrt(N)) / |mean|, or None when the mean is zero

    Raises:
        InsufficientSamples: fewer than two samples
    """
    values = np.asarray(samples, dtype=float)
    if values.size < 2:
        raise InsufficientSamples(f"RSEM needs at least 2 samples, got {values.size}")
    mean = float(values.mean())
    if mean == 0.0:
        return None
    sem = float(values.std(ddof=1)) / math.sqrt(values.size)
    return 100.0 * sem / abs(mean)


def summarize(expression: str, samples: Sequence[float]) -> ExpressionStats:
    values = np.asarray(samples, dtype=float)
    n = int(values.size)
    if n == 0:
        raise InsufficientSamples(f"No samples for {expression}")
    mean = float(values.mean())
    if n < 2:
        return ExpressionStats(expression, n, mean, 0.0, 0.0, None if mean == 0 else 0.0)
    sd = float(values.std(ddof=1))
    sem = sd / math.sqrt(n)
    return ExpressionStats(expression, n, mean, sd, sem, compute_rsem(values))
