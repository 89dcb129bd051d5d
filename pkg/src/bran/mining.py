"""Hash-based block generation.

Each hash trial is a Bernoulli experiment; in the many-trials limit the
waiting time to the next block is exponential and blocks form a Poisson
process of rate ``lambda_b``.

Random variates come from numpy's ``PCG64`` bit generator (64-bit state,
128-bit LCG with a permuted output). Exponentials are produced by inversion,
``-ln(1 - U) / rate`` with ``U`` uniform on ``[0, 1)``, so a given seed always
yields the same stream.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigError


def make_rng(seed: int | np.random.SeedSequence | None) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def exponential(rng: np.random.Generator, rate: float, size: int | None = None):
    """Exponential variates by inversion. Scalar when ``size`` is None."""
    u = rng.random(size)
    return -np.log1p(-u) / rate


@dataclass(frozen=True)
class MiningProcess:
    rate: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ConfigError(f"mining rate must be positive, got {self.rate!r}")

    @property
    def mean_block_time(self) -> float:
        return 1.0 / self.rate


@dataclass(frozen=True)
class BlockTimeSample:
    durations: np.ndarray

    def __post_init__(self) -> None:
        if np.any(self.durations <= 0):
            raise ValueError("block times must be strictly positive")

    def __len__(self) -> int:
        return len(self.durations)

    @property
    def mean(self) -> float:
        return float(np.mean(self.durations))


class IntervalKind(str, enum.Enum):
    ZERO = "zero"
    EXACTLY_ONE = "exactly_one"
    TWO_OR_MORE = "two_or_more"


def geometric_tail(p: float, m: int) -> float:
    """``Pr{W >= m} = (1 - p)**m`` for the failures before the first success."""
    if not (0 < p <= 1):
        raise ValueError(f"success probability must lie in (0, 1], got {p}")
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    return (1.0 - p) ** m


def block_time_tail(rate: float, tau: float) -> float:
    """``Pr{U > tau}`` for an exponential block time."""
    return math.exp(-rate * tau)


def interval_block_count_prob(rate: float, h: float, kind: IntervalKind | str) -> float:
    """Probability of zero, exactly one, or two-plus blocks in an interval of length ``h``."""
    kind = IntervalKind(kind)
    x = rate * h
    if kind is IntervalKind.ZERO:
        return math.exp(-x)
    if kind is IntervalKind.EXACTLY_ONE:
        return x * math.exp(-x)
    # 1 - (1 + x) e^{-x}, written to stay accurate as x -> 0
    return -math.expm1(-x) - x * math.exp(-x)


def sample_block_times(proc: MiningProcess, count: int, seed) -> BlockTimeSample:
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = make_rng(seed)
    return BlockTimeSample(exponential(rng, proc.rate, count))


def histogram(sample: BlockTimeSample, bins: int) -> list[tuple[float, float, int]]:
    counts, edges = np.histogram(sample.durations, bins=bins)
    return [(float(edges[k]), float(edges[k + 1]), int(counts[k])) for k in range(len(counts))]
