"""Closed-form latency bounds built on the M/M/1 and M/M/s queues.

An unbounded upper bound is returned as ``math.inf`` rather than raised, so
callers sweeping a parameter can render the undefined region.
"""

from __future__ import annotations

import math

from .core import ConfirmationPolicy, SystemConfig

UNBOUNDED = math.inf


def _n(n: ConfirmationPolicy | int) -> int:
    return n.n_confirmations if isinstance(n, ConfirmationPolicy) else ConfirmationPolicy(n).n_confirmations


def erlang_b(s: int, a: float) -> float:
    """Erlang B blocking probability via the recurrence ``B(k) = a B(k-1) / (k + a B(k-1))``."""
    b = 1.0
    for k in range(1, s + 1):
        b = a * b / (k + a * b)
    return b


def erlang_c(s: int, a: float) -> float:
    """Probability an arrival waits in an M/M/s queue with offered load ``a`` Erlangs."""
    if s < 1:
        raise ValueError(f"s must be >= 1, got {s}")
    if not (0 <= a < s):
        raise ValueError(f"offered load must satisfy 0 <= a < s, got a={a}, s={s}")
    if a == 0:
        return 0.0
    b = erlang_b(s, a)
    return s * b / (s - a * (1.0 - b))


def mms_wait(cfg: SystemConfig) -> float:
    """Mean queueing delay (excluding service) of the M/M/s stage."""
    cfg.require_stable()
    a = cfg.lambda_a / cfg.lambda_c
    return erlang_c(cfg.s, a) / (cfg.s * cfg.lambda_c - cfg.lambda_a)


def latency_lower_mms(n: ConfirmationPolicy | int, cfg: SystemConfig) -> float:
    """Lower bound assuming every request is assembled the instant it arrives."""
    return mms_wait(cfg) + (_n(n) - 1) / cfg.lambda_b


def latency_upper(n: ConfirmationPolicy | int, cfg: SystemConfig) -> float:
    """Upper bound from one-request blocks (an M/M/1 assembly stage in tandem with M/M/s).

    ``math.inf`` when ``lambda_b <= lambda_a``.
    """
    lower = latency_lower_mms(n, cfg)
    if cfg.lambda_b <= cfg.lambda_a:
        return UNBOUNDED
    return 1.0 / (cfg.lambda_b - cfg.lambda_a) + lower


def latency_lower_block(n: ConfirmationPolicy | int, cfg: SystemConfig) -> float:
    """``N / lambda_b``: one mean block time to assemble plus ``N - 1`` confirmations."""
    return _n(n) / cfg.lambda_b


def pending_count_pmf(cfg: SystemConfig, i: int) -> float:
    """Stationary probability of ``i`` pending requests (geometric)."""
    if i < 0:
        return 0.0
    total = cfg.lambda_a + cfg.lambda_b
    return (cfg.lambda_b / total) * (cfg.lambda_a / total) ** i
