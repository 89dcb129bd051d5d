"""Latency versus attack-success trade-off over the number of confirmations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import ctmc, security
from .core import SystemConfig

DEFAULT_N_MAX = 10


@dataclass(frozen=True)
class TradeoffPoint:
    n: int
    latency: float
    attack_prob: float


def tradeoff_curve(
    cfg: SystemConfig,
    beta: float,
    n_max: int = DEFAULT_N_MAX,
    trunc: Optional[ctmc.Truncation] = None,
    tol: float = ctmc.DEFAULT_TOL,
) -> list[TradeoffPoint]:
    """Points ``(L(N), S(N, beta))`` for ``N = 1..n_max``.

    Security uses the never-give-up attacker, the worst case over give-up depths.
    The one-confirmation chain is solved once; each extra confirmation adds one
    mean block time.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    w = ctmc.steady_state(cfg, trunc, tol)
    return [
        TradeoffPoint(
            n,
            ctmc.latency_from_distribution(w, cfg, n),
            security.attack_success_prob(n, beta, None),
        )
        for n in range(1, n_max + 1)
    ]
