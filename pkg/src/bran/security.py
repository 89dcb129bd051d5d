"""Alternative-history (double-spend) attack success probability.

The attacker mines a private fork at ``beta`` times the honest rate. While
the honest chain collects ``N`` confirmations the attacker finds ``Y`` blocks,
``Y ~ NegBin(N, 1/(1+beta))``. The race then continues as a gambler's-ruin walk
on the deficit: the attacker wins once the deficit drops below zero and
gives up when it reaches ``give_up``. ``give_up=None`` never gives up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
from scipy import stats

from .core import normalize_give_up
from .mining import make_rng

BETA_ONE_ATOL = 1e-9
# Unbounded races by a weaker attacker are cut at a depth where the chance of
# ever catching up is below this level (see safety_horizon).
HORIZON_BIAS = 1e-12
# Hard step limit for races that cannot be cut by depth (beta >= 1).
MAX_RACE_STEPS = 10**8
_DRAW_SIZE = 1 << 22


def _is_one(beta: float) -> bool:
    return abs(beta - 1.0) < BETA_ONE_ATOL


def log_neg_binom_pmf(n: int, N: int, beta: float) -> float:
    """Log of ``C(n+N-1, n) (1/(1+beta))^N (beta/(1+beta))^n``."""
    if n < 0:
        return -math.inf
    if beta == 0:
        return 0.0 if n == 0 else -math.inf
    log_c = math.log(math.comb(n + N - 1, n))
    log1p_beta = math.log1p(beta)
    return log_c - N * log1p_beta + n * (math.log(beta) - log1p_beta)


def neg_binom_pmf(n: int, N: int, beta: float) -> float:
    """Probability the attacker mines ``n`` blocks while the honest chain mines ``N``."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    return math.exp(log_neg_binom_pmf(n, N, beta))


def catchup_prob(n: int, beta: float, give_up=None) -> float:
    """Probability the attacker, ``n`` blocks behind, overtakes before giving up.

    Evaluated without subtractive cancellation so tiny probabilities keep
    their relative accuracy.
    """
    ng = normalize_give_up(give_up)
    if n < 0:
        return 1.0
    if ng is not None and n >= ng:
        return 0.0
    if beta == 0:
        return 0.0
    if _is_one(beta):
        return 1.0 if ng is None else (ng - n) / (ng + 1)
    lb = math.log(beta)
    if ng is None:
        return math.exp((n + 1) * lb) if beta < 1 else 1.0
    if beta < 1:
        # beta^(n+1) (1 - beta^(ng-n)) / (1 - beta^(ng+1))
        return math.exp((n + 1) * lb) * math.expm1((ng - n) * lb) / math.expm1((ng + 1) * lb)
    # divide through by beta^(ng+1) so nothing overflows
    return math.expm1((n - ng) * lb) / math.expm1(-(ng + 1) * lb)


def attack_success_prob(N: int, beta: float, give_up=None) -> float:
    """Success probability of the attack with ``N`` confirmations.

    ``sum_{n=0}^{N} NB(n; N, beta) P_{N-n} + Pr{Y > N}``: an attacker already
    ahead after the confirmation phase wins outright. Every term is
    nonnegative, so small probabilities are accurate to rounding.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    ng = normalize_give_up(give_up)
    if beta == 0:
        return 0.0
    if ng is None and (beta >= 1 or _is_one(beta)):
        return 1.0
    ahead = float(stats.nbinom.sf(N, N, 1.0 / (1.0 + beta)))
    behind = math.fsum(
        math.exp(log_neg_binom_pmf(n, N, beta)) * catchup_prob(N - n, beta, ng) for n in range(N + 1)
    )
    return min(1.0, ahead + behind)


def attack_success_prob_series(N: int, beta: float, give_up=None, rel_tol: float = 1e-13) -> float:
    """Direct sum ``sum_n NB(n) * P_{N-n}`` over all ``n``, stopped by a tail bound.

    Independent of the closed-form tail used by ``attack_success_prob``. Past
    the mode the pmf ratio ``q (n+N)/(n+1)`` decreases, so the remaining mass
    is at most ``pmf * r / (1 - r)``; summation stops once that is below
    ``rel_tol`` times the running total.
    """
    if beta == 0:
        return 0.0
    ng = normalize_give_up(give_up)
    q = beta / (1.0 + beta)
    terms = []
    n = 0
    while True:
        pmf = math.exp(log_neg_binom_pmf(n, N, beta))
        terms.append(pmf * catchup_prob(N - n, beta, ng))
        r = q * (n + N) / (n + 1)
        if n >= N and r < 1 and pmf * r / (1 - r) <= rel_tol * math.fsum(terms):
            return math.fsum(terms)
        n += 1
        if n > 10**7:
            raise RuntimeError("negative binomial series did not converge")


def safety_horizon(beta: float, give_up: Optional[int]) -> Optional[int]:
    """Deficit at which a simulated race is stopped and scored as a failure.

    Equal to ``give_up`` when that is the nearer barrier. For a weaker attacker
    the cut sits where the chance of ever catching up, ``beta**(d+1)``, is below
    ``HORIZON_BIAS``, so the truncation bias is at most that. Returns ``None``
    when no depth cut is valid (``beta >= 1`` with no give-up).
    """
    if beta < 1 and not _is_one(beta):
        depth = int(math.ceil(math.log(HORIZON_BIAS) / math.log(beta)))
        return depth if give_up is None else min(depth, give_up)
    return give_up


@dataclass(frozen=True)
class RaceOutcome:
    success: bool
    blocks_spent: int


@dataclass
class RaceResult:
    N: int
    beta: float
    give_up: Optional[int]
    success: np.ndarray
    blocks_spent: np.ndarray

    @property
    def trials(self) -> int:
        return len(self.success)

    @property
    def successes(self) -> int:
        return int(self.success.sum())

    @property
    def probability(self) -> float:
        return self.successes / self.trials

    def three_sigma(self, p: Optional[float] = None) -> float:
        """Three binomial standard deviations at ``p`` (default: the empirical rate)."""
        p = self.probability if p is None else p
        return 3.0 * math.sqrt(p * (1.0 - p) / self.trials)

    def outcomes(self) -> Iterator[RaceOutcome]:
        for ok, spent in zip(self.success, self.blocks_spent):
            yield RaceOutcome(bool(ok), int(spent))


def _confirmation_phase(rng: np.random.Generator, N: int, q: float, trials: int) -> np.ndarray:
    """Attacker blocks mined before the honest chain reaches ``N`` blocks.

    Runs the block race one Bernoulli step at a time, all trials in lockstep.
    """
    honest = np.zeros(trials, dtype=np.int64)
    attacker = np.zeros(trials, dtype=np.int64)
    active = np.arange(trials)
    while active.size:
        att = rng.random(active.size) < q
        attacker[active] += att
        honest[active] += ~att
        active = active[honest[active] < N]
    return attacker


def _race_phase(
    rng: np.random.Generator,
    deficit: np.ndarray,
    q: float,
    ceiling: Optional[int],
    step_cap: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Run the deficit walk until it drops below zero or reaches ``ceiling``.

    Returns (success, attacker blocks mined). Steps are drawn in chunks whose
    length grows as walkers are absorbed, keeping each draw near a fixed size.
    """
    n = deficit.size
    success = deficit < 0
    mined = np.zeros(n, dtype=np.int64)
    pos = deficit.astype(np.int64)
    alive = ~success
    if ceiling is not None:
        alive &= pos < ceiling
    active = np.flatnonzero(alive)
    steps_taken = 0
    while active.size:
        if steps_taken >= step_cap:
            raise RuntimeError(
                f"{active.size} races unresolved after {step_cap} steps; raise the step cap"
            )
        k = int(min(max(16, _DRAW_SIZE // active.size), step_cap - steps_taken, 1 << 20))
        rows_per_block = max(1, _DRAW_SIZE // k)
        finished = []
        for lo in range(0, active.size, rows_per_block):
            idx = active[lo:lo + rows_per_block]
            att = rng.random((idx.size, k), dtype=np.float32) < q
            path = pos[idx, None] + np.cumsum(1 - 2 * att.view(np.int8), axis=1, dtype=np.int32)
            down = path < 0
            hit = down if ceiling is None else down | (path >= ceiling)
            rows = np.arange(idx.size)
            first = hit.argmax(axis=1)
            done = hit[rows, first]
            first[~done] = k - 1
            end = path[rows, first]
            # down-steps among the first+1 steps taken
            mined[idx] += (first + 1 - (end - pos[idx])) // 2
            success[idx[done]] = down[rows[done], first[done]]
            pos[idx] = end
            finished.append(done)
        active = active[~np.concatenate(finished)]
        steps_taken += k
    return success, mined


def simulate_attack_race(
    N: int,
    beta: float,
    give_up=None,
    trials: int = 10**6,
    seed=0,
    *,
    step_cap: int = MAX_RACE_STEPS,
) -> RaceResult:
    """Monte Carlo estimate of the attack success probability."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if not beta > 0:
        raise ValueError("simulation needs beta > 0; a zero-rate attacker never succeeds")
    ng = normalize_give_up(give_up)
    rng = make_rng(seed)
    q = beta / (1.0 + beta)
    y = _confirmation_phase(rng, N, q, trials)
    success, mined = _race_phase(rng, N - y, q, safety_horizon(beta, ng), step_cap)
    return RaceResult(N, beta, ng, success, y + mined)
