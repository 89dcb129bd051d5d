"""Discrete-event simulation of the access workflow for any number of confirmations.

A request arrives, waits for the next block (which includes every pending
request), collects ``N`` confirmations counting its own block, joins a FIFO
queue of confirmed requests, and is served by one of ``s`` links.

Latency is the waiting time ``service_start - arrival``; a request counts as
served once it enters service. Three independent random streams (arrivals,
blocks, service durations) are spawned from one seed, and service durations
are consumed in service-start order. Two engines share those streams:

``events``
    A heap-ordered event calendar. Simultaneous events resolve as
    block, then service completion, then arrival.
``vectorized``
    Block epochs located with ``searchsorted`` followed by the FIFO
    multi-server recursion ``start_k = max(eligible_k, earliest free link)``.
    Same sample path as ``events``, orders of magnitude faster.
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
from scipy import stats

from .core import ConfirmationPolicy, SystemConfig
from .mining import exponential, make_rng

N_BATCHES = 20


class TooFewSamples(ValueError):
    code = "TOO_FEW_SAMPLES"


@dataclass
class Request:
    id: int
    arrival_time: float
    confirmations: int = 0
    service_start: Optional[float] = None
    service_end: Optional[float] = None


@dataclass
class SimResult:
    n_confirmations: int
    ids: np.ndarray
    arrival: np.ndarray
    service_start: np.ndarray
    service_end: np.ndarray
    occupancy: Optional[dict[tuple[int, int], float]]
    t_start: float
    t_end: float
    arrivals_total: int
    started_total: int
    waiting_at_end: int
    time_avg_in_system: float
    mean_latency: float = field(init=False)
    ci95_halfwidth: float = field(init=False)

    def __post_init__(self) -> None:
        if self.served_count >= 2 * N_BATCHES:
            self.mean_latency, self.ci95_halfwidth = latency_stats(self)
        else:
            self.mean_latency = float(np.mean(self.latencies)) if self.served_count else math.nan
            self.ci95_halfwidth = math.nan

    @property
    def latencies(self) -> np.ndarray:
        return self.service_start - self.arrival

    @property
    def sojourns(self) -> np.ndarray:
        return self.service_end - self.arrival

    @property
    def served_count(self) -> int:
        return len(self.ids)

    @property
    def horizon(self) -> float:
        return self.t_end - self.t_start

    def requests(self) -> Iterator[Request]:
        for k, a, st, en in zip(self.ids, self.arrival, self.service_start, self.service_end):
            yield Request(int(k), float(a), self.n_confirmations, float(st), float(en))

    def occupancy_distribution(self) -> dict[tuple[int, int], float]:
        if self.occupancy is None:
            raise ValueError("state occupancy is only recorded for one-confirmation runs")
        return {state: t / self.horizon for state, t in self.occupancy.items()}


def latency_stats(result: SimResult, n_batches: int = N_BATCHES) -> tuple[float, float]:
    """Batch-means estimate: mean latency and 95% CI half-width.

    Served requests are split, in service order, into ``n_batches`` equal
    batches (a remainder at the end is dropped for the CI but kept for the mean).
    """
    lat = result.latencies
    if len(lat) < 2 * n_batches:
        raise TooFewSamples(f"need at least {2 * n_batches} served requests, got {len(lat)}")
    size = len(lat) // n_batches
    means = lat[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    half = stats.t.ppf(0.975, n_batches - 1) * means.std(ddof=1) / math.sqrt(n_batches)
    return float(lat.mean()), float(half)


def _streams(seed) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    arr, blk, svc = ss.spawn(3)
    return make_rng(arr), make_rng(blk), make_rng(svc)


def run_simulation(
    cfg: SystemConfig,
    n: ConfirmationPolicy | int,
    served_target: int,
    warmup_fraction: float = 0.1,
    seed=0,
    *,
    engine: str = "vectorized",
) -> SimResult:
    """Simulate until ``served_target`` requests enter service after the warm-up.

    The first ``round(warmup_fraction * served_target)`` served requests are
    discarded and the occupancy clock starts when the last of them enters service.
    """
    if served_target < 1:
        raise ValueError("served_target must be >= 1")
    if not (0 <= warmup_fraction < 1):
        raise ValueError("warmup_fraction must lie in [0, 1)")
    N = n.n_confirmations if isinstance(n, ConfirmationPolicy) else ConfirmationPolicy(n).n_confirmations
    warmup = int(round(warmup_fraction * served_target))
    if engine == "vectorized":
        return _run_vectorized(cfg, N, served_target, warmup, seed)
    if engine == "events":
        return _run_events(cfg, N, served_target, warmup, seed)
    raise ValueError(f"unknown engine {engine!r}")


class _Clock:
    """Epochs of a Poisson stream, extended on demand with sequential summation."""

    def __init__(self, rng: np.random.Generator, rate: float):
        self.rng = rng
        self.rate = rate
        self.times = np.empty(0)

    def extend(self, count: int) -> None:
        last = self.times[-1] if self.times.size else 0.0
        gaps = exponential(self.rng, self.rate, count)
        new = np.cumsum(np.concatenate([[last], gaps]))[1:]
        self.times = np.concatenate([self.times, new])

    def cover(self, t: float) -> None:
        """Extend until the last epoch lies beyond ``t``."""
        while not self.times.size or self.times[-1] <= t:
            last = self.times[-1] if self.times.size else 0.0
            self.extend(int(1.1 * self.rate * (t - last)) + 1000)


def _run_vectorized(cfg: SystemConfig, N: int, target: int, warmup: int, seed) -> SimResult:
    arr_rng, blk_rng, svc_rng = _streams(seed)
    total = warmup + target
    arrivals = _Clock(arr_rng, cfg.lambda_a)
    blocks = _Clock(blk_rng, cfg.lambda_b)
    durations = np.empty(0)

    arrivals.extend(total + total // 10 + 100)
    while True:
        a = arrivals.times
        blocks.cover(a[-1])
        incl = np.searchsorted(blocks.times, a, side="right")
        need = int(incl.max()) + N - 1
        while blocks.times.size <= need:
            blocks.extend(max(1000, need - blocks.times.size + 1))
        eligible = blocks.times[incl + N - 1]

        if durations.size < total:
            durations = np.concatenate([durations, exponential(svc_rng, cfg.lambda_c, total - durations.size)])
        start = np.empty(total)
        links = [0.0] * cfg.s
        el = eligible[:total].tolist()
        du = durations.tolist()
        for k in range(total):
            st = el[k] if el[k] > links[0] else links[0]
            start[k] = st
            heapq.heapreplace(links, st + du[k])
        end = start + durations[:total]
        t_end = float(start[-1])
        if a[-1] > t_end:
            break
        arrivals.extend(max(1000, total // 10))

    t_start = float(start[warmup - 1]) if warmup else 0.0
    in_window = a <= t_end
    n_arr = int(in_window.sum())

    # event sweep over [0, t_end]; priorities: block 0, completion 1, arrival 2
    a_w = a[in_window]
    inc_w = blocks.times[incl[in_window]]
    done = end <= t_end
    times = np.concatenate([a_w, inc_w[inc_w <= t_end], end[done]])
    prio = np.concatenate([np.full(a_w.size, 2), np.zeros((inc_w <= t_end).sum(), dtype=int), np.ones(done.sum(), dtype=int)])
    n_inc = int((inc_w <= t_end).sum())
    di = np.concatenate([np.ones(a_w.size, dtype=np.int64), -np.ones(n_inc, dtype=np.int64), np.zeros(done.sum(), dtype=np.int64)])
    dj = np.concatenate([np.zeros(a_w.size, dtype=np.int64), np.ones(n_inc, dtype=np.int64), -np.ones(done.sum(), dtype=np.int64)])
    # in-system count: +1 at arrival, -1 at service completion
    dn = np.concatenate([np.ones(a_w.size, dtype=np.int64), np.zeros(n_inc, dtype=np.int64), -np.ones(done.sum(), dtype=np.int64)])
    order = np.lexsort((prio, times))
    times, di, dj, dn = times[order], di[order], dj[order], dn[order]
    seg_lo = np.clip(times, t_start, t_end)
    seg_hi = np.clip(np.append(times[1:], t_end), t_start, t_end)
    dur = seg_hi - seg_lo
    pre = max(0.0, min(times[0], t_end) - t_start) if times.size else t_end - t_start
    n_sys = np.cumsum(dn)
    horizon = t_end - t_start
    time_avg = float(np.dot(n_sys, dur) / horizon) if horizon > 0 else math.nan

    occupancy = None
    if N == 1:
        I = np.cumsum(di)
        J = np.cumsum(dj)
        occupancy = {}
        if pre > 0:
            occupancy[(0, 0)] = pre
        keep = dur > 0
        if keep.any():
            width = int(J.max()) + 1
            keys = I[keep] * width + J[keep]
            uniq, inv = np.unique(keys, return_inverse=True)
            sums = np.bincount(inv, weights=dur[keep])
            for key, t in zip(uniq.tolist(), sums.tolist()):
                state = (key // width, key % width)
                occupancy[state] = occupancy.get(state, 0.0) + t

    sl = slice(warmup, total)
    return SimResult(
        n_confirmations=N,
        ids=np.arange(warmup, total),
        arrival=a[sl].copy(),
        service_start=start[sl],
        service_end=end[sl],
        occupancy=occupancy,
        t_start=t_start,
        t_end=t_end,
        arrivals_total=n_arr,
        started_total=total,
        waiting_at_end=n_arr - total,
        time_avg_in_system=time_avg,
    )


_BLOCK, _COMPLETION, _ARRIVAL = 0, 1, 2


def _run_events(cfg: SystemConfig, N: int, target: int, warmup: int, seed) -> SimResult:
    arr_rng, blk_rng, svc_rng = _streams(seed)
    total = warmup + target
    seq = itertools.count()
    calendar: list[tuple[float, int, int, Optional[Request]]] = []

    def schedule(t: float, kind: int, req: Optional[Request] = None) -> None:
        heapq.heappush(calendar, (t, kind, next(seq), req))

    # sequential sums so epochs match the vectorized engine bit for bit
    t_arr = 0.0 + float(exponential(arr_rng, cfg.lambda_a))
    t_blk = 0.0 + float(exponential(blk_rng, cfg.lambda_b))
    schedule(t_arr, _ARRIVAL)
    schedule(t_blk, _BLOCK)

    pending: list[Request] = []
    confirming: list[Request] = []
    confirmed: deque[Request] = deque()
    busy = 0
    started: list[Request] = []
    arrived = 0
    ids = itertools.count()

    now = 0.0
    t_start = 0.0
    last = 0.0
    occupancy: Optional[dict[tuple[int, int], float]] = {} if N == 1 else None
    area = 0.0
    in_system = 0
    clock_on = warmup == 0

    def state() -> tuple[int, int]:
        return len(pending), len(confirmed) + busy

    def advance(t: float) -> None:
        nonlocal last, area
        if clock_on and t > last:
            if occupancy is not None:
                key = state()
                occupancy[key] = occupancy.get(key, 0.0) + (t - last)
            area += in_system * (t - last)
        last = t

    def start_service() -> bool:
        nonlocal busy, clock_on, t_start, last
        while busy < cfg.s and confirmed:
            req = confirmed.popleft()
            req.service_start = now
            req.service_end = now + float(exponential(svc_rng, cfg.lambda_c))
            busy += 1
            schedule(req.service_end, _COMPLETION, req)
            started.append(req)
            if len(started) == warmup and not clock_on:
                clock_on = True
                t_start = now
                last = now
            if len(started) == total:
                return True
        return False

    finished = False
    while not finished:
        t, kind, _, req = heapq.heappop(calendar)
        advance(t)
        now = t
        if kind == _ARRIVAL:
            pending.append(Request(next(ids), t))
            arrived += 1
            in_system += 1
            t_arr = t_arr + float(exponential(arr_rng, cfg.lambda_a))
            schedule(t_arr, _ARRIVAL)
        elif kind == _BLOCK:
            for r in confirming:
                r.confirmations += 1
            for r in pending:
                r.confirmations = 1
            confirming.extend(pending)
            pending.clear()
            ready = [r for r in confirming if r.confirmations >= N]
            if ready:
                confirming = [r for r in confirming if r.confirmations < N]
                confirmed.extend(ready)
            t_blk = t_blk + float(exponential(blk_rng, cfg.lambda_b))
            schedule(t_blk, _BLOCK)
            finished = start_service()
        else:
            busy -= 1
            in_system -= 1
            finished = start_service()

    t_end = now
    horizon = t_end - t_start
    measured = started[warmup:]
    return SimResult(
        n_confirmations=N,
        ids=np.array([r.id for r in measured]),
        arrival=np.array([r.arrival_time for r in measured]),
        service_start=np.array([r.service_start for r in measured]),
        service_end=np.array([r.service_end for r in measured]),
        occupancy=occupancy,
        t_start=t_start,
        t_end=t_end,
        arrivals_total=arrived,
        started_total=len(started),
        waiting_at_end=len(pending) + len(confirming) + len(confirmed),
        time_avg_in_system=area / horizon if horizon > 0 else math.nan,
    )


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
