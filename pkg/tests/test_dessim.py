import numpy as np
import pytest

from bran import ctmc, dessim
from bran.core import SystemConfig
from bran.mining import exponential

LOW_LOAD = SystemConfig.from_rho(0.1, 25.0, 4)


def _busy_links_at_starts(res):
    starts, ends = res.service_start, res.service_end
    # services that began at or before each start and have not yet finished
    began = np.searchsorted(np.sort(starts), starts, side="right")
    ended = np.searchsorted(np.sort(ends), starts, side="right")
    return began - ended


@pytest.mark.parametrize("n", [1, 3])
def test_engines_produce_identical_paths(n):
    cfg = SystemConfig.from_rho(0.6, 5.0, 3)
    a = dessim.run_simulation(cfg, n, 3000, seed=21, engine="vectorized")
    b = dessim.run_simulation(cfg, n, 3000, seed=21, engine="events")
    for field in ("ids", "arrival", "service_start", "service_end"):
        assert np.array_equal(getattr(a, field), getattr(b, field))
    assert a.t_start == b.t_start and a.t_end == b.t_end
    assert a.arrivals_total == b.arrivals_total
    if n == 1:
        assert a.occupancy.keys() == b.occupancy.keys()
        for k in a.occupancy:
            assert a.occupancy[k] == pytest.approx(b.occupancy[k], abs=1e-9)
    else:
        assert a.occupancy is None and b.occupancy is None


def test_run_is_deterministic():
    a = dessim.run_simulation(LOW_LOAD, 2, 5000, seed=3)
    b = dessim.run_simulation(LOW_LOAD, 2, 5000, seed=3)
    assert np.array_equal(a.service_start, b.service_start)
    assert a.mean_latency == b.mean_latency


@pytest.mark.parametrize("n", [1, 4])
def test_path_invariants(n):
    cfg = SystemConfig.from_rho(0.8, 10.0, 2)
    res = dessim.run_simulation(cfg, n, 20_000, seed=8)
    assert res.served_count == 20_000
    assert np.all(np.diff(res.arrival) > 0)
    # FIFO: service starts in arrival order
    assert np.all(np.diff(res.service_start) >= 0)
    assert np.all(res.service_end > res.service_start)
    assert np.all(res.latencies >= 0)
    assert _busy_links_at_starts(res).max() <= cfg.s
    # conservation of requests
    assert res.arrivals_total == res.started_total + res.waiting_at_end
    assert res.waiting_at_end >= 0

    # no request enters service before its n-th block after arrival
    _, blk, _ = dessim._streams(8)
    epochs = np.cumsum(exponential(blk, cfg.lambda_b, int(3 * cfg.lambda_b * res.t_end) + 1000))
    first = np.searchsorted(epochs, res.arrival, side="right")
    assert np.all(epochs[first + n - 1] <= res.service_start)


def test_occupancy_accounts_for_whole_horizon():
    res = dessim.run_simulation(SystemConfig.from_rho(0.4, 5.0, 4), 1, 20_000, seed=2)
    assert sum(res.occupancy.values()) == pytest.approx(res.horizon, rel=1e-10)
    dist = res.occupancy_distribution()
    mean_in_system = sum((i + j) * p for (i, j), p in dist.items())
    assert mean_in_system == pytest.approx(res.time_avg_in_system, rel=1e-9)


def test_littles_law():
    cfg = SystemConfig.from_rho(0.5, 8.0, 3)
    res = dessim.run_simulation(cfg, 2, 100_000, seed=17)
    assert res.time_avg_in_system == pytest.approx(cfg.lambda_a * res.sojourns.mean(), rel=0.02)


def test_occupancy_close_to_steady_state():
    cfg = SystemConfig.from_rho(0.7, 5.0, 4)
    res = dessim.run_simulation(cfg, 1, 100_000, seed=5)
    w = ctmc.steady_state(cfg)
    assert dessim.total_variation(res.occupancy_distribution(), w.as_dict()) < 0.02


def test_analytic_latency_inside_ci_low_load():
    res = dessim.run_simulation(LOW_LOAD, 1, 100_000, seed=1)
    analytic = ctmc.expected_latency(1, LOW_LOAD)
    assert abs(res.mean_latency - analytic) <= res.ci95_halfwidth


@pytest.mark.parametrize("rho", [0.01, 0.05])
def test_lower_block_bound_tight_at_low_load(rho):
    cfg = SystemConfig.from_rho(rho, 25.0, 25)
    res = dessim.run_simulation(cfg, 3, 100_000, seed=6)
    assert res.mean_latency == pytest.approx(0.12, rel=0.15)


def test_unstable_config_allowed_and_flagged():
    cfg = SystemConfig(1.5, 10.0, 1.0, 1)
    assert not cfg.stable
    res = dessim.run_simulation(cfg, 1, 2000, seed=0)
    assert res.served_count == 2000
    assert res.waiting_at_end > 0


def test_constant_latencies_give_zero_halfwidth():
    k = 100
    arrival = np.arange(k, dtype=float)
    res = dessim.SimResult(
        n_confirmations=1, ids=np.arange(k), arrival=arrival, service_start=arrival + 0.5,
        service_end=arrival + 1.0, occupancy=None, t_start=0.0, t_end=float(k),
        arrivals_total=k, started_total=k, waiting_at_end=0, time_avg_in_system=1.0,
    )
    assert res.mean_latency == 0.5
    assert res.ci95_halfwidth == 0.0
    with pytest.raises(ValueError):
        res.occupancy_distribution()


def test_too_few_samples():
    res = dessim.run_simulation(LOW_LOAD, 1, 10, seed=0)
    assert np.isnan(res.ci95_halfwidth)
    with pytest.raises(dessim.TooFewSamples):
        dessim.latency_stats(res)


def test_requests_view():
    res = dessim.run_simulation(LOW_LOAD, 2, 50, warmup_fraction=0.0, seed=0)
    reqs = list(res.requests())
    assert [r.id for r in reqs] == list(range(50))
    assert all(r.service_start >= r.arrival_time and r.confirmations == 2 for r in reqs)


def test_total_variation():
    assert dessim.total_variation({(0, 0): 1.0}, {(0, 0): 1.0}) == 0
    assert dessim.total_variation({(0, 0): 1.0}, {(1, 0): 1.0}) == 1
    assert dessim.total_variation({(0, 0): 0.5, (1, 0): 0.5}, {(0, 0): 1.0}) == pytest.approx(0.5)


def test_bad_arguments():
    with pytest.raises(ValueError):
        dessim.run_simulation(LOW_LOAD, 1, 0)
    with pytest.raises(ValueError):
        dessim.run_simulation(LOW_LOAD, 1, 100, warmup_fraction=1.0)
    with pytest.raises(ValueError):
        dessim.run_simulation(LOW_LOAD, 1, 100, engine="fast")
