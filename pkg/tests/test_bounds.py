import math

import pytest
from hypothesis import given, settings, strategies as st

from bran import bounds, ctmc
from bran.core import SystemConfig, UnstableConfig
from tests.oracles import birth_death_erlang_c


@pytest.mark.parametrize("s, a, expected", [(1, 0.3, 0.3), (5, 0.0, 0.0), (2, 1.0, 1 / 3)])
def test_erlang_c_values(s, a, expected):
    assert bounds.erlang_c(s, a) == pytest.approx(expected, abs=1e-15)


def test_erlang_c_matches_birth_death_oracle():
    assert bounds.erlang_c(2, 1.0) == pytest.approx(birth_death_erlang_c(2, 1.0), abs=1e-12)


@pytest.mark.parametrize("s, a", [(3, 3.0), (3, 4.0), (0, 0.5), (2, -0.1)])
def test_erlang_c_domain(s, a):
    with pytest.raises(ValueError):
        bounds.erlang_c(s, a)


@given(st.integers(1, 40), st.floats(0.0, 0.999))
def test_erlang_c_is_probability_and_monotone(s, frac):
    a = frac * s
    c = bounds.erlang_c(s, a)
    assert 0 <= c <= 1
    assert bounds.erlang_c(s, min(a * 1.01, s * 0.9999)) >= c - 1e-15


def test_upper_bound_example():
    cfg = SystemConfig(2.5, 100.0, 1.0, 25)
    expect = 1 / 97.5 + bounds.erlang_c(25, 2.5) / 22.5
    assert bounds.latency_upper(1, cfg) == pytest.approx(expect, rel=1e-14)


def test_upper_bound_unbounded():
    assert bounds.latency_upper(1, SystemConfig(3.0, 3.0, 1.0, 4)) == math.inf
    assert bounds.latency_upper(2, SystemConfig(3.0, 2.0, 1.0, 4)) is bounds.UNBOUNDED


def test_lower_bounds():
    assert bounds.latency_lower_block(3, SystemConfig(1.0, 25.0, 1.0, 25)) == pytest.approx(0.12)
    assert bounds.latency_lower_mms(1, SystemConfig(1e-9, 25.0, 1.0, 25)) < 1e-12
    with pytest.raises(UnstableConfig):
        bounds.latency_lower_mms(1, SystemConfig(30.0, 25.0, 1.0, 25))


def test_pending_count_pmf():
    cfg = SystemConfig(2.0, 3.0, 1.0, 4)
    assert bounds.pending_count_pmf(cfg, 0) == pytest.approx(3 / 5)
    assert sum(bounds.pending_count_pmf(cfg, i) for i in range(200)) == pytest.approx(1.0, abs=1e-14)
    assert bounds.pending_count_pmf(cfg, -1) == 0


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 0.9), st.sampled_from([5.0, 25.0, 100.0]), st.integers(1, 25), st.integers(1, 4))
def test_bounds_sandwich_property(rho, lam_b, s, n):
    cfg = SystemConfig.from_rho(rho, lam_b, s)
    L = ctmc.expected_latency(n, cfg)
    eps = 1e-12 * max(1.0, L)
    assert bounds.latency_lower_block(n, cfg) <= L + eps
    assert bounds.latency_lower_mms(n, cfg) <= L + eps
    assert L <= bounds.latency_upper(n, cfg) + eps
