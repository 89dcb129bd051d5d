import pytest

from bran import ctmc, security
from bran.core import SystemConfig, UnstableConfig
from bran.tradeoff import tradeoff_curve


def test_curve_shape():
    cfg = SystemConfig.from_rho(0.1, 25.0, 25)
    pts = tradeoff_curve(cfg, 0.2)
    assert [p.n for p in pts] == list(range(1, 11))
    assert all(b.attack_prob < a.attack_prob for a, b in zip(pts, pts[1:]))
    assert all(b.latency - a.latency == pytest.approx(0.04, abs=1e-12) for a, b in zip(pts, pts[1:]))
    assert pts[0].latency == pytest.approx(ctmc.expected_latency(1, cfg), abs=1e-15)
    assert pts[3].attack_prob == security.attack_success_prob(4, 0.2)


def test_powerless_attacker_degenerates():
    pts = tradeoff_curve(SystemConfig.from_rho(0.4, 25.0, 5), 0.0, n_max=4)
    assert all(p.attack_prob == 0.0 for p in pts)


def test_rejects_bad_input():
    cfg = SystemConfig.from_rho(0.4, 25.0, 5)
    with pytest.raises(ValueError):
        tradeoff_curve(cfg, 0.2, n_max=0)
    with pytest.raises(ValueError):
        tradeoff_curve(cfg, -0.1)
    with pytest.raises(UnstableConfig):
        tradeoff_curve(SystemConfig(6.0, 25.0, 1.0, 5), 0.2)
