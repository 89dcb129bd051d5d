import json
import math

import pytest
from hypothesis import given, strategies as st

from bran.core import (
    AttackerProfile,
    ConfigError,
    ConfirmationPolicy,
    SystemConfig,
    UnstableConfig,
    load_config,
    normalize_give_up,
    service_completion_rate,
    traffic_intensity,
)

rates = st.floats(min_value=1e-6, max_value=1e6, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize("lam_a, expected", [(0.4, 0.1), (2.8, 0.7)])
def test_traffic_intensity_values(lam_a, expected):
    assert traffic_intensity(SystemConfig(lam_a, 25.0, 1.0, 4)) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("kwargs", [
    dict(lambda_a=0.0, lambda_b=1.0),
    dict(lambda_a=1.0, lambda_b=-1.0),
    dict(lambda_a=1.0, lambda_b=1.0, lambda_c=math.inf),
    dict(lambda_a=1.0, lambda_b=1.0, s=0),
    dict(lambda_a=1.0, lambda_b=1.0, s=2.5),
    dict(lambda_a=math.nan, lambda_b=1.0),
])
def test_invalid_config_rejected(kwargs):
    with pytest.raises(ConfigError):
        SystemConfig(**kwargs)


@given(rates, rates, st.integers(1, 64), st.floats(1e-3, 1e3))
def test_rho_scale_invariant(lam_a, lam_c, s, c):
    a = SystemConfig(lam_a, 1.0, lam_c, s)
    b = SystemConfig(lam_a * c, 1.0, lam_c * c, s)
    assert a.rho == pytest.approx(b.rho, rel=1e-12)


def test_stability_flag_and_guard():
    assert SystemConfig.from_rho(0.99, 1.0, 3).stable
    cfg = SystemConfig(4.0, 1.0, 1.0, 4)
    assert not cfg.stable
    with pytest.raises(UnstableConfig) as err:
        cfg.require_stable()
    assert err.value.code == "UNSTABLE_CONFIG"


@pytest.mark.parametrize("j, expected", [(0, 0.0), (2, 2.0), (9, 4.0)])
def test_service_completion_rate(j, expected):
    assert service_completion_rate(j, SystemConfig(1.0, 1.0, 1.0, 4)) == expected


@given(st.integers(0, 1000), st.integers(1, 50), rates)
def test_service_rate_saturates(j, s, lam_c):
    r = service_completion_rate(j, SystemConfig(1.0, 1.0, lam_c, s))
    assert 0 <= r <= s * lam_c * (1 + 1e-15)


def test_confirmation_policy():
    assert ConfirmationPolicy(3).n_confirmations == 3
    for bad in (0, -1, 1.5, True):
        with pytest.raises(ConfigError):
            ConfirmationPolicy(bad)


@pytest.mark.parametrize("spelling", [None, math.inf, "inf", "Unbounded", "null", ""])
def test_unbounded_spellings(spelling):
    assert normalize_give_up(spelling) is None
    assert AttackerProfile(0.3, spelling).unbounded


def test_finite_give_up():
    assert normalize_give_up("25") == 25
    assert normalize_give_up(6.0) == 6
    for bad in (0, -3, 2.5, "abc"):
        with pytest.raises(ConfigError):
            normalize_give_up(bad)
    with pytest.raises(ConfigError):
        AttackerProfile(-0.1)


def test_load_config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"lambda_a": 2.8, "lambda_b": 25, "s": 4}))
    assert load_config(path)["s"] == 4

    with pytest.raises(ConfigError) as err:
        load_config(tmp_path / "missing.json")
    assert err.value.code == "CONFIG_NOT_FOUND"

    path.write_text("{not json")
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert err.value.code == "CONFIG_PARSE"

    path.write_text(json.dumps({"lambda_x": 1}))
    with pytest.raises(ConfigError):
        load_config(path)
