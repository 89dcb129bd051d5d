"""Configuration and shared domain types.

Times are expressed in units of the mean service time ``T_c = 1 / lambda_c``;
with the default ``lambda_c = 1`` every reported time is relative to ``T_c``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional


class ConfigError(ValueError):
    """Invalid parameter value; carries a machine-readable ``code``."""

    def __init__(self, message: str, code: str = "INVALID_CONFIG"):
        super().__init__(message)
        self.code = code


class UnstableConfig(ConfigError):
    """Raised when ``rho >= 1`` and no steady state exists."""

    def __init__(self, message: str):
        super().__init__(message, code="UNSTABLE_CONFIG")


def _positive(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ConfigError(f"{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class SystemConfig:
    """The basic configuration ``{lambda_a, lambda_b, lambda_c, s}``."""

    lambda_a: float
    lambda_b: float
    lambda_c: float = 1.0
    s: int = 1

    def __post_init__(self) -> None:
        _positive("lambda_a", self.lambda_a)
        _positive("lambda_b", self.lambda_b)
        _positive("lambda_c", self.lambda_c)
        if isinstance(self.s, bool) or not isinstance(self.s, int) or self.s < 1:
            raise ConfigError(f"s must be an integer >= 1, got {self.s!r}")

    @property
    def rho(self) -> float:
        return traffic_intensity(self)

    @property
    def stable(self) -> bool:
        return self.rho < 1.0

    @property
    def t_a(self) -> float:
        return 1.0 / self.lambda_a

    @property
    def t_b(self) -> float:
        return 1.0 / self.lambda_b

    @property
    def t_c(self) -> float:
        return 1.0 / self.lambda_c

    def require_stable(self) -> None:
        if not self.stable:
            raise UnstableConfig(
                f"traffic intensity rho={self.rho!r} >= 1: no steady state exists"
            )

    @classmethod
    def from_rho(cls, rho: float, lambda_b: float, s: int, lambda_c: float = 1.0) -> "SystemConfig":
        """Build a config whose arrival rate gives traffic intensity ``rho``."""
        return cls(lambda_a=rho * s * lambda_c, lambda_b=lambda_b, lambda_c=lambda_c, s=s)


@dataclass(frozen=True)
class ConfirmationPolicy:
    n_confirmations: int = 1

    def __post_init__(self) -> None:
        n = self.n_confirmations
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise ConfigError(f"n_confirmations must be an integer >= 1, got {n!r}")


@dataclass(frozen=True)
class AttackerProfile:
    """Attacker mining rate relative to the honest network and its give-up depth.

    ``give_up=None`` means the attacker never abandons the fork.
    """

    beta: float
    give_up: Optional[int] = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise ConfigError(f"beta must be a finite number >= 0, got {self.beta!r}")
        object.__setattr__(self, "give_up", normalize_give_up(self.give_up))

    @property
    def unbounded(self) -> bool:
        return self.give_up is None


def normalize_give_up(give_up: Any) -> Optional[int]:
    """Map the accepted spellings of an unbounded threshold to ``None``.

    A finite threshold must be an integer >= 1; ``N_g = 0`` is rejected.
    """
    if give_up is None:
        return None
    if isinstance(give_up, float) and math.isinf(give_up) and give_up > 0:
        return None
    if isinstance(give_up, str):
        if give_up.strip().lower() in ("inf", "none", "null", "unbounded", ""):
            return None
        try:
            give_up = int(give_up)
        except ValueError:
            raise ConfigError(f"give_up must be an integer or 'inf', got {give_up!r}") from None
    if isinstance(give_up, float) and give_up.is_integer():
        give_up = int(give_up)
    if isinstance(give_up, bool) or not isinstance(give_up, int) or give_up < 1:
        raise ConfigError(f"finite give_up must be an integer >= 1, got {give_up!r}")
    return give_up


def traffic_intensity(cfg: SystemConfig) -> float:
    return cfg.lambda_a / (cfg.s * cfg.lambda_c)


def service_completion_rate(j: int, cfg: SystemConfig) -> float:
    """Aggregate completion rate with ``j`` confirmed requests: ``min(j, s) * lambda_c``."""
    if j < 0:
        raise ValueError(f"j must be >= 0, got {j}")
    return min(j, cfg.s) * cfg.lambda_c


CONFIG_KEYS = ("lambda_a", "lambda_b", "lambda_c", "s", "n_confirmations", "beta", "give_up", "seed")


def load_config(path: str | Path) -> dict[str, Any]:
    """Read a JSON config file into a plain dict restricted to known keys."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}", code="CONFIG_NOT_FOUND")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}", code="CONFIG_PARSE") from None
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a single JSON object", code="CONFIG_PARSE")
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}", code="CONFIG_PARSE")
    return raw
