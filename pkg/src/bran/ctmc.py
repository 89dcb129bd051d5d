"""One-confirmation queueing chain E(i, j) and its steady state.

``i`` counts pending requests not yet assembled into a block, ``j`` counts
confirmed requests waiting for or receiving service. From E(i, j):

* an arrival (rate ``lambda_a``) moves to E(i+1, j),
* a block (rate ``lambda_b``) moves to E(0, i+j),
* a service completion (rate ``min(j, s) * lambda_c``) moves to E(i, j-1).

The generator is stored column-oriented, ``Q[to, from]``, so the steady
state solves ``Q w = 0``. States are enumerated anti-diagonal by
anti-diagonal: (0,0) | (1,0) (0,1) | (2,0) (1,1) (0,2) | ...
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import ConfigError, ConfirmationPolicy, SystemConfig

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
MAX_BOUNDARY_MASS = 1e-8
DEFAULT_ITERATION_CAP = 10**6


class NonConvergence(RuntimeError):
    code = "NON_CONVERGENCE"


class TruncationTooSmall(RuntimeError):
    """Steady-state mass on the truncation boundary exceeds the allowed level."""

    code = "TRUNCATION_TOO_SMALL"

    def __init__(self, message: str, boundary_mass: float):
        super().__init__(message)
        self.boundary_mass = boundary_mass


@dataclass(frozen=True)
class QueueState:
    i: int
    j: int

    def __post_init__(self) -> None:
        if self.i < 0 or self.j < 0:
            raise ValueError(f"queue state counts must be >= 0, got ({self.i}, {self.j})")


@dataclass(frozen=True)
class Truncation:
    i_max: int
    j_max: int

    def __post_init__(self) -> None:
        if self.i_max < 1 or self.j_max < 1:
            raise ConfigError(f"truncation bounds must be >= 1, got {self}")

    @classmethod
    def default(cls, cfg: SystemConfig) -> "Truncation":
        """``i_max`` from the geometric pending-count tail, ``j_max = max(200, 8 s, i_max)``.

        The pending count is geometric with ratio ``lambda_a / (lambda_a + lambda_b)``,
        so ``i_max`` is the smallest depth whose tail mass is below 1e-15.
        """
        ratio = cfg.lambda_a / (cfg.lambda_a + cfg.lambda_b)
        i_max = max(20, int(math.ceil(math.log(1e-15) / math.log(ratio))))
        return cls(i_max, max(200, 8 * cfg.s, i_max))

    def doubled(self) -> "Truncation":
        return Truncation(2 * self.i_max, 2 * self.j_max)


def enumerate_states(trunc: Truncation) -> tuple[np.ndarray, np.ndarray]:
    """States of the box in anti-diagonal order, as parallel ``(i, j)`` arrays."""
    ii, jj = np.meshgrid(
        np.arange(trunc.i_max + 1), np.arange(trunc.j_max + 1), indexing="ij"
    )
    ii, jj = ii.ravel(), jj.ravel()
    # primary key: diagonal i + j; within a diagonal, larger i first
    order = np.lexsort((-ii, ii + jj))
    return ii[order], jj[order]


@dataclass
class GeneratorMatrix:
    matrix: sp.csc_matrix
    i: np.ndarray
    j: np.ndarray
    truncation: Truncation
    cfg: SystemConfig

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def index(self, i: int, j: int) -> int:
        return int(self._index_grid[i, j])

    @property
    def _index_grid(self) -> np.ndarray:
        grid = np.empty((self.truncation.i_max + 1, self.truncation.j_max + 1), dtype=np.int64)
        grid[self.i, self.j] = np.arange(len(self.i))
        return grid

    def transitions_from(self, i: int, j: int) -> dict[tuple[int, int], float]:
        """Off-diagonal outgoing rates of E(i, j), keyed by target state."""
        col = self.matrix.getcol(self.index(i, j)).tocoo()
        src = self.index(i, j)
        return {
            (int(self.i[r]), int(self.j[r])): float(v)
            for r, v in zip(col.row, col.data)
            if r != src and v != 0.0
        }


def build_generator(cfg: SystemConfig, trunc: Truncation) -> GeneratorMatrix:
    """Generator of the truncated chain; transitions leaving the box are dropped."""
    if trunc.j_max < cfg.s:
        raise ConfigError(f"j_max={trunc.j_max} must be >= s={cfg.s}")
    if trunc.i_max > trunc.j_max:
        # (i_max, 0) would have no way out: arrivals and the block jump both leave the box
        raise ConfigError(f"i_max={trunc.i_max} must not exceed j_max={trunc.j_max}")
    I, J = enumerate_states(trunc)
    n = len(I)
    grid = np.empty((trunc.i_max + 1, trunc.j_max + 1), dtype=np.int64)
    grid[I, J] = np.arange(n)
    src = np.arange(n)

    rows, cols, vals = [], [], []

    arr = I + 1 <= trunc.i_max
    rows.append(grid[I[arr] + 1, J[arr]])
    cols.append(src[arr])
    vals.append(np.full(arr.sum(), cfg.lambda_a))

    # blocks from i = 0 are self-loops and are omitted
    blk = (I >= 1) & (I + J <= trunc.j_max)
    rows.append(grid[0, (I + J)[blk]])
    cols.append(src[blk])
    vals.append(np.full(blk.sum(), cfg.lambda_b))

    svc = J >= 1
    rows.append(grid[I[svc], J[svc] - 1])
    cols.append(src[svc])
    vals.append(np.minimum(J[svc], cfg.s) * cfg.lambda_c)

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals).astype(float)
    outflow = np.bincount(cols, weights=vals, minlength=n)

    Q = sp.coo_matrix(
        (np.concatenate([vals, -outflow]), (np.concatenate([rows, src]), np.concatenate([cols, src]))),
        shape=(n, n),
    ).tocsc()
    return GeneratorMatrix(Q, I, J, trunc, cfg)


@dataclass
class StateDistribution:
    i: np.ndarray
    j: np.ndarray
    p: np.ndarray
    truncation: Truncation
    residual: float
    boundary_mass: float = field(default=0.0)

    def prob(self, i: int, j: int) -> float:
        hit = (self.i == i) & (self.j == j)
        return float(self.p[hit].sum())

    def items(self) -> Iterator[tuple[QueueState, float]]:
        for a, b, q in zip(self.i, self.j, self.p):
            yield QueueState(int(a), int(b)), float(q)

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {(int(a), int(b)): float(q) for a, b, q in zip(self.i, self.j, self.p)}

    def pending_marginal(self) -> np.ndarray:
        return np.bincount(self.i, weights=self.p, minlength=self.truncation.i_max + 1)

    def confirmed_marginal(self) -> np.ndarray:
        return np.bincount(self.j, weights=self.p, minlength=self.truncation.j_max + 1)

    @classmethod
    def point_mass(cls, i: int, j: int) -> "StateDistribution":
        return cls(
            np.array([i]), np.array([j]), np.array([1.0]),
            Truncation(max(i, 1), max(j, 1)), residual=0.0,
        )


def _boundary_mass(Q: GeneratorMatrix, w: np.ndarray) -> float:
    edge = (Q.i == Q.truncation.i_max) | (Q.j == Q.truncation.j_max)
    return float(w[edge].sum())


def _direct_solve(A: sp.csc_matrix) -> np.ndarray:
    # Pin w(0,0) = 1 and drop its balance equation (it is redundant). A dense
    # normalisation row would destroy the sparsity of the LU factors.
    B = A[1:, 1:].tocsc()
    rhs = -A[1:, 0].toarray().ravel()
    lu = spla.splu(B, permc_spec="MMD_AT_PLUS_A")
    x = lu.solve(rhs)
    x += lu.solve(rhs - B @ x)
    w = np.concatenate([[1.0], x])
    return w / w.sum()


def _power_solve(A: sp.csc_matrix, tol: float, cap: int) -> np.ndarray:
    n = A.shape[0]
    uniform_rate = float(np.max(-A.diagonal())) * 1.05
    P = sp.identity(n, format="csc") + A / uniform_rate
    w = np.full(n, 1.0 / n)
    for _ in range(cap):
        nxt = P @ w
        nxt /= nxt.sum()
        if np.max(np.abs(A @ nxt)) <= tol:
            return nxt
        w = nxt
    raise NonConvergence(f"power iteration did not reach residual {tol} within {cap} steps")


def solve_steady_state(
    Q: GeneratorMatrix,
    tol: float = DEFAULT_TOL,
    *,
    method: str = "direct",
    iteration_cap: int = DEFAULT_ITERATION_CAP,
    max_boundary_mass: Optional[float] = MAX_BOUNDARY_MASS,
) -> StateDistribution:
    """Steady-state distribution of ``Q`` with ``||Q w||_inf <= tol``.

    Raises ``UnstableConfig`` for ``rho >= 1`` and ``TruncationTooSmall`` when
    the boundary mass exceeds ``max_boundary_mass`` (pass ``None`` to skip).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    Q.cfg.require_stable()
    A = Q.matrix
    if method == "direct":
        w = _direct_solve(A)
    elif method == "power":
        w = _power_solve(A, tol, iteration_cap)
    else:
        raise ValueError(f"unknown method {method!r}")

    w = np.where(w < 0, 0.0, w)
    w /= w.sum()
    residual = float(np.max(np.abs(A @ w)))
    if residual > tol:
        raise NonConvergence(f"steady-state residual {residual:.3e} exceeds tolerance {tol:.1e}")
    edge = _boundary_mass(Q, w)
    if max_boundary_mass is not None and edge > max_boundary_mass:
        raise TruncationTooSmall(
            f"boundary mass {edge:.3e} exceeds {max_boundary_mass:.1e}; enlarge the truncation",
            edge,
        )
    return StateDistribution(Q.i.copy(), Q.j.copy(), w, Q.truncation, residual, edge)


def steady_state(
    cfg: SystemConfig,
    trunc: Optional[Truncation] = None,
    tol: float = DEFAULT_TOL,
    max_doublings: int = 3,
) -> StateDistribution:
    """Build and solve; without an explicit truncation, grow the box until it is big enough."""
    cfg.require_stable()
    if trunc is not None:
        return solve_steady_state(build_generator(cfg, trunc), tol)
    trunc = Truncation.default(cfg)
    for attempt in range(max_doublings + 1):
        try:
            return solve_steady_state(build_generator(cfg, trunc), tol)
        except TruncationTooSmall:
            if attempt == max_doublings:
                raise
            log.info("boundary mass too large at %s, doubling", trunc)
            trunc = trunc.doubled()
    raise AssertionError("unreachable")


def mean_outstanding(w: StateDistribution) -> float:
    return float(np.dot(w.i + w.j, w.p))


def sojourn_time(w: StateDistribution, cfg: SystemConfig) -> float:
    """Mean time in system for one confirmation, by Little's law."""
    return cfg.t_a * mean_outstanding(w)


def latency_from_distribution(w: StateDistribution, cfg: SystemConfig, n_confirmations: int) -> float:
    value = sojourn_time(w, cfg) + cfg.t_b * (n_confirmations - 1) - cfg.t_c
    if value < 0:
        log.warning("negative latency %.3e clamped to 0", value)
        value = 0.0
    return value


def latency_shifted_variant(w: StateDistribution, cfg: SystemConfig) -> float:
    """Alternative one-confirmation latency ``T_a * sum (i + (j-1)^+) w``.

    Agrees with the main expression only when the busy probability equals
    ``lambda_a * T_c`` (e.g. ``s = 1``); exposed for comparison.
    """
    return cfg.t_a * float(np.dot(w.i + np.maximum(w.j - 1, 0), w.p))


def expected_latency(
    n: ConfirmationPolicy | int,
    cfg: SystemConfig,
    trunc: Optional[Truncation] = None,
    tol: float = DEFAULT_TOL,
) -> float:
    """Mean waiting time before service with ``n`` required confirmations."""
    if not isinstance(n, ConfirmationPolicy):
        n = ConfirmationPolicy(n)
    w = steady_state(cfg, trunc, tol)
    return latency_from_distribution(w, cfg, n.n_confirmations)
