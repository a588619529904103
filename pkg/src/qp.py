"""
QP Module
Box-constrained convex quadratic programs over [0,1]^n, solved by projected gradient
"""

import logging
from dataclasses import dataclass

import numpy as np

from src.config import get_config_value
from src.errors import DimensionTooLarge
from src.numerics import min_norm_solve, spectral_bound

logger = logging.getLogger(__name__)

LOWER, UPPER = 0.0, 1.0
GRID_ORACLE_MAX_DIM = 2
POLISH_ROUNDS = 5


@dataclass(frozen=True, eq=False)
class BoxQP:
    """J(y) = 1/2 y^T H y + g^T y + c subject to 0 <= y <= 1.

    When `factor` is given, H == factor.T @ factor and Hessian-vector products go
    through the (usually much thinner) factor.
    """

    H: np.ndarray
    g: np.ndarray
    c: float = 0.0
    factor: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.g)
        if self.H.shape != (n, n):
            raise ValueError(f"H has shape {self.H.shape}, expected {(n, n)}")
        scale = 1.0 + (float(np.max(np.abs(self.H))) if n else 0.0)
        if n and not np.allclose(self.H, self.H.T, rtol=0.0, atol=1e-10 * scale):
            raise ValueError("H must be symmetric")
        if self.factor is not None and self.factor.shape[1] != n:
            raise ValueError("factor must have one column per coordinate")

    @property
    def size(self) -> int:
        return len(self.g)

    def hess_vec(self, y: np.ndarray) -> np.ndarray:
        if self.factor is not None:
            return self.factor.T @ (self.factor @ y)
        return self.H @ y

    def lipschitz(self) -> float:
        if self.factor is not None:
            # F^T F and F F^T share their nonzero spectrum
            return spectral_bound(self.factor @ self.factor.T)
        return spectral_bound(self.H)


@dataclass(frozen=True, eq=False)
class QPSolution:
    y: np.ndarray
    objective: float
    iterations: int
    converged: bool
    pg_norm: float


@dataclass(frozen=True)
class QPOptions:
    tol: float = 1e-8
    max_iter: int = 10_000
    polish: bool = True

    @classmethod
    def from_config(cls) -> "QPOptions":
        return cls(
            tol=float(get_config_value('QP.TOL', cls.tol)),
            max_iter=int(get_config_value('QP.MAX_ITER', cls.max_iter)),
            polish=bool(get_config_value('QP.POLISH', cls.polish)),
        )


def objective(qp: BoxQP, y: np.ndarray) -> float:
    y = np.asarray(y, dtype=float)
    return float(0.5 * y @ qp.hess_vec(y) + qp.g @ y + qp.c)


def gradient(qp: BoxQP, y: np.ndarray) -> np.ndarray:
    return qp.hess_vec(np.asarray(y, dtype=float)) + qp.g


def _clip(y: np.ndarray) -> np.ndarray:
    return np.clip(y, LOWER, UPPER)


def projected_gradient_norm(y: np.ndarray, grad: np.ndarray) -> float:
    """||y - clip(y - grad)||, zero exactly at a KKT point of the box problem."""
    return float(np.linalg.norm(y - _clip(y - grad)))


def solve(
    qp: BoxQP,
    init: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    polish: bool = True,
) -> QPSolution:
    """Projected gradient descent with the fixed step 1/L, L >= largest eigenvalue of H.

    Stops once the projected-gradient norm drops below tol * (1 + ||g||) or after
    max_iter steps; the objective never increases between iterates. A converged
    iterate is then polished by exact solves on its free coordinates.
    """
    n = qp.size
    y = _clip(np.zeros(n) if init is None else np.asarray(init, dtype=float).copy())
    threshold = tol * (1.0 + float(np.linalg.norm(qp.g)))

    L = qp.lipschitz()
    if L == 0.0:
        # linear objective: minimized coordinate-wise at a vertex
        y = np.where(qp.g > 0, LOWER, np.where(qp.g < 0, UPPER, y))
        grad = qp.g.copy()
        pg = projected_gradient_norm(y, grad)
        return QPSolution(y, objective(qp, y), 0, pg <= threshold, pg)

    Hy = qp.hess_vec(y)
    grad = Hy + qp.g
    f = float(0.5 * y @ Hy + qp.g @ y + qp.c)
    pg = projected_gradient_norm(y, grad)

    iterations = 0
    while pg > threshold and iterations < max_iter:
        y_next = _clip(y - grad / L)
        Hy = qp.hess_vec(y_next)
        f_next = float(0.5 * y_next @ Hy + qp.g @ y_next + qp.c)
        if __debug__:
            slack = 1e-10 * (1.0 + abs(qp.c) + abs(f) + abs(float(qp.g @ y_next)))
            assert f_next <= f + slack, f"objective increased: {f} -> {f_next}"
        y, f = y_next, f_next
        grad = Hy + qp.g
        pg = projected_gradient_norm(y, grad)
        iterations += 1

    converged = pg <= threshold
    if converged and polish:
        y, f = _polish(qp, y, f, threshold)
        pg = projected_gradient_norm(y, gradient(qp, y))
    if not converged:
        logger.warning(
            "Projected gradient stopped after %d iterations with pg-norm %.3e (threshold %.3e)",
            iterations, pg, threshold,
        )
    else:
        logger.debug("Projected gradient converged in %d iterations", iterations)
    return QPSolution(y=y, objective=f, iterations=iterations, converged=converged, pg_norm=pg)


def _free_step(qp: BoxQP, grad: np.ndarray, free: np.ndarray) -> np.ndarray:
    """Minimum-norm Newton step restricted to the free coordinates."""
    if qp.factor is not None:
        F_free = qp.factor[:, free]
        # H_free = F_free^T F_free; route the solve through the thin factor
        z = min_norm_solve(F_free.T, grad[free])
        return -min_norm_solve(F_free, z)
    return -min_norm_solve(qp.H[np.ix_(free, free)], grad[free])


def _polish(qp: BoxQP, y: np.ndarray, f: float, threshold: float) -> tuple[np.ndarray, float]:
    """Replace y by the exact minimizer over its free face while that lowers J.

    A coordinate is held when it sits on a bound and the gradient pushes it
    outward. Each round keeps its (clipped) candidate only if the objective drops
    and the projected-gradient norm stays within threshold.
    """
    for _ in range(POLISH_ROUNDS):
        grad = gradient(qp, y)
        held = ((y <= LOWER) & (grad >= 0)) | ((y >= UPPER) & (grad <= 0))
        free = ~held
        if not free.any():
            break
        candidate = y.copy()
        candidate[free] += _free_step(qp, grad, free)
        candidate = _clip(candidate)
        f_next = objective(qp, candidate)
        if not f_next < f:
            break
        if projected_gradient_norm(candidate, gradient(qp, candidate)) > threshold:
            break
        y, f = candidate, f_next
    return y, f


def grid_oracle(qp: BoxQP, resolution: float) -> np.ndarray:
    """Exhaustive argmin over the grid {0, r, 2r, ..., 1}^n for n <= 2.

    Ties go to the first point in lexicographic scan order.
    """
    n = qp.size
    if n > GRID_ORACLE_MAX_DIM:
        raise DimensionTooLarge(f"grid oracle supports at most {GRID_ORACLE_MAX_DIM} coordinates, got {n}")
    if not 0 < resolution <= 1:
        raise ValueError("resolution must lie in (0, 1]")

    steps = int(round(1.0 / resolution))
    axis = np.minimum(np.arange(steps + 1) * resolution, 1.0)
    if axis[-1] < 1.0:
        axis = np.append(axis, 1.0)

    if n == 0:
        return np.zeros(0)
    # ij indexing enumerates points in lexicographic order
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    values = 0.5 * np.einsum("ij,jk,ik->i", points, qp.H, points) + points @ qp.g + qp.c
    return points[int(np.argmin(values))].copy()
