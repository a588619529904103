"""
Estimators Module
Supervised least squares, the oracle, self-learning, and projected semi-supervised fits
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from src.config import get_config_value
from src.data import SemiSplit
from src.errors import NotPositiveDefinite
from src.numerics import factor_solve, gram, spd_factor, spd_solve
from src.qp import BoxQP, QPOptions, solve

logger = logging.getLogger(__name__)

# Entry 0 is the bias weight.
WeightVector = np.ndarray

DECISION_THRESHOLD = 0.5


@dataclass(frozen=True)
class RidgeConfig:
    lam: float = 0.0
    penalize_bias: bool = False

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"ridge lambda must be non-negative, got {self.lam}")

    @classmethod
    def from_config(cls) -> "RidgeConfig":
        return cls(
            lam=float(get_config_value('ESTIMATORS.LAMBDA', 0.0)),
            penalize_bias=bool(get_config_value('ESTIMATORS.PENALIZE_BIAS', False)),
        )


class Variant(Enum):
    """Which metric X_o and which constraint set a projection uses.

    PROJECTION: X_o = [X; X_u], set built from labeled + unlabeled objects.
    ICLS: X_o = X, same set; minimizes labeled loss over the set.
    TRANSDUCTIVE: X_o = X_u, set built from unlabeled objects only.
    """

    PROJECTION = "projection"
    ICLS = "icls"
    TRANSDUCTIVE = "transductive"


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    w_semi: WeightVector
    y_u_hat: np.ndarray
    qp_objective: float
    iterations: int
    converged: bool


def fit_supervised(X: np.ndarray, y: np.ndarray, ridge: RidgeConfig = RidgeConfig()) -> WeightVector:
    """(X^T X + lambda I')^{-1} X^T y; I' skips the bias entry unless penalize_bias."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    A = gram(X)
    if ridge.lam > 0:
        penalty = np.full(X.shape[1], ridge.lam)
        if not ridge.penalize_bias and penalty.size:
            penalty[0] = 0.0
        A = A + np.diag(penalty)
    try:
        return spd_solve(A, X.T @ y)
    except NotPositiveDefinite as e:
        raise NotPositiveDefinite(
            f"{e}. X^T X is singular for {X.shape[0]} objects and {X.shape[1]} weights; "
            "add ridge or label more objects"
        ) from e


def fit_oracle(split: SemiSplit, ridge: RidgeConfig = RidgeConfig()) -> WeightVector:
    """Fit on labeled plus unlabeled objects with their true labels."""
    return fit_supervised(split.X_e, split.y_e_true, ridge)


def decision_values(w: WeightVector, X: np.ndarray) -> np.ndarray:
    return np.asarray(X, dtype=float) @ np.asarray(w, dtype=float)


def classify(w: WeightVector, X: np.ndarray) -> np.ndarray:
    """Label 1 where the decision value is at least 0.5, else 0."""
    return (decision_values(w, X) >= DECISION_THRESHOLD).astype(float)


def fit_self_learning(
    split: SemiSplit,
    ridge: RidgeConfig = RidgeConfig(),
    max_iter: int | None = None,
) -> WeightVector:
    """Pseudo-label every unlabeled object, refit, repeat until the labels repeat."""
    if max_iter is None:
        max_iter = int(get_config_value('ESTIMATORS.SELF_LEARNING_MAX_ITER', 100))

    w = fit_supervised(split.X, split.y, ridge)
    if split.n_unlabeled == 0:
        return w

    X_e = split.X_e
    previous = None
    for iteration in range(max_iter):
        pseudo = classify(w, split.X_u)
        if previous is not None and np.array_equal(pseudo, previous):
            logger.debug("Self-learning labels stable after %d refits", iteration)
            return w
        w = fit_supervised(X_e, np.concatenate([split.y, pseudo]), ridge)
        previous = pseudo

    logger.debug("Self-learning hit max_iter=%d before its labels settled", max_iter)
    return w


def needs_update(w_sup: WeightVector, X_u: np.ndarray) -> bool:
    """True iff some unlabeled decision value leaves [0, 1]."""
    values = decision_values(w_sup, X_u)
    return bool(np.any((values > 1.0) | (values < 0.0)))


class ConstraintMap:
    """Affine map from soft labels y_u in [0,1]^N_u to weight vectors in the set.

    w(y_u) = G^{-1} D^T [y; y_u] for PROJECTION and ICLS (D = [X; X_u]) and
    w(y_u) = G^{-1} X_u^T y_u for TRANSDUCTIVE, with G = D^T D. The map always uses
    the unregularized solution, whatever ridge the supervised fit carries.
    """

    def __init__(self, split: SemiSplit, variant: Variant):
        self.variant = variant
        self.y = np.asarray(split.y, dtype=float)
        if variant is Variant.TRANSDUCTIVE:
            self.design = split.X_u
            self.n_fixed = 0
        else:
            self.design = split.X_e
            self.n_fixed = split.n_labeled
        self.n_free = split.n_unlabeled

        G = gram(self.design)
        try:
            self._factor = spd_factor(G)
        except NotPositiveDefinite as e:
            raise NotPositiveDefinite(
                f"{e}. The {variant.value} constraint set needs a full-rank design "
                f"({self.design.shape[0]} objects, {self.design.shape[1]} weights)"
            ) from e

        A = factor_solve(self._factor, self.design.T)
        self.A_l = A[:, :self.n_fixed]
        self.A_u = A[:, self.n_fixed:]

    def labels(self, y_u: np.ndarray) -> np.ndarray:
        y_u = np.asarray(y_u, dtype=float)
        if self.n_fixed:
            return np.concatenate([self.y, y_u])
        return y_u

    def weights(self, y_u: np.ndarray) -> WeightVector:
        """Closed-form fit on the design with the given soft labels."""
        return factor_solve(self._factor, self.design.T @ self.labels(y_u))


def constraint_map(split: SemiSplit, variant: Variant) -> ConstraintMap:
    return ConstraintMap(split, variant)


def metric_design(split: SemiSplit, variant: Variant) -> np.ndarray:
    """X_o, the objects on which distances between weight vectors are measured."""
    if variant is Variant.PROJECTION:
        return split.X_e
    if variant is Variant.ICLS:
        return split.X
    return split.X_u


def build_projection_qp(
    split: SemiSplit,
    variant: Variant,
    ridge: RidgeConfig = RidgeConfig(),
    w_sup: WeightVector | None = None,
    cmap: ConstraintMap | None = None,
) -> BoxQP:
    """Squared distance d(w(y_u), w_sup)^2 as a box QP in y_u.

    With r = A_l y - w_sup and M = X_o^T X_o:
    H = 2 A_u^T M A_u, g = 2 A_u^T M r, c = r^T M r.
    """
    if w_sup is None:
        w_sup = fit_supervised(split.X, split.y, ridge)
    if cmap is None:
        cmap = constraint_map(split, variant)

    r = cmap.A_l @ cmap.y - w_sup if cmap.n_fixed else -np.asarray(w_sup, dtype=float)
    M = gram(metric_design(split, variant))
    MA_u = M @ cmap.A_u

    H = 2.0 * cmap.A_u.T @ MA_u
    H = 0.5 * (H + H.T)
    g = 2.0 * MA_u.T @ r
    c = float(r @ M @ r)

    factor = None
    try:
        # M = C C^T, so H = F^T F with F = sqrt(2) C^T A_u
        lower = np.tril(spd_factor(M)[0])
        factor = np.sqrt(2.0) * lower.T @ cmap.A_u
    except NotPositiveDefinite:
        logger.debug("Metric matrix is singular; using dense Hessian products")

    return BoxQP(H=H, g=g, c=c, factor=factor)


def fit_projected(
    split: SemiSplit,
    variant: Variant = Variant.PROJECTION,
    ridge: RidgeConfig = RidgeConfig(),
    qp_options: QPOptions | None = None,
    w_sup: WeightVector | None = None,
) -> ProjectionResult:
    """Project w_sup onto the constraint set and return the closest member.

    The QP starts at clip(X_u w_sup, 0, 1), which is already optimal when no
    unlabeled decision value leaves [0, 1] and lambda is 0.
    """
    if qp_options is None:
        qp_options = QPOptions.from_config()
    if w_sup is None:
        w_sup = fit_supervised(split.X, split.y, ridge)
    w_sup = np.asarray(w_sup, dtype=float)

    cmap = constraint_map(split, variant)
    if split.n_unlabeled == 0:
        w_semi = cmap.weights(np.zeros(0))
        return ProjectionResult(w_semi, np.zeros(0), 0.0, 0, True)

    qp = build_projection_qp(split, variant, ridge, w_sup=w_sup, cmap=cmap)
    init = np.clip(decision_values(w_sup, split.X_u), 0.0, 1.0)
    solution = solve(
        qp, init, tol=qp_options.tol, max_iter=qp_options.max_iter, polish=qp_options.polish,
    )
    if not solution.converged:
        logger.warning(
            "%s projection did not converge (pg-norm %.3e after %d iterations)",
            variant.value, solution.pg_norm, solution.iterations,
        )

    return ProjectionResult(
        w_semi=cmap.weights(solution.y),
        y_u_hat=solution.y,
        qp_objective=solution.objective,
        iterations=solution.iterations,
        converged=solution.converged,
    )


ESTIMATOR_NAMES = ("supervised", "self_learning", "projection", "icls", "transductive", "oracle")


@dataclass(frozen=True, eq=False)
class FitOutcome:
    w: WeightVector
    converged: bool = True


def fit(
    name: str,
    split: SemiSplit,
    ridge: RidgeConfig = RidgeConfig(),
    qp_options: QPOptions | None = None,
    self_learning_max_iter: int | None = None,
) -> FitOutcome:
    """Fit the estimator registered under `name`."""
    if name == "supervised":
        return FitOutcome(fit_supervised(split.X, split.y, ridge))
    if name == "self_learning":
        return FitOutcome(fit_self_learning(split, ridge, self_learning_max_iter))
    if name == "oracle":
        return FitOutcome(fit_oracle(split, ridge))
    if name in ("projection", "icls", "transductive"):
        result = fit_projected(split, Variant(name), ridge, qp_options)
        return FitOutcome(result.w_semi, result.converged)
    raise ValueError(f"Unknown estimator '{name}'. Choose from: {', '.join(ESTIMATOR_NAMES)}")
