"""
Evaluation Module
Quadratic loss, error rate, the weighted metric between weight vectors, and loss ratios
"""

from dataclasses import dataclass

import numpy as np

from src.errors import DegenerateDenominator
from src.estimators import WeightVector, classify, decision_values

SCOPES = ("train_all", "unlabeled_only", "test")


@dataclass(frozen=True)
class EvalRecord:
    loss_sup: float
    loss_semi: float
    ratio: float
    error_sup: float
    error_semi: float
    scope: str

    def __post_init__(self):
        if self.scope not in SCOPES:
            raise ValueError(f"Unknown scope '{self.scope}'")


def quadratic_loss(w: WeightVector, X: np.ndarray, y: np.ndarray) -> float:
    """||Xw - y||^2, summed, not averaged."""
    residual = decision_values(w, X) - np.asarray(y, dtype=float)
    return float(residual @ residual)


def error_rate(w: WeightVector, X: np.ndarray, y: np.ndarray) -> float:
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        return 0.0
    return float(np.mean(classify(w, X) != y))


def metric_distance(w: WeightVector, w2: WeightVector, X_o: np.ndarray) -> float:
    """sqrt((w - w2)^T X_o^T X_o (w - w2)), computed as ||X_o w - X_o w2||."""
    diff = decision_values(w, X_o) - decision_values(w2, X_o)
    return float(np.sqrt(diff @ diff))


def loss_ratio(w_semi: WeightVector, w_sup: WeightVector, X: np.ndarray, y: np.ndarray) -> float:
    denominator = quadratic_loss(w_sup, X, y)
    if denominator == 0.0:
        raise DegenerateDenominator("supervised loss is zero; the ratio is undefined")
    return quadratic_loss(w_semi, X, y) / denominator


def contrastive_value(
    w: WeightVector,
    w_sup: WeightVector,
    X: np.ndarray,
    y: np.ndarray,
    X_u: np.ndarray,
) -> float:
    """max over y_u in [0,1]^N_u of L(w, X_e, y_e) - L(w_sup, X_e, y_e).

    Per unlabeled object the difference is affine in y_u,i with slope
    -2 (x_i^T w - x_i^T w_sup), so the worst labeling is 0 where w predicts higher
    than w_sup and 1 otherwise.
    """
    labeled = quadratic_loss(w, X, y) - quadratic_loss(w_sup, X, y)
    p = decision_values(w, X_u)
    q = decision_values(w_sup, X_u)
    worst = np.where(p > q, 0.0, 1.0)
    unlabeled = np.sum((p - worst) ** 2 - (q - worst) ** 2)
    return float(labeled + unlabeled)


def evaluate(
    w_semi: WeightVector,
    w_sup: WeightVector,
    X: np.ndarray,
    y: np.ndarray,
    scope: str,
) -> EvalRecord:
    """Compare a semi-supervised fit with its supervised counterpart on one block."""
    loss_sup = quadratic_loss(w_sup, X, y)
    loss_semi = quadratic_loss(w_semi, X, y)
    return EvalRecord(
        loss_sup=loss_sup,
        loss_semi=loss_semi,
        ratio=loss_ratio(w_semi, w_sup, X, y),
        error_sup=error_rate(w_sup, X, y),
        error_semi=error_rate(w_semi, X, y),
        scope=scope,
    )
