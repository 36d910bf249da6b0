"""L2-penalized logistic regression fitted by IRLS."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TrainingDivergedError
from ..util import sigmoid, stable_matvec

MAX_ITER = 100
TOL = 1e-8


@dataclass
class LogisticState:
    weights: np.ndarray
    bias: float

    def predict_scores(self, x: np.ndarray) -> np.ndarray:
        return sigmoid(stable_matvec(x, self.weights, bias=self.bias))

    def to_jsonable(self) -> dict:
        return {
            "model": "logistic",
            "weights": self.weights.tolist(),
            "bias": self.bias,
        }

    @classmethod
    def from_jsonable(cls, payload: dict) -> "LogisticState":
        return cls(np.asarray(payload["weights"], dtype=np.float64), payload["bias"])


def fit_logistic(hp: dict, x: np.ndarray, y: np.ndarray) -> LogisticState:
    """Penalized maximum likelihood, ridge strength 1/C, bias unpenalized."""
    n, d = x.shape
    lam = 1.0 / float(hp["c"])
    a = np.empty((n, d + 1), dtype=np.float64)
    a[:, 0] = 1.0
    a[:, 1:] = x
    beta = np.zeros(d + 1, dtype=np.float64)
    penalty = np.full(d + 1, lam)
    penalty[0] = 0.0

    for iteration in range(MAX_ITER):
        z = a @ beta
        p = sigmoid(z)
        grad = a.T @ (p - y) + penalty * beta
        if not np.all(np.isfinite(grad)):
            raise TrainingDivergedError("non-finite gradient in IRLS", iteration)
        if np.max(np.abs(grad)) < TOL:
            break
        w = p * (1.0 - p)
        hess = (a * w[:, None]).T @ a
        hess[np.diag_indices_from(hess)] += penalty + 1e-12
        beta = beta - np.linalg.solve(hess, grad)

    return LogisticState(weights=beta[1:], bias=float(beta[0]))
