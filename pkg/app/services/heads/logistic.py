"""L2-regularised logistic regression head."""
import math

import numpy as np

from app.errors import NonFinite
from app.logging_config import get_logger
from app.services.heads.base import BinaryHead, check_binary, sigmoid

logger = get_logger(__name__)


def logistic_objective(w, b, X, y_pm, C):
    """(1/2)||w||^2 + C * sum log(1 + exp(-y (w.x + b))), labels in {-1, +1}."""
    margins = y_pm * (X @ w + b)
    return 0.5 * float(w @ w) + C * float(np.sum(np.logaddexp(0.0, -margins)))


def logistic_gradient(w, b, X, y_pm, C):
    """Gradient of ``logistic_objective`` as (dw, db); the bias is not regularised."""
    margins = y_pm * (X @ w + b)
    coef = -y_pm * sigmoid(-margins)
    return w + C * (X.T @ coef), C * float(np.sum(coef))


class LogisticHead(BinaryHead):
    type = 'logistic'

    def __init__(self, weights, bias=0.0, C=1.0, iterations=0, converged=False, history=None):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)
        self.C = float(C)
        self.iterations = iterations
        self.converged = converged
        self.history = list(history or [])

    @classmethod
    def zeros(cls, dim, C=1.0):
        return cls(np.zeros(dim), 0.0, C)

    def decision_function(self, X):
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias

    def predict_proba(self, X):
        return sigmoid(self.decision_function(X))

    def to_dict(self):
        return {
            'type': self.type,
            'weights': self.weights.tolist(),
            'bias': self.bias,
            'C': self.C,
            'iterations': self.iterations,
            'converged': self.converged,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data['weights'], data['bias'], data['C'], data['iterations'], data['converged'])


def _lipschitz_bound(X, C):
    # Bound on the gradient's Lipschitz constant: 1 + C/4 * ||[X 1]||_F^2
    return 1.0 + 0.25 * C * (float(np.sum(X * X)) + X.shape[0])


def train_logistic(X, y, C=1.0, max_iters=1000, tol=1e-4):
    """
    Fit a logistic head by gradient descent with Armijo backtracking.

    Every accepted step lowers the objective, so ``history`` is monotone
    non-increasing. Stops when the gradient norm is <= tol or after max_iters.

    Args:
        X: (n, d) feature matrix
        y: binary targets (0/1 or -1/+1)
        C: weight of the loss term, > 0
        max_iters: iteration cap
        tol: gradient-norm tolerance

    Returns:
        LogisticHead
    """
    if C <= 0:
        raise ValueError(f'C must be > 0, got {C}')
    X, y = check_binary(X, y)
    y_pm = np.where(y > 0, 1.0, -1.0)

    w = np.zeros(X.shape[1])
    b = 0.0
    f = logistic_objective(w, b, X, y_pm, C)
    gw, gb = logistic_gradient(w, b, X, y_pm, C)
    history = [f]
    step = 1.0 / _lipschitz_bound(X, C)
    converged = False

    iteration = 0
    for iteration in range(1, max_iters + 1):
        grad_sq = float(gw @ gw) + gb * gb
        if math.sqrt(grad_sq) <= tol:
            converged = True
            break

        t = step
        while True:
            new_w = w - t * gw
            new_b = b - t * gb
            new_f = logistic_objective(new_w, new_b, X, y_pm, C)
            if not math.isfinite(new_f):
                raise NonFinite(f'Objective became non-finite at iteration {iteration}')
            if new_f <= f - 1e-4 * t * grad_sq:
                break
            t *= 0.5
            if t < 1e-20:
                break
        if t < 1e-20:
            logger.debug(f'Line search stalled at iteration {iteration}')
            break

        new_gw, new_gb = logistic_gradient(new_w, new_b, X, y_pm, C)
        # Barzilai-Borwein step for the next line search
        s_w, s_b = new_w - w, new_b - b
        d_w, d_b = new_gw - gw, new_gb - gb
        curvature = float(s_w @ d_w) + s_b * d_b
        step = (float(s_w @ s_w) + s_b * s_b) / curvature if curvature > 0 else 2.0 * t

        w, b, f, gw, gb = new_w, new_b, new_f, new_gw, new_gb
        history.append(f)
    else:
        converged = math.sqrt(float(gw @ gw) + gb * gb) <= tol

    logger.debug(f'Logistic head: C={C}, iterations={iteration}, objective={f:.6g}, converged={converged}')
    return LogisticHead(w, b, C, iterations=iteration, converged=converged, history=history)
