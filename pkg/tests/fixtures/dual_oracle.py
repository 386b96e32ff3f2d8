"""
Reference checks for the soft-margin SVM dual.

The dual is min 1/2 a'Qa - e'a with Q_ij = y_i y_j K_ij, 0 <= a <= C and
sum a_i y_i = 0. A dense grid over the box, with the last coefficient
fixed by the equality constraint, bounds the optimum from above.
"""

import itertools

import numpy as np


def dual_objective(K, y, alpha):
    Q = np.outer(y, y) * K
    return 0.5 * float(alpha @ Q @ alpha) - float(np.sum(alpha))


def grid_dual_minimum(K, y, C, steps):
    """Smallest dual objective over a grid of feasible coefficient vectors."""
    y = np.asarray(y, dtype=np.float64)
    Q = np.outer(y, y) * K
    axis = np.linspace(0.0, C, steps)
    head = np.array(list(itertools.product(axis, repeat=y.shape[0] - 1)))
    last = -y[-1] * (head @ y[:-1])
    feasible = (last >= -1e-12) & (last <= C + 1e-12)
    alphas = np.column_stack([head[feasible], np.clip(last[feasible], 0.0, C)])
    values = 0.5 * np.einsum('mi,ij,mj->m', alphas, Q, alphas) - alphas.sum(axis=1)
    return float(values.min())


def kkt_violation(K, y, alpha, C):
    """Largest maximal-violating-pair gap; 0 at an exact optimum."""
    y = np.asarray(y, dtype=np.float64)
    grad = (np.outer(y, y) * K) @ alpha - 1.0
    minus_yg = -y * grad
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    if not up.any() or not low.any():
        return 0.0
    return max(0.0, float(minus_yg[up].max() - minus_yg[low].min()))
