"""Kernel SVM head trained with sequential minimal optimization."""
import numpy as np

from app.errors import NoConvergence
from app.logging_config import get_logger
from app.services.heads.base import BinaryHead, check_binary

logger = get_logger(__name__)

KERNELS = ('linear', 'poly', 'rbf', 'sigmoid')

# Curvature floor for non-PSD kernels (sigmoid)
TAU = 1e-12


def kernel_matrix(A, B, kernel='rbf', gamma=1.0, degree=3, coef0=0.0):
    """
    Kernel values between the rows of A and B.

    linear: a.b; poly: (gamma a.b + coef0)^degree; rbf: exp(-gamma |a-b|^2);
    sigmoid: tanh(gamma a.b + coef0).
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if kernel == 'linear':
        return A @ B.T
    if kernel == 'poly':
        return (gamma * (A @ B.T) + coef0) ** degree
    if kernel == 'rbf':
        sq = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * (A @ B.T)
        return np.exp(-gamma * np.maximum(sq, 0.0))
    if kernel == 'sigmoid':
        return np.tanh(gamma * (A @ B.T) + coef0)
    raise ValueError(f'Unknown kernel "{kernel}", expected one of {", ".join(KERNELS)}')


def fit_platt(decision_values, y, max_iter=100):
    """
    Fit P(y=1|f) = 1 / (1 + exp(A f + B)) by Newton's method with backtracking.

    Targets are smoothed to (N+ + 1)/(N+ + 2) and 1/(N- + 2).
    """
    f = np.asarray(decision_values, dtype=np.float64)
    y = np.asarray(y)
    n_pos = int(np.sum(y > 0))
    n_neg = y.shape[0] - n_pos
    t = np.where(y > 0, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    def objective(a, b):
        z = f * a + b
        return float(np.sum(np.where(z >= 0, t * z + np.log1p(np.exp(-np.abs(z))),
                                     (t - 1.0) * z + np.log1p(np.exp(-np.abs(z))))))

    a, b = 0.0, float(np.log((n_neg + 1.0) / (n_pos + 1.0)))
    fval = objective(a, b)
    for _ in range(max_iter):
        z = f * a + b
        # p = 1 / (1 + exp(z)), q = 1 - p
        p = np.where(z >= 0, np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))),
                     1.0 / (1.0 + np.exp(-np.abs(z))))
        q = 1.0 - p
        d2 = p * q
        h11 = 1e-12 + float(np.sum(f * f * d2))
        h22 = 1e-12 + float(np.sum(d2))
        h21 = float(np.sum(f * d2))
        d1 = t - p
        g1 = float(np.sum(f * d1))
        g2 = float(np.sum(d1))
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= 1e-10:
            new_a, new_b = a + step * da, b + step * db
            new_f = objective(new_a, new_b)
            if new_f < fval + 1e-4 * step * gd:
                a, b, fval = new_a, new_b, new_f
                break
            step /= 2.0
        if step < 1e-10:
            break
    return a, b


def platt_probability(decision_values, a, b):
    z = np.asarray(decision_values, dtype=np.float64) * a + b
    return np.where(z >= 0, np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))),
                    1.0 / (1.0 + np.exp(-np.abs(z))))


class SvmHead(BinaryHead):
    type = 'svm'

    def __init__(self, kernel, C, gamma, degree, coef0, support_vectors, dual_coef,
                 sv_labels, rho, platt_a=-1.0, platt_b=0.0, iterations=0):
        self.kernel = kernel
        self.C = float(C)
        self.gamma = float(gamma)
        self.degree = int(degree)
        self.coef0 = float(coef0)
        self.support_vectors = np.atleast_2d(np.asarray(support_vectors, dtype=np.float64))
        self.dual_coef = np.asarray(dual_coef, dtype=np.float64)
        self.sv_labels = np.asarray(sv_labels, dtype=np.float64)
        self.rho = float(rho)
        self.platt_a = float(platt_a)
        self.platt_b = float(platt_b)
        self.iterations = iterations

    @property
    def n_support(self):
        return int(self.dual_coef.shape[0])

    @property
    def bias(self):
        return -self.rho

    def kernel_with(self, X):
        return kernel_matrix(X, self.support_vectors, self.kernel, self.gamma, self.degree, self.coef0)

    def decision_function(self, X):
        return self.kernel_with(X) @ (self.dual_coef * self.sv_labels) - self.rho

    def predict_proba(self, X):
        return platt_probability(self.decision_function(X), self.platt_a, self.platt_b)

    def to_dict(self):
        return {
            'type': self.type,
            'kernel': self.kernel,
            'C': self.C,
            'gamma': self.gamma,
            'degree': self.degree,
            'coef0': self.coef0,
            'support_vectors': self.support_vectors.tolist(),
            'dual_coef': self.dual_coef.tolist(),
            'sv_labels': self.sv_labels.tolist(),
            'rho': self.rho,
            'platt_a': self.platt_a,
            'platt_b': self.platt_b,
            'iterations': self.iterations,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data['kernel'], data['C'], data['gamma'], data['degree'], data['coef0'],
                   data['support_vectors'], data['dual_coef'], data['sv_labels'], data['rho'],
                   data['platt_a'], data['platt_b'], data['iterations'])


def solve_dual(K, y, C, tol, max_iter):
    """
    Soft-margin dual by SMO with maximal-violating-pair selection.

    Returns (alpha, rho, iterations); the decision function is
    sum_i alpha_i y_i K(x_i, x) - rho.
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    # gradient of (1/2) a'Qa - e'a with Q_ij = y_i y_j K_ij
    grad = -np.ones(n)
    diag = np.diag(K).copy()

    for iteration in range(max_iter):
        minus_yg = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(minus_yg[up])])
        j = int(np.flatnonzero(low)[np.argmin(minus_yg[low])])
        if minus_yg[i] - minus_yg[j] < tol:
            break

        old_i, old_j = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = diag[i] + diag[j] - 2.0 * K[i, j]
            if quad <= 0:
                quad = TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            elif alpha[j] > C:
                alpha[j] = C
                alpha[i] = C + diff
        else:
            quad = diag[i] + diag[j] - 2.0 * K[i, j]
            if quad <= 0:
                quad = TAU
            delta = (grad[i] - grad[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            elif alpha[j] < 0:
                alpha[j] = 0.0
                alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = total

        delta_i = alpha[i] - old_i
        delta_j = alpha[j] - old_j
        grad += y * (y[i] * K[:, i] * delta_i + y[j] * K[:, j] * delta_j)
    else:
        raise NoConvergence(f'SMO did not reach tolerance {tol} within {max_iter} iterations')

    # bias from free vectors, else the midpoint of the feasible interval
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(np.mean(yg[free]))
    else:
        at_upper = alpha >= C
        ub_mask = (at_upper & (y < 0)) | (~at_upper & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (~at_upper & (y < 0))
        ub = float(np.min(yg[ub_mask])) if ub_mask.any() else np.inf
        lb = float(np.max(yg[lb_mask])) if lb_mask.any() else -np.inf
        rho = (ub + lb) / 2.0
    return alpha, rho, iteration


def train_svm(X, y, C=1.0, kernel='rbf', gamma=None, degree=3, coef0=0.0, tol=1e-3, max_iter=100000):
    """
    Train a binary kernel SVM and calibrate it with Platt scaling.

    Args:
        X: (n, d) feature matrix
        y: binary targets
        C: box constraint, > 0
        kernel: linear, poly, rbf or sigmoid
        gamma: kernel scale; defaults to 1/d
        degree, coef0: poly/sigmoid parameters
        tol: KKT violation tolerance
        max_iter: SMO iteration cap

    Returns:
        SvmHead: support vectors are training rows with alpha > 0
    """
    if C <= 0:
        raise ValueError(f'C must be > 0, got {C}')
    if kernel not in KERNELS:
        raise ValueError(f'Unknown kernel "{kernel}", expected one of {", ".join(KERNELS)}')
    X, y01 = check_binary(X, y)
    y_pm = np.where(y01 > 0, 1.0, -1.0)
    if gamma is None:
        gamma = 1.0 / X.shape[1] if X.shape[1] else 1.0

    K = kernel_matrix(X, X, kernel, gamma, degree, coef0)
    alpha, rho, iterations = solve_dual(K, y_pm, float(C), tol, max_iter)

    support = alpha > 0
    decision = K[:, support] @ (alpha[support] * y_pm[support]) - rho
    platt_a, platt_b = fit_platt(decision, y01)

    logger.debug(f'SVM head: kernel={kernel}, C={C}, support vectors={int(support.sum())}, '
                 f'iterations={iterations}')
    return SvmHead(kernel, C, gamma, degree, coef0, X[support], alpha[support], y_pm[support], rho,
                   platt_a, platt_b, iterations)
