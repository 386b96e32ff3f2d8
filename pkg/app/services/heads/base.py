"""Shared pieces of the binary classification heads."""
import numpy as np

from app.errors import LengthMismatch, NonFinite, SingleClass


def sigmoid(z):
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    positive = z >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-z[positive]))
    ez = np.exp(z[~positive])
    out[~positive] = ez / (1.0 + ez)
    return out


def log_loss(y, logits):
    """Summed binary cross-entropy of 0/1 targets against logits."""
    y = np.asarray(y, dtype=np.float64)
    return float(np.sum(np.logaddexp(0.0, logits) - y * logits))


def check_features(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f'Expected a 2-D feature matrix, got shape {X.shape}')
    if not np.all(np.isfinite(X)):
        raise NonFinite('Feature matrix contains non-finite values')
    return X


def check_binary(X, y, require_both=True):
    """Validate a binary training set; returns (X as float matrix, y as 0/1 ints)."""
    X = check_features(X)
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise LengthMismatch(f'{X.shape[0]} feature rows but {y.shape[0] if y.ndim else 0} targets')
    y = (y > 0).astype(np.int64)
    if require_both:
        if X.shape[0] < 2:
            raise SingleClass('Need at least 2 training examples')
        positives = int(y.sum())
        if positives == 0 or positives == y.shape[0]:
            raise SingleClass(f'Training targets contain a single class ({positives} of {y.shape[0]} positive)')
    return X, y


class BinaryHead:
    """A trained model scoring the positive class of one label."""
    type = None

    def predict_proba(self, X):
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


class ConstantHead(BinaryHead):
    """Head for labels that had a single class in training."""
    type = 'constant'

    def __init__(self, probability):
        self.probability = float(probability)

    def predict_proba(self, X):
        return np.full(np.asarray(X).shape[0], self.probability)

    def to_dict(self):
        return {'type': self.type, 'probability': self.probability}

    @classmethod
    def from_dict(cls, data):
        return cls(data['probability'])
