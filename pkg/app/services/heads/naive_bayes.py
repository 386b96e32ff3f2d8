"""Multinomial Naive Bayes over bag-of-words counts (single label per sentence)."""
import numpy as np

from app.errors import EmptyVocabulary, LengthMismatch
from app.logging_config import get_logger
from app.models import SparseCountVector
from app.services.featurize import count_matrix

logger = get_logger(__name__)


def _as_counts(X):
    if len(X) and isinstance(X[0], SparseCountVector):
        return count_matrix(X)
    return np.asarray(X, dtype=np.float64)


class NaiveBayesModel:
    """Per-class log priors and per-class token log likelihoods."""
    type = 'naive_bayes'

    def __init__(self, classes, log_prior, log_likelihood, alpha):
        self.classes = np.asarray(classes, dtype=np.int64)
        self.log_prior = np.asarray(log_prior, dtype=np.float64)
        self.log_likelihood = np.atleast_2d(np.asarray(log_likelihood, dtype=np.float64))
        self.alpha = float(alpha)

    @property
    def vocabulary_size(self):
        return int(self.log_likelihood.shape[1])

    def joint_log_likelihood(self, X):
        """log P(c) + sum_t count_t log P(t|c), shape (n, classes)."""
        return _as_counts(X) @ self.log_likelihood.T + self.log_prior

    def predict_log_proba(self, X):
        joint = self.joint_log_likelihood(X)
        return joint - np.logaddexp.reduce(joint, axis=1, keepdims=True)

    def predict_proba(self, X):
        return np.exp(self.predict_log_proba(X))

    def predict(self, X):
        """Most probable class per row; ties go to the lowest class index."""
        return self.classes[np.argmax(self.joint_log_likelihood(X), axis=1)]

    def to_dict(self):
        return {
            'type': self.type,
            'classes': self.classes.tolist(),
            'log_prior': self.log_prior.tolist(),
            'log_likelihood': self.log_likelihood.tolist(),
            'alpha': self.alpha,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data['classes'], data['log_prior'], data['log_likelihood'], data['alpha'])


def train_naive_bayes(X, y, alpha=1.0):
    """
    Fit multinomial Naive Bayes with Laplace smoothing.

    P(t|c) = (count(t, c) + alpha) / (total(c) + alpha |V|); P(c) is the
    fraction of documents in class c.

    Args:
        X: SparseCountVector list or (n, |V|) count matrix
        y: one class id per document
        alpha: smoothing, > 0

    Returns:
        NaiveBayesModel over the classes present in y, ascending
    """
    if alpha <= 0:
        raise ValueError(f'alpha must be > 0, got {alpha}')
    counts = _as_counts(X)
    y = np.asarray(y, dtype=np.int64)
    if counts.ndim != 2 or counts.shape[0] != y.shape[0]:
        raise LengthMismatch(f'{counts.shape[0]} documents but {y.shape[0]} class ids')
    if counts.shape[1] == 0:
        raise EmptyVocabulary('Naive Bayes needs a non-empty vocabulary')
    if counts.shape[0] == 0:
        raise ValueError('Naive Bayes needs at least one document')

    classes = np.unique(y)
    vocabulary_size = counts.shape[1]
    log_prior = np.empty(classes.shape[0])
    log_likelihood = np.empty((classes.shape[0], vocabulary_size))
    for k, label in enumerate(classes):
        members = counts[y == label]
        log_prior[k] = np.log(members.shape[0] / counts.shape[0])
        token_counts = members.sum(axis=0)
        log_likelihood[k] = np.log(token_counts + alpha) - np.log(token_counts.sum() + alpha * vocabulary_size)

    logger.debug(f'Naive Bayes: {classes.shape[0]} classes, |V|={vocabulary_size}, alpha={alpha}')
    return NaiveBayesModel(classes, log_prior, log_likelihood, alpha)
