"""One-vs-rest composition of binary heads into a multi-label classifier."""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.errors import DimMismatch
from app.logging_config import get_logger
from app.services.heads.base import BinaryHead, ConstantHead, check_features
from app.services.heads.logistic import train_logistic
from app.services.heads.naive_bayes import NaiveBayesModel, train_naive_bayes
from app.services.heads.svm import train_svm
from app.services.heads.trees import train_boosted, train_forest

logger = get_logger(__name__)

FAMILIES = ('logistic', 'svm', 'forest', 'boosted', 'naive_bayes')

# Short names used in leaderboard rows
ABBREVIATIONS = {
    'logistic': 'LR',
    'svm': 'SVM',
    'forest': 'RF',
    'boosted': 'XG',
    'naive_bayes': 'NB',
}

DEFAULT_PARAMS = {
    'logistic': {'C': 1.0, 'max_iters': 1000, 'tol': 1e-4},
    'svm': {'C': 1.0, 'kernel': 'rbf', 'gamma': None, 'degree': 3, 'coef0': 0.0, 'tol': 1e-3,
            'max_iter': 100000},
    'forest': {'max_depth': 9, 'n_trees': 100},
    'boosted': {'max_depth': 3, 'rounds': 100, 'shrinkage': 0.1},
    'naive_bayes': {'alpha': 1.0},
}


@dataclass(frozen=True)
class HeadSpec:
    """Head family plus hyperparameters; ``swept`` names the parameters shown in reports."""
    family: str
    params: Dict = field(default_factory=dict)
    swept: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f'Unknown head family "{self.family}", expected one of {", ".join(FAMILIES)}')
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.family])
        if unknown:
            raise ValueError(f'Unknown {self.family} parameters: {", ".join(sorted(unknown))}')

    def resolved(self):
        """Defaults overlaid with the explicit parameters."""
        params = dict(DEFAULT_PARAMS[self.family])
        params.update({k: v for k, v in self.params.items() if v is not None})
        return params

    @property
    def display_name(self):
        """Report name in the ``HEAD, param: value`` style, e.g. ``RF, max_depth: 9``."""
        if not self.swept:
            return 'default' if self.family == 'logistic' else ABBREVIATIONS[self.family]
        params = self.resolved()
        parts = [f'{name}: {params[name]}' for name in self.swept]
        return ', '.join([ABBREVIATIONS[self.family]] + parts)

    def to_dict(self):
        return {'family': self.family, 'params': dict(self.params), 'swept': list(self.swept)}

    @classmethod
    def from_dict(cls, data):
        return cls(data['family'], dict(data.get('params') or {}), tuple(data.get('swept') or ()))


def train_binary_head(spec, X, y, seed=0):
    """Train one binary head of the requested family."""
    params = spec.resolved()
    if spec.family == 'logistic':
        return train_logistic(X, y, C=params['C'], max_iters=params['max_iters'], tol=params['tol'])
    if spec.family == 'svm':
        return train_svm(X, y, C=params['C'], kernel=params['kernel'], gamma=params['gamma'],
                         degree=params['degree'], coef0=params['coef0'], tol=params['tol'],
                         max_iter=params['max_iter'])
    if spec.family == 'forest':
        return train_forest(X, y, max_depth=params['max_depth'], n_trees=params['n_trees'], seed=seed)
    if spec.family == 'boosted':
        return train_boosted(X, y, max_depth=params['max_depth'], rounds=params['rounds'],
                             shrinkage=params['shrinkage'])
    raise ValueError(f'{spec.family} is not a binary head family')


@dataclass
class OneVsRestClassifier:
    """Per-label binary heads (or one single-label Naive Bayes model) plus the decision policy."""
    spec: HeadSpec
    n_labels: int
    dim: int
    threshold: float = 0.5
    heads: List[Optional[BinaryHead]] = field(default_factory=list)
    constant: List[bool] = field(default_factory=list)
    multiclass: Optional[NaiveBayesModel] = None

    @property
    def single_label(self):
        return self.multiclass is not None

    @property
    def flagged_labels(self):
        """Labels that got a constant head because training had one class."""
        return [label for label, flag in enumerate(self.constant) if flag]

    def _check_dim(self, X):
        X = check_features(X)
        if X.shape[1] != self.dim:
            raise DimMismatch(f'Features have dimension {X.shape[1]}, classifier expects {self.dim}',
                              expected=self.dim, actual=int(X.shape[1]))
        return X

    def predict_proba(self, X):
        """(n, n_labels) matrix of per-label probabilities."""
        X = self._check_dim(X)
        if self.multiclass is not None:
            proba = np.zeros((X.shape[0], self.n_labels))
            proba[:, self.multiclass.classes] = self.multiclass.predict_proba(X)
            return proba
        return np.column_stack([head.predict_proba(X) for head in self.heads]) if self.heads \
            else np.zeros((X.shape[0], 0))

    def predict(self, X):
        return ovr_predict(self, X)


def _label_matrix(label_sets, n_labels):
    Y = np.zeros((len(label_sets), n_labels), dtype=bool)
    for row, labels in enumerate(label_sets):
        for label in labels:
            Y[row, label] = True
    return Y


def ovr_train(X, label_sets: Sequence, n_labels, spec, threshold=0.5, seed=0):
    """
    Train one binary head per label.

    Labels without positives (or without negatives) get a constant head and
    are flagged. Naive Bayes trains a single model instead, with one document
    per (sentence, label) pair.

    Args:
        X: (n, d) feature matrix (counts for Naive Bayes)
        label_sets: one set of label indices per row
        n_labels: taxonomy size, >= 2
        spec: HeadSpec
        threshold: decision threshold tau
        seed: base seed; label k trains with seed + k

    Returns:
        OneVsRestClassifier
    """
    if n_labels < 2:
        raise ValueError(f'One-vs-rest needs at least 2 labels, got {n_labels}')
    X = check_features(X)
    classifier = OneVsRestClassifier(spec=spec, n_labels=n_labels, dim=X.shape[1], threshold=threshold)

    if spec.family == 'naive_bayes':
        rows = [row for row, labels in enumerate(label_sets) for _ in sorted(labels)]
        classes = [label for labels in label_sets for label in sorted(labels)]
        classifier.multiclass = train_naive_bayes(X[rows], classes, alpha=spec.resolved()['alpha'])
        classifier.constant = [label not in set(classes) for label in range(n_labels)]
        logger.info(f'Trained Naive Bayes over {len(set(classes))} of {n_labels} labels')
        return classifier

    Y = _label_matrix(label_sets, n_labels)
    for label in range(n_labels):
        positives = int(Y[:, label].sum())
        if positives == 0 or positives == Y.shape[0]:
            probability = 1.0 if positives else 0.0
            logger.warning(f'Label {label} has {positives} of {Y.shape[0]} positives; '
                           f'using a constant {probability} head')
            classifier.heads.append(ConstantHead(probability))
            classifier.constant.append(True)
            continue
        classifier.heads.append(train_binary_head(spec, X, Y[:, label], seed=seed + label))
        classifier.constant.append(False)

    logger.info(f'Trained {n_labels} {spec.display_name} heads '
                f'({len(classifier.flagged_labels)} constant) on {X.shape[0]} rows')
    return classifier


def ovr_predict(classifier, X):
    """
    Label sets for each row, never empty.

    Labels with probability >= threshold are emitted; when none qualifies the
    single most probable label is emitted. Naive Bayes always emits exactly
    its most probable class. Ties go to the lowest label index.
    """
    if classifier.multiclass is not None:
        X = classifier._check_dim(X)
        return [frozenset([int(c)]) for c in classifier.multiclass.predict(X)]

    proba = classifier.predict_proba(X)
    predictions = []
    for row in proba:
        chosen = frozenset(int(label) for label in np.flatnonzero(row >= classifier.threshold))
        if not chosen:
            chosen = frozenset([int(np.argmax(row))])
        predictions.append(chosen)
    return predictions
