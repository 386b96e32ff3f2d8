"""Decision trees, random forest and gradient-boosted tree heads."""
import math

import numpy as np

from app.logging_config import get_logger
from app.services.heads.base import BinaryHead, check_binary, check_features, log_loss, sigmoid

logger = get_logger(__name__)

LEAF = -1


class DecisionTree:
    """
    Binary tree stored as parallel node arrays.

    Internal nodes send ``x[feature] <= threshold`` to ``left``; leaves have
    ``feature == -1`` and carry ``value``.
    """

    def __init__(self, feature, threshold, left, right, value, node_depth, max_depth):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        self.node_depth = np.asarray(node_depth, dtype=np.int64)
        self.max_depth = int(max_depth)

    @property
    def n_nodes(self):
        return int(self.feature.shape[0])

    @property
    def depth(self):
        """Depth of the deepest leaf (a single leaf has depth 0)."""
        return int(self.node_depth.max()) if self.n_nodes else 0

    def leaves(self):
        return np.flatnonzero(self.feature == LEAF)

    def apply(self, X):
        """Leaf index reached by each row."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feature = self.feature[node]
            rows = np.flatnonzero(feature != LEAF)
            if rows.size == 0:
                return node
            at = node[rows]
            go_left = X[rows, feature[rows]] <= self.threshold[at]
            node[rows] = np.where(go_left, self.left[at], self.right[at])

    def predict(self, X):
        return self.value[self.apply(X)]

    def to_dict(self):
        return {
            'feature': self.feature.tolist(),
            'threshold': self.threshold.tolist(),
            'left': self.left.tolist(),
            'right': self.right.tolist(),
            'value': self.value.tolist(),
            'node_depth': self.node_depth.tolist(),
            'max_depth': self.max_depth,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data['feature'], data['threshold'], data['left'], data['right'],
                   data['value'], data['node_depth'], data['max_depth'])


def _gini_split(x_sorted, y_sorted):
    """Best (weighted impurity, position) for a sorted binary column, or None."""
    n = y_sorted.shape[0]
    left_n = np.arange(1, n)
    left_pos = np.cumsum(y_sorted)[:-1]
    right_n = n - left_n
    right_pos = y_sorted.sum() - left_pos
    p_left = left_pos / left_n
    p_right = right_pos / right_n
    impurity = left_n * 2.0 * p_left * (1.0 - p_left) + right_n * 2.0 * p_right * (1.0 - p_right)
    valid = x_sorted[:-1] < x_sorted[1:]
    if not valid.any():
        return None
    impurity = np.where(valid, impurity, np.inf)
    k = int(np.argmin(impurity))
    return float(impurity[k]), k


def _squared_error_split(x_sorted, r_sorted):
    """Best (sum of squared errors, position) for a sorted residual column, or None."""
    n = r_sorted.shape[0]
    left_n = np.arange(1, n)
    left_sum = np.cumsum(r_sorted)[:-1]
    right_sum = r_sorted.sum() - left_sum
    # SSE = sum r^2 - (sum_L)^2 / n_L - (sum_R)^2 / n_R ; the first term is constant
    sse = -(left_sum * left_sum / left_n + right_sum * right_sum / (n - left_n))
    valid = x_sorted[:-1] < x_sorted[1:]
    if not valid.any():
        return None
    sse = np.where(valid, sse, np.inf)
    k = int(np.argmin(sse))
    return float(sse[k] + np.sum(r_sorted * r_sorted)), k


class _TreeBuilder:
    """Greedy depth-first tree growth shared by forests and boosting."""

    def __init__(self, criterion, max_depth, leaf_value, max_features=None, rng=None, min_samples_split=2):
        if max_depth < 1:
            raise ValueError(f'max_depth must be >= 1, got {max_depth}')
        self.criterion = criterion
        self.max_depth = max_depth
        self.leaf_value = leaf_value
        self.max_features = max_features
        self.rng = rng
        self.min_samples_split = min_samples_split

    def _node_cost(self, target):
        if self.criterion == 'gini':
            p = target.mean()
            return target.shape[0] * 2.0 * p * (1.0 - p)
        centered = target - target.mean()
        return float(centered @ centered)

    def _candidate_features(self, n_features):
        if self.max_features is None or self.max_features >= n_features:
            return range(n_features)
        chosen = self.rng.choice(n_features, size=self.max_features, replace=False)
        return sorted(int(f) for f in chosen)

    def _best_split(self, X, target, rows):
        split = _gini_split if self.criterion == 'gini' else _squared_error_split
        best = None
        for feature in self._candidate_features(X.shape[1]):
            column = X[rows, feature]
            order = np.argsort(column, kind='stable')
            x_sorted = column[order]
            found = split(x_sorted, target[rows][order])
            if found is None:
                continue
            cost, k = found
            # strict improvement keeps the lowest feature index on ties
            if best is None or cost < best[0] - 1e-12:
                threshold = (x_sorted[k] + x_sorted[k + 1]) / 2.0
                best = (cost, feature, threshold)
        return best

    def build(self, X, target):
        feature, threshold, left, right, value, depth = [], [], [], [], [], []

        def new_node(node_depth):
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(LEAF)
            right.append(LEAF)
            value.append(0.0)
            depth.append(node_depth)
            return len(feature) - 1

        root = new_node(0)
        stack = [(root, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            value[node] = float(self.leaf_value(rows))
            if depth[node] >= self.max_depth or rows.shape[0] < self.min_samples_split:
                continue
            parent_cost = self._node_cost(target[rows])
            if parent_cost <= 1e-12:
                continue
            best = self._best_split(X, target, rows)
            if best is None or best[0] >= parent_cost - 1e-12:
                continue
            _, split_feature, split_threshold = best
            goes_left = X[rows, split_feature] <= split_threshold
            left_node = new_node(depth[node] + 1)
            right_node = new_node(depth[node] + 1)
            feature[node] = split_feature
            threshold[node] = split_threshold
            left[node] = left_node
            right[node] = right_node
            # left subtree is grown first
            stack.append((right_node, rows[~goes_left]))
            stack.append((left_node, rows[goes_left]))

        return DecisionTree(feature, threshold, left, right, value, depth, self.max_depth)


def build_classification_tree(X, y, max_depth, max_features=None, rng=None):
    """Gini tree on 0/1 targets; leaves hold the positive fraction."""
    X = check_features(X)
    y = np.asarray(y, dtype=np.float64)
    builder = _TreeBuilder('gini', max_depth, leaf_value=lambda rows: y[rows].mean(),
                           max_features=max_features, rng=rng)
    return builder.build(X, y)


class ForestHead(BinaryHead):
    type = 'forest'

    def __init__(self, trees, max_depth, n_trees, seed):
        self.trees = list(trees)
        self.max_depth = int(max_depth)
        self.n_trees = int(n_trees)
        self.seed = seed

    def predict_proba(self, X):
        X = np.asarray(X, dtype=np.float64)
        return np.mean([tree.predict(X) for tree in self.trees], axis=0)

    def to_dict(self):
        return {
            'type': self.type,
            'max_depth': self.max_depth,
            'n_trees': self.n_trees,
            'seed': self.seed,
            'trees': [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data):
        return cls([DecisionTree.from_dict(t) for t in data['trees']],
                   data['max_depth'], data['n_trees'], data['seed'])


def train_forest(X, y, max_depth=9, n_trees=100, seed=0, bootstrap=True):
    """
    Random forest of Gini trees.

    Each tree sees a bootstrap sample and considers sqrt(d) random features
    per split; the probability is the mean of the leaves' positive fractions.

    Args:
        X: (n, d) feature matrix
        y: binary targets
        max_depth: depth cap, >= 1
        n_trees: number of trees, >= 1
        seed: seed for bootstrap samples and feature subsets
        bootstrap: draw a bootstrap sample per tree

    Returns:
        ForestHead
    """
    if n_trees < 1:
        raise ValueError(f'n_trees must be >= 1, got {n_trees}')
    X, y = check_binary(X, y, require_both=False)
    if X.shape[0] == 0:
        raise ValueError('Cannot train a forest on an empty training set')
    max_features = max(1, int(math.sqrt(X.shape[1])))

    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        rows = rng.integers(0, X.shape[0], X.shape[0]) if bootstrap else np.arange(X.shape[0])
        trees.append(build_classification_tree(X[rows], y[rows], max_depth, max_features, rng))

    logger.debug(f'Forest head: {n_trees} trees, max_depth={max_depth}, max_features={max_features}')
    return ForestHead(trees, max_depth, n_trees, seed)


class BoostedHead(BinaryHead):
    type = 'boosted'

    def __init__(self, initial, shrinkage, trees, max_depth, rounds, losses=None):
        self.initial = float(initial)
        self.shrinkage = float(shrinkage)
        self.trees = list(trees)
        self.max_depth = int(max_depth)
        self.rounds = int(rounds)
        self.losses = list(losses or [])

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        score = np.full(X.shape[0], self.initial)
        for tree in self.trees:
            score += self.shrinkage * tree.predict(X)
        return score

    def predict_proba(self, X):
        return sigmoid(self.decision_function(X))

    def to_dict(self):
        return {
            'type': self.type,
            'initial': self.initial,
            'shrinkage': self.shrinkage,
            'max_depth': self.max_depth,
            'rounds': self.rounds,
            'trees': [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data['initial'], data['shrinkage'], [DecisionTree.from_dict(t) for t in data['trees']],
                   data['max_depth'], data['rounds'])


def train_boosted(X, y, max_depth=3, rounds=100, shrinkage=0.1):
    """
    Gradient boosting of regression trees under logistic loss.

    Round t grows a squared-error tree on the residuals y - p and sets each
    leaf to the Newton step sum(r) / sum(p (1 - p)). A leaf step that would
    raise that leaf's loss is halved until it does not, so the training loss
    never increases from one round to the next.

    Args:
        X: (n, d) feature matrix
        y: binary targets
        max_depth: depth cap of each tree
        rounds: boosting rounds (0 gives the prior-only model)
        shrinkage: learning rate in (0, 1]

    Returns:
        BoostedHead: ``losses`` holds the training log-loss after each round
    """
    if rounds < 0:
        raise ValueError(f'rounds must be >= 0, got {rounds}')
    if not 0.0 < shrinkage <= 1.0:
        raise ValueError(f'shrinkage must be in (0, 1], got {shrinkage}')
    X, y = check_binary(X, y, require_both=False)
    if X.shape[0] == 0:
        raise ValueError('Cannot boost on an empty training set')
    yf = y.astype(np.float64)

    base_rate = min(max(yf.mean(), 1e-6), 1.0 - 1e-6)
    initial = math.log(base_rate / (1.0 - base_rate))
    logits = np.full(X.shape[0], initial)
    losses = [log_loss(yf, logits)]
    trees = []

    for _ in range(rounds):
        p = sigmoid(logits)
        residual = yf - p
        hessian = p * (1.0 - p)

        def newton_step(rows):
            h = hessian[rows].sum()
            return residual[rows].sum() / h if h > 1e-12 else 0.0

        builder = _TreeBuilder('squared_error', max_depth, leaf_value=newton_step)
        tree = builder.build(X, residual)

        leaf_of = tree.apply(X)
        for leaf in tree.leaves():
            rows = leaf_of == leaf
            step = tree.value[leaf]
            before = log_loss(yf[rows], logits[rows])
            for _ in range(60):
                if step == 0.0 or log_loss(yf[rows], logits[rows] + shrinkage * step) <= before:
                    break
                step /= 2.0
            else:
                step = 0.0
            tree.value[leaf] = step

        logits = logits + shrinkage * tree.value[leaf_of]
        losses.append(log_loss(yf, logits))
        trees.append(tree)

    logger.debug(f'Boosted head: rounds={rounds}, max_depth={max_depth}, final loss={losses[-1]:.6g}')
    return BoostedHead(initial, shrinkage, trees, max_depth, rounds, losses)
