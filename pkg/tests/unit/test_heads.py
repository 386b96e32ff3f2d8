"""
Unit tests for the classification heads.

Tests cover:
- Logistic regression: gradient, regularisation, monotone objective
- Kernel SVM: kernels, dual constraints, determinism
- Random forest and gradient boosting: depth caps, base rates, loss descent
- Multinomial Naive Bayes: smoothing and log-space posteriors
- One-vs-rest composition and its decision policy
"""

import numpy as np
import pytest

from app.errors import DimMismatch, LengthMismatch, NonFinite, SingleClass
from app.models import Language
from app.services.featurize import BowFeaturizer
from app.services.heads.base import ConstantHead, sigmoid
from app.services.heads.logistic import LogisticHead, logistic_gradient, logistic_objective, train_logistic
from app.services.heads.naive_bayes import train_naive_bayes
from app.services.heads.ovr import HeadSpec, OneVsRestClassifier, ovr_predict, ovr_train
from app.services.heads.svm import kernel_matrix, solve_dual, train_svm
from app.services.heads.trees import build_classification_tree, train_boosted, train_forest
from tests.fixtures.dual_oracle import dual_objective, grid_dual_minimum, kkt_violation


def finite_difference_gradient(w, b, X, y_pm, C, eps=1e-6):
    grad = np.zeros_like(w)
    for i in range(w.shape[0]):
        step = np.zeros_like(w)
        step[i] = eps
        grad[i] = (logistic_objective(w + step, b, X, y_pm, C)
                   - logistic_objective(w - step, b, X, y_pm, C)) / (2 * eps)
    db = (logistic_objective(w, b + eps, X, y_pm, C) - logistic_objective(w, b - eps, X, y_pm, C)) / (2 * eps)
    return grad, db


class TestSigmoid:
    """Test the shared logistic function."""

    def test_extremes_are_finite(self):
        values = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
        np.testing.assert_allclose(values, [0.0, 0.5, 1.0])
        assert np.all(np.isfinite(values))


class TestLogistic:
    """Test the L2 logistic regression head."""

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(12, 4))
        y_pm = np.where(rng.random(12) < 0.5, -1.0, 1.0)
        w, b, C = rng.normal(size=4), float(rng.normal()), float(rng.uniform(0.1, 5.0))
        dw, db = logistic_gradient(w, b, X, y_pm, C)
        fw, fb = finite_difference_gradient(w, b, X, y_pm, C)
        analytic = np.append(dw, db)
        numeric = np.append(fw, fb)
        relative = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic), np.linalg.norm(numeric))
        assert relative <= 1e-4

    def test_zero_head_predicts_one_half(self):
        head = LogisticHead.zeros(5)
        np.testing.assert_array_equal(head.predict_proba(np.ones((3, 5))), [0.5, 0.5, 0.5])

    def test_tiny_C_shrinks_weights(self, separable_2d):
        X, y = separable_2d
        head = train_logistic(X, y, C=1e-8)
        assert np.linalg.norm(head.weights) < 1e-4

    def test_objective_history_never_increases(self, separable_2d):
        X, y = separable_2d
        head = train_logistic(X, y, C=10.0)
        assert len(head.history) >= 2
        assert all(later <= earlier + 1e-9 for earlier, later in zip(head.history, head.history[1:]))

    def test_separable_data_is_fit(self, separable_2d):
        X, y = separable_2d
        head = train_logistic(X, y, C=10.0)
        np.testing.assert_array_equal(head.predict_proba(X) >= 0.5, y.astype(bool))

    def test_single_class_rejected(self):
        with pytest.raises(SingleClass):
            train_logistic(np.ones((4, 2)), [1, 1, 1, 1])

    def test_non_finite_features_rejected(self):
        with pytest.raises(NonFinite):
            train_logistic(np.array([[0.0, np.nan], [1.0, 1.0]]), [0, 1])

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            train_logistic(np.ones((3, 2)), [0, 1])


class TestSvm:
    """Test the kernel SVM head."""

    def test_two_point_linear(self):
        X = np.array([[0.0, 0.0], [2.0, 2.0]])
        head = train_svm(X, [0, 1], C=1.0, kernel='linear')
        decision = head.decision_function(X)
        assert decision[0] < 0 < decision[1]

    def test_opposite_points_reach_hand_solved_optimum(self):
        # w = (1, 0), both points on the margin
        X = np.array([[-1.0, 0.0], [1.0, 0.0]])
        head = train_svm(X, [0, 1], C=1.0, kernel='linear')
        np.testing.assert_allclose(head.dual_coef, [0.5, 0.5], atol=1e-9)
        assert head.rho == pytest.approx(0.0, abs=1e-9)
        np.testing.assert_allclose(head.decision_function(X), [-1.0, 1.0], atol=1e-9)

    @pytest.mark.parametrize("kernel,params", [
        ('linear', {}),
        ('poly', {'gamma': 1.0, 'degree': 3, 'coef0': 0.0}),
        ('rbf', {'gamma': 0.5}),
        ('sigmoid', {'gamma': 0.5, 'coef0': 0.0}),
    ])
    @pytest.mark.parametrize("C", [0.3, 1.0])
    def test_dual_matches_grid_optimum(self, kernel, params, C):
        # centred square: off-diagonal kernel entries are negative for linear, poly and sigmoid
        X = np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        y = np.array([-1.0, 1.0, 1.0, -1.0])
        K = kernel_matrix(X, X, kernel, **params)
        alpha, _, _ = solve_dual(K, y, C, tol=1e-8, max_iter=10000)
        assert dual_objective(K, y, alpha) <= grid_dual_minimum(K, y, C, steps=41) + 1e-6
        assert kkt_violation(K, y, alpha, C) <= 1e-6
        assert np.all((alpha >= 0) & (alpha <= C))
        assert abs(float(alpha @ y)) <= 1e-9

    @pytest.mark.parametrize("kernel", ['linear', 'poly', 'rbf'])
    def test_centred_blobs_converge(self, kernel):
        rng = np.random.default_rng(11)
        X = np.vstack([rng.normal(-0.5, 1.0, size=(25, 2)), rng.normal(0.5, 1.0, size=(25, 2))])
        y = np.array([0] * 25 + [1] * 25)
        head = train_svm(X, y, C=1.0, kernel=kernel)
        assert 0 < head.n_support <= 50

    def test_rbf_self_similarity_is_one(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(6, 3))
        np.testing.assert_allclose(np.diag(kernel_matrix(A, A, 'rbf', gamma=0.7)), np.ones(6))

    @pytest.mark.parametrize("kernel", ['linear', 'poly', 'rbf', 'sigmoid'])
    def test_dual_constraints(self, separable_2d, kernel):
        X, y = separable_2d
        head = train_svm(X, y, C=0.5, kernel=kernel)
        assert np.all(head.dual_coef > 0)
        assert np.all(head.dual_coef <= 0.5 + 1e-9)
        assert abs(float(np.sum(head.dual_coef * head.sv_labels))) <= 1e-6

    def test_separable_data_is_fit(self, separable_2d):
        X, y = separable_2d
        head = train_svm(X, y, C=1.0, kernel='rbf')
        np.testing.assert_array_equal(head.decision_function(X) > 0, y.astype(bool))

    def test_deterministic(self, separable_2d):
        X, y = separable_2d
        first = train_svm(X, y, kernel='poly')
        second = train_svm(X, y, kernel='poly')
        np.testing.assert_array_equal(first.dual_coef, second.dual_coef)
        assert first.rho == second.rho

    def test_probability_in_unit_interval(self, separable_2d):
        X, y = separable_2d
        proba = train_svm(X, y).predict_proba(X)
        assert np.all((proba >= 0) & (proba <= 1))

    @pytest.mark.parametrize("kwargs", [{'C': 0.0}, {'kernel': 'cubic'}])
    def test_invalid_parameters(self, separable_2d, kwargs):
        X, y = separable_2d
        with pytest.raises(ValueError):
            train_svm(X, y, **kwargs)


class TestForest:
    """Test the random forest head."""

    def test_stump_on_separable_feature(self):
        X = np.arange(10, dtype=float).reshape(-1, 1)
        y = (X[:, 0] >= 5).astype(int)
        head = train_forest(X, y, max_depth=1, n_trees=1, bootstrap=False)
        np.testing.assert_array_equal(head.predict_proba(X), y.astype(float))

    def test_pure_labels_predict_one(self):
        head = train_forest(np.random.default_rng(0).normal(size=(8, 3)), np.ones(8), n_trees=5)
        np.testing.assert_array_equal(head.predict_proba(np.zeros((2, 3))), [1.0, 1.0])

    def test_same_seed_same_forest(self, separable_2d):
        X, y = separable_2d
        first = train_forest(X, y, max_depth=4, n_trees=10, seed=3)
        second = train_forest(X, y, max_depth=4, n_trees=10, seed=3)
        assert first.to_dict() == second.to_dict()

    @pytest.mark.parametrize("max_depth", [1, 2, 5])
    def test_depth_cap(self, max_depth):
        rng = np.random.default_rng(max_depth)
        X = rng.normal(size=(60, 4))
        y = rng.random(60) < 0.5
        head = train_forest(X, y, max_depth=max_depth, n_trees=5)
        assert all(tree.depth <= max_depth for tree in head.trees)

    def test_zero_depth_rejected(self, separable_2d):
        X, y = separable_2d
        with pytest.raises(ValueError):
            build_classification_tree(X, y, max_depth=0)

    def test_zero_trees_rejected(self, separable_2d):
        X, y = separable_2d
        with pytest.raises(ValueError):
            train_forest(X, y, n_trees=0)


class TestBoosted:
    """Test the gradient boosting head."""

    def test_zero_rounds_is_base_rate(self):
        X = np.arange(8, dtype=float).reshape(-1, 1)
        y = [0, 0, 0, 0, 0, 0, 1, 1]
        head = train_boosted(X, y, rounds=0)
        np.testing.assert_allclose(head.predict_proba(X), np.full(8, 0.25))
        assert len(head.losses) == 1

    def test_first_round_leaves_are_newton_steps(self):
        X = np.arange(4, dtype=float).reshape(-1, 1)
        head = train_boosted(X, [0, 0, 1, 1], max_depth=4, rounds=1, shrinkage=1.0)
        # p = 0.5 everywhere: each pure leaf steps by sum(r) / sum(p(1-p)) = +-2
        np.testing.assert_allclose(head.trees[0].predict(X), [-2.0, -2.0, 2.0, 2.0])

    @pytest.mark.parametrize("seed", range(20))
    def test_loss_never_increases(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(40, 3))
        y = (X[:, 0] + rng.normal(scale=0.5, size=40)) > 0
        head = train_boosted(X, y, max_depth=2, rounds=15, shrinkage=0.3)
        assert len(head.losses) == 16
        assert all(later <= earlier + 1e-9 for earlier, later in zip(head.losses, head.losses[1:]))

    def test_depth_cap(self, separable_2d):
        X, y = separable_2d
        head = train_boosted(X, y, max_depth=2, rounds=5)
        assert all(tree.depth <= 2 for tree in head.trees)

    @pytest.mark.parametrize("kwargs", [{'rounds': -1}, {'shrinkage': 0.0}, {'shrinkage': 1.5}])
    def test_invalid_parameters(self, separable_2d, kwargs):
        X, y = separable_2d
        with pytest.raises(ValueError):
            train_boosted(X, y, **kwargs)


class TestNaiveBayes:
    """Test multinomial Naive Bayes."""

    # vocabulary (a, b): class 0 saw "a a", class 1 saw "b"
    COUNTS = np.array([[2, 0], [0, 1]])

    def test_laplace_smoothing(self):
        model = train_naive_bayes(self.COUNTS, [0, 1], alpha=1.0)
        likelihood = np.exp(model.log_likelihood)
        assert likelihood[0, 0] == pytest.approx(3 / 4)
        assert likelihood[1, 0] == pytest.approx(1 / 3)
        assert model.predict(np.array([[1, 0]]))[0] == 0

    def test_likelihoods_sum_to_one(self, factory):
        rng = np.random.default_rng(1)
        counts = rng.integers(0, 4, size=(30, 12))
        model = train_naive_bayes(counts, rng.integers(0, 4, size=30), alpha=0.5)
        np.testing.assert_allclose(np.exp(model.log_likelihood).sum(axis=1), np.ones(len(model.classes)))

    def test_log_space_matches_probability_space(self):
        rng = np.random.default_rng(2)
        counts = rng.integers(0, 3, size=(20, 6))
        y = rng.integers(0, 3, size=20)
        model = train_naive_bayes(counts, y)
        document = np.array([[1, 0, 2, 0, 1, 0]])
        prior = np.exp(model.log_prior)
        likelihood = np.exp(model.log_likelihood)
        joint = prior * np.prod(likelihood ** document[0], axis=1)
        np.testing.assert_allclose(model.predict_proba(document)[0], joint / joint.sum(), atol=1e-12)

    def test_accepts_sparse_vectors(self, java_sentences):
        featurizer = BowFeaturizer().fit(java_sentences)
        vectors = featurizer.vectors(java_sentences)
        model = train_naive_bayes(vectors, [5, 0, 6, 5])
        np.testing.assert_array_equal(model.classes, [0, 5, 6])

    def test_invalid_alpha(self):
        with pytest.raises(ValueError):
            train_naive_bayes(self.COUNTS, [0, 1], alpha=0.0)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            train_naive_bayes(self.COUNTS, [0])


def constant_classifier(probabilities, threshold=0.5):
    return OneVsRestClassifier(spec=HeadSpec('logistic'), n_labels=len(probabilities), dim=2,
                               threshold=threshold, heads=[ConstantHead(p) for p in probabilities],
                               constant=[False] * len(probabilities))


class TestOneVsRest:
    """Test the one-vs-rest classifier."""

    def test_one_head_per_java_label(self, java_sentences):
        featurizer = BowFeaturizer().fit(java_sentences)
        X = featurizer.transform(java_sentences)
        classifier = ovr_train(X, [s.labels for s in java_sentences], 7, HeadSpec('logistic'))
        assert len(classifier.heads) == 7
        assert classifier.predict_proba(X).shape == (4, 7)

    def test_label_without_positives_gets_constant_head(self, separable_2d):
        X, y = separable_2d
        label_sets = [frozenset([int(label)]) for label in y]
        classifier = ovr_train(X, label_sets, 3, HeadSpec('logistic'))
        assert classifier.flagged_labels == [2]
        np.testing.assert_array_equal(classifier.predict_proba(X)[:, 2], np.zeros(X.shape[0]))

    def test_threshold_policy(self):
        classifier = constant_classifier([0.9, 0.6, 0.1])
        assert ovr_predict(classifier, np.zeros((1, 2))) == [frozenset([0, 1])]

    def test_argmax_fallback_when_nothing_passes(self):
        classifier = constant_classifier([0.2, 0.3, 0.1])
        assert ovr_predict(classifier, np.zeros((1, 2))) == [frozenset([1])]

    def test_ties_go_to_lowest_index(self):
        classifier = constant_classifier([0.3, 0.3, 0.1])
        assert classifier.predict(np.zeros((1, 2))) == [frozenset([0])]

    def test_naive_bayes_emits_one_label(self, java_sentences):
        featurizer = BowFeaturizer().fit(java_sentences)
        X = featurizer.transform(java_sentences)
        classifier = ovr_train(X, [s.labels for s in java_sentences], 7, HeadSpec('naive_bayes'))
        assert classifier.single_label
        assert all(len(labels) == 1 for labels in classifier.predict(X))
        assert classifier.flagged_labels == [1, 2, 3, 4]

    def test_recovers_separable_labels(self, synthetic_sentences):
        java = [s for s in synthetic_sentences if s.language is Language.JAVA and not s.is_multi_label]
        featurizer = BowFeaturizer().fit(java)
        X = featurizer.transform(java)
        classifier = ovr_train(X, [s.labels for s in java], 7, HeadSpec('logistic', {'C': 10.0}))
        assert classifier.predict(X) == [s.labels for s in java]

    def test_dimension_mismatch(self):
        classifier = constant_classifier([0.5, 0.5])
        with pytest.raises(DimMismatch):
            classifier.predict(np.zeros((1, 3)))

    def test_needs_two_labels(self, separable_2d):
        X, y = separable_2d
        with pytest.raises(ValueError):
            ovr_train(X, [frozenset([0])] * X.shape[0], 1, HeadSpec('logistic'))


class TestHeadSpec:
    """Test head specifications and report names."""

    @pytest.mark.parametrize("spec,expected", [
        (HeadSpec('logistic'), 'default'),
        (HeadSpec('naive_bayes'), 'NB'),
        (HeadSpec('forest', {'max_depth': 9}, ('max_depth',)), 'RF, max_depth: 9'),
        (HeadSpec('svm', {'C': 0.1, 'kernel': 'rbf'}, ('C', 'kernel')), 'SVM, C: 0.1, kernel: rbf'),
        (HeadSpec('logistic', {'C': 0.01}, ('C',)), 'LR, C: 0.01'),
    ])
    def test_display_name(self, spec, expected):
        assert spec.display_name == expected

    def test_unknown_family(self):
        with pytest.raises(ValueError, match='Unknown head family'):
            HeadSpec('perceptron')

    def test_unknown_parameter(self):
        with pytest.raises(ValueError, match='Unknown forest parameters'):
            HeadSpec('forest', {'C': 1.0})

    def test_defaults_fill_missing_parameters(self):
        assert HeadSpec('boosted', {'rounds': 5}).resolved() == {'max_depth': 3, 'rounds': 5, 'shrinkage': 0.1}
