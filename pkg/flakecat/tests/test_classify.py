import logging

import numpy as np
import pytest

from flakecat.classify import (
    Criterion, ForestClassifier, ForestConfig, Kernel, KNNClassifier, KnnConfig,
    SVMClassifier, SvmConfig, BaseClassifier, config_from_dict, forest_fit,
    forest_predict, knn_predict, make_classifier, svm_fit, svm_predict,
)
from flakecat.errors import (
    ConfigOutOfBoundsError, DimensionMismatchError, KTooLargeError, SingleClassError,
)
from flakecat.tests.conftest import make_blobs


def brute_force_knn(train_X, train_y, query, k):
    out = []
    for q in query:
        d = np.sum((train_X - q) ** 2, axis=1)
        order = np.argsort(d, kind='stable')[:k]
        labels = train_y[order]
        votes = {c: np.sum(labels == c) for c in set(labels.tolist())}
        top = max(votes.values())
        tied = [c for c in votes if votes[c] == top]
        out.append(next(c for c in labels if c in tied))
    return np.array(out)


class TestKNN:

    @pytest.fixture(autouse=True)
    def setup(self):
        self.prng = np.random.RandomState(10)

    def test_simple_vote(self):
        X = np.array([[0.0], [1.0], [2.0], [10.0], [11.0]])
        y = np.array([0, 0, 0, 1, 1])
        assert knn_predict(X, y, np.array([[1.5], [10.5]]), KnnConfig(3)).tolist() == [0, 1]

    def test_matches_brute_force(self):
        X = self.prng.randn(200, 3)
        y = self.prng.randint(0, 4, size=200)
        Q = self.prng.randn(50, 3)
        for k in (2, 5, 10):
            assert np.array_equal(knn_predict(X, y, Q, KnnConfig(k)), brute_force_knn(X, y, Q, k))

    def test_vote_tie_goes_to_nearest(self):
        X = np.array([[0.0], [1.0], [3.0], [4.0]])
        y = np.array([5, 2, 2, 5])
        # neighbours of 0.4 in distance order: 0 (5), 1 (2); one vote each
        assert knn_predict(X, y, np.array([[0.4]]), KnnConfig(2)).tolist() == [5]

    def test_k1_reproduces_training_labels(self):
        X = self.prng.randn(40, 2)
        y = self.prng.randint(0, 3, size=40)
        assert np.array_equal(knn_predict(X, y, X, KnnConfig(1)), y)

    def test_label_permutation(self):
        X = self.prng.randn(60, 2)
        y = self.prng.randint(0, 3, size=60)
        Q = self.prng.randn(20, 2)
        perm = np.array([2, 0, 1])
        a = knn_predict(X, y, Q, KnnConfig(5))
        b = knn_predict(X, perm[y], Q, KnnConfig(5))
        assert np.array_equal(perm[a], b)

    def test_k_too_large(self):
        with pytest.raises(KTooLargeError):
            knn_predict(self.prng.randn(4, 2), [0, 1, 0, 1], self.prng.randn(1, 2), KnnConfig(5))

    def test_empty_query(self):
        model = KNNClassifier(KnnConfig(1)).fit(self.prng.randn(4, 2), [0, 1, 0, 1])
        assert model.predict(np.empty((0, 2))).shape == (0,)

    def test_dimension_mismatch(self):
        model = KNNClassifier(KnnConfig(1)).fit(self.prng.randn(4, 2), [0, 1, 0, 1])
        with pytest.raises(DimensionMismatchError):
            model.predict(self.prng.randn(3, 5))

    def test_invalid_k(self):
        with pytest.raises(ValueError):
            KnnConfig(0)


class TestSVM:

    def test_separable_line(self):
        X = np.array([[-3.0], [-2.0], [-1.5], [1.5], [2.0], [3.0]])
        y = np.array([0, 0, 0, 1, 1, 1])
        model = svm_fit(X, y, SvmConfig(kernel='linear', c=100.0))
        assert np.array_equal(svm_predict(model, X), y)
        grid = np.linspace(-5, 5, 101)[:, np.newaxis]
        pred = svm_predict(model, grid)
        assert np.all(pred[grid[:, 0] <= -1.0] == 0)
        assert np.all(pred[grid[:, 0] >= 1.0] == 1)

    def test_xor_with_rbf(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        y = np.array([0, 0, 1, 1])
        model = svm_fit(X, y, SvmConfig(kernel=Kernel.RBF, c=10.0, gamma=1.0))
        assert np.array_equal(svm_predict(model, X), y)

    def test_conflicting_duplicates(self):
        X = np.array([[0.0], [0.0], [1.0], [2.0]])
        y = np.array([0, 1, 1, 1])
        pred = svm_predict(svm_fit(X, y, SvmConfig(kernel='linear')), X)
        assert np.mean(pred == y) < 1.0

    def test_binary_decision_values(self):
        X, y = make_blobs(20, 2, 2, sep=3.0)
        d = SVMClassifier(SvmConfig()).fit(X, y).decision_function(X)
        assert d.shape == (40, 2)
        assert np.allclose(d[:, 0], -d[:, 1])
        swapped = SVMClassifier(SvmConfig()).fit(X, 1 - y).decision_function(X)
        assert np.allclose(swapped, d[:, ::-1], atol=5e-2)

    def test_multiclass(self):
        X, y = make_blobs(30, 4, 4)
        model = SVMClassifier(SvmConfig(kernel='rbf', c=10.0)).fit(X, y)
        assert model.decision_function(X).shape == (120, 4)
        assert np.mean(model.predict(X) == y) >= 0.95

    def test_single_class(self):
        with pytest.raises(SingleClassError):
            svm_fit(np.random.RandomState(10).randn(5, 2), [3] * 5, SvmConfig())

    @pytest.mark.parametrize('kwargs', [{'c': 0.0}, {'gamma': -1.0}, {'kernel': 'cubic'}, {'degree': 0}])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValueError):
            SvmConfig(**kwargs)


class TestForest:

    @pytest.fixture(autouse=True)
    def setup(self):
        self.prng = np.random.RandomState(10)

    def test_leaf_larger_than_data_predicts_majority(self):
        X = self.prng.randn(20, 3)
        y = np.array([0] * 15 + [1] * 5)
        model = forest_fit(X, y, ForestConfig(min_samples_leaf=20))
        assert np.all(forest_predict(model, self.prng.randn(10, 3)) == 0)

    def test_pure_training_set(self):
        X = self.prng.randn(12, 2)
        model = forest_fit(X, np.full(12, 4), ForestConfig())
        assert np.all(model.predict(self.prng.randn(5, 2)) == 4)

    def test_blobs(self):
        X, y = make_blobs(50, 2, 4, seed=10)
        X_test, y_test = make_blobs(50, 2, 4, seed=11)
        model = forest_fit(X, y, ForestConfig(seed=1))
        assert np.mean(model.predict(X_test) == y_test) >= 0.95

    def test_seeded(self):
        X = self.prng.randn(60, 4)
        y = self.prng.randint(0, 3, size=60)
        Q = self.prng.randn(30, 4)
        a = forest_fit(X, y, ForestConfig(seed=5)).predict(Q)
        b = forest_fit(X, y, ForestConfig(seed=5)).predict(Q)
        assert np.array_equal(a, b)
        assert set(a.tolist()) <= set(y.tolist())

    def test_entropy_and_log_loss_agree(self):
        X = self.prng.randn(60, 4)
        y = self.prng.randint(0, 3, size=60)
        Q = self.prng.randn(30, 4)
        a = forest_fit(X, y, ForestConfig(criterion=Criterion.ENTROPY, seed=2)).predict(Q)
        b = forest_fit(X, y, ForestConfig(criterion='log_loss', seed=2)).predict(Q)
        assert np.array_equal(a, b)

    def test_absent_codes_are_never_predicted(self):
        X = self.prng.randn(40, 2)
        y = np.where(self.prng.rand(40) > 0.5, 6, 2)
        pred = forest_fit(X, y, ForestConfig(n_estimators=101)).predict(self.prng.randn(25, 2))
        assert set(pred.tolist()) <= {2, 6}

    def test_bounds(self, caplog):
        cfg = ForestConfig(max_depth=500)
        assert cfg.violations() == ['max_depth=500 not in [1, 200]']
        with pytest.raises(ConfigOutOfBoundsError):
            forest_fit(self.prng.randn(10, 2), [0, 1] * 5, cfg, strict=True)
        with caplog.at_level(logging.WARNING):
            forest_fit(self.prng.randn(10, 2), [0, 1] * 5, cfg)
        assert 'outside the tuning bounds' in caplog.text

    @pytest.mark.parametrize('kwargs', [
        {'min_samples_split': 1}, {'max_depth': 0}, {'max_leaf_nodes': 1},
        {'min_weight_fraction_leaf': 0.6}, {'max_depth': 2.5},
    ])
    def test_structurally_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ForestConfig(**kwargs)


class TestPersistence:

    def test_config_round_trip(self):
        for cfg in (KnnConfig(7), SvmConfig(kernel='poly', c=10.0, degree=2), ForestConfig(max_depth=12, seed=3)):
            assert config_from_dict(cfg.to_dict()) == cfg

    def test_unknown_parameters(self):
        with pytest.raises(ValueError):
            config_from_dict({'kind': 'knn', 'k': 3, 'weights': 'distance'})
        with pytest.raises(ValueError):
            config_from_dict({'kind': 'boosting'})

    def test_make_classifier(self):
        assert isinstance(make_classifier({'kind': 'knn', 'k': 3}), KNNClassifier)
        assert isinstance(make_classifier(SvmConfig()), SVMClassifier)
        forest = make_classifier(ForestConfig(), n_jobs=2)
        assert isinstance(forest, ForestClassifier) and forest.n_jobs == 2

    def test_save_and_load(self, tmp_path):
        prng = np.random.RandomState(10)
        X, y = prng.randn(30, 3), prng.randint(0, 3, size=30)
        Q = prng.randn(10, 3)
        for model in (KNNClassifier(KnnConfig(3)), SVMClassifier(SvmConfig()), ForestClassifier(ForestConfig())):
            model.fit(X, y)
            path = tmp_path / '{}.pkl'.format(type(model).__name__)
            model.save(str(path))
            loaded = BaseClassifier.load(str(path))
            assert np.array_equal(loaded.predict(Q), model.predict(Q))

    def test_predict_before_fit(self):
        with pytest.raises(AttributeError):
            KNNClassifier(KnnConfig()).predict(np.zeros((1, 2)))
