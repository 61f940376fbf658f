"""
The three classifier families compared for flaky-test categorisation:
k-nearest neighbours, one-vs-rest kernel SVMs and random forests.

All classifiers share the fit/predict contract of :class:`BaseClassifier`.
Labels are the integer category codes; every vote or argmax tie resolves to
the lower code.
"""

import enum
import logging
from dataclasses import asdict, dataclass, fields

import numpy as np
from sklearn.ensemble import RandomForestClassifier
from sklearn.multiclass import OneVsRestClassifier
from sklearn.svm import SVC

from .errors import (
    ConfigOutOfBoundsError, DimensionMismatchError, KTooLargeError,
    LengthMismatchError, SingleClassError,
)
from .utils import as_matrix, load_model, nearest_neighbours, save_model

logger = logging.getLogger(__name__)

SVM_TOL = 1e-3


class Kernel(enum.Enum):
    LINEAR = 'linear'
    POLY = 'poly'
    RBF = 'rbf'
    SIGMOID = 'sigmoid'


class Criterion(enum.Enum):
    GINI = 'gini'
    ENTROPY = 'entropy'
    LOG_LOSS = 'log_loss'


AUTO = 'auto'


# ---------------------------------------------------------------------------- #
#                                 Configurations                               #
# ---------------------------------------------------------------------------- #


@dataclass(frozen=True)
class KnnConfig:
    k: int = 5

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError('k must be a positive integer, got {}'.format(self.k))

    def to_dict(self):
        return {'kind': 'knn', 'k': int(self.k)}


@dataclass(frozen=True)
class SvmConfig:
    """
    Soft-margin SVM settings. ``gamma='auto'`` means ``1 / (d * var(X))``
    computed on the training matrix.
    """

    kernel: Kernel = Kernel.RBF
    c: float = 1.0
    degree: int = 3
    gamma: object = AUTO
    coef0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'kernel', Kernel(self.kernel))
        if not self.c > 0:
            raise ValueError('c must be > 0, got {}'.format(self.c))
        if self.degree < 1:
            raise ValueError('degree must be >= 1')
        if self.gamma != AUTO and not float(self.gamma) > 0:
            raise ValueError("gamma must be > 0 or 'auto'")
        if not 0.1 <= self.c <= 100:
            logger.debug('c=%s lies outside the swept range [0.1, 100]', self.c)

    def to_dict(self):
        d = asdict(self)
        d['kernel'] = self.kernel.value
        d['kind'] = 'svm'
        return d


# the box the random forest is tuned in
FOREST_BOUNDS = {
    'max_depth': (1, 200),
    'min_impurity_decrease': (0.0, 0.5),
    'min_samples_leaf': (1, 200),
    'min_samples_split': (2, 400),
    'n_estimators': (100, 200),
    'min_weight_fraction_leaf': (0.0, 0.05),
    'max_leaf_nodes': (2, 400),
}
INTEGER_PARAMS = frozenset(('max_depth', 'min_samples_leaf', 'min_samples_split', 'n_estimators', 'max_leaf_nodes'))


@dataclass(frozen=True)
class ForestConfig:
    """
    Random forest settings. Values outside :data:`FOREST_BOUNDS` are
    accepted by the constructor and reported by :meth:`violations`;
    values no forest can be grown with raise ``ValueError`` immediately.
    """

    max_depth: int = 200
    min_impurity_decrease: float = 0.0
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    n_estimators: int = 100
    min_weight_fraction_leaf: float = 0.0
    max_leaf_nodes: int = 400
    criterion: Criterion = Criterion.GINI
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'criterion', Criterion(self.criterion))
        for name in INTEGER_PARAMS:
            value = getattr(self, name)
            if int(value) != value:
                raise ValueError('{} must be an integer, got {}'.format(name, value))
            object.__setattr__(self, name, int(value))
        if self.max_depth < 1 or self.min_samples_leaf < 1 or self.n_estimators < 1:
            raise ValueError('max_depth, min_samples_leaf and n_estimators must be >= 1')
        if self.min_samples_split < 2 or self.max_leaf_nodes < 2:
            raise ValueError('min_samples_split and max_leaf_nodes must be >= 2')
        if self.min_impurity_decrease < 0:
            raise ValueError('min_impurity_decrease must be >= 0')
        if not 0.0 <= self.min_weight_fraction_leaf <= 0.5:
            raise ValueError('min_weight_fraction_leaf must lie in [0, 0.5]')

    def violations(self):
        """Descriptions of every field outside its tuning bound."""
        out = []
        for name, (lo, hi) in FOREST_BOUNDS.items():
            value = getattr(self, name)
            if not lo <= value <= hi:
                out.append('{}={} not in [{}, {}]'.format(name, value, lo, hi))
        return out

    def validate(self, strict=True):
        """
        Check the tuning bounds.

        :param strict: raise on violations instead of logging a warning
        :type strict: bool, optional
        :raises ConfigOutOfBoundsError: if strict and a field is out of bounds
        """
        bad = self.violations()
        if bad and strict:
            raise ConfigOutOfBoundsError(bad)
        if bad:
            logger.warning('forest configuration outside the tuning bounds: %s', '; '.join(bad))
        return self

    def to_dict(self):
        d = asdict(self)
        d['criterion'] = self.criterion.value
        d['kind'] = 'forest'
        return d


CONFIG_TYPES = {'knn': KnnConfig, 'svm': SvmConfig, 'forest': ForestConfig}


def config_from_dict(d):
    """Build a classifier configuration from its ``to_dict`` form."""
    d = dict(d)
    kind = d.pop('kind', None)
    if kind not in CONFIG_TYPES:
        raise ValueError('unknown classifier kind {!r}'.format(kind))
    cls = CONFIG_TYPES[kind]
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ValueError('unknown {} parameters {}'.format(kind, sorted(unknown)))
    return cls(**d)


# ---------------------------------------------------------------------------- #
#                                  Classifiers                                 #
# ---------------------------------------------------------------------------- #


class BaseClassifier(object):
    """
    Base class of the classifiers. Subclasses implement ``_fit`` and
    ``_predict``; the base class checks shapes and records the class codes
    seen at fit time.

    :param config: the classifier settings
    :type config: KnnConfig, SvmConfig or ForestConfig
    """

    def __init__(self, config):
        self.config = config
        self.class_codes_ = None
        self.n_features_ = None

    def __str__(self):
        return '{}({})'.format(type(self).__name__, self.config)

    @property
    def is_fitted(self):
        return self.class_codes_ is not None

    def fit(self, X, y):
        """
        Train the classifier.

        :param X: training matrix of shape (n, d)
        :type X: array_like
        :param y: class code per row
        :type y: array_like
        :return: the fitted classifier
        :rtype: BaseClassifier
        """
        X = as_matrix(X)
        y = np.asarray(y).astype(int)
        if X.shape[0] != y.shape[0]:
            raise LengthMismatchError('{} rows but {} labels'.format(X.shape[0], y.shape[0]))
        self.class_codes_ = np.unique(y)
        self.n_features_ = X.shape[1]
        self._fit(X, y)
        return self

    def predict(self, X):
        """
        Predict class codes.

        :param X: query matrix with the training column count
        :type X: array_like
        :raises DimensionMismatchError: on a column count mismatch
        :return: predicted class codes, one per row
        :rtype: array_like
        """
        if not self.is_fitted:
            raise AttributeError('classifier is not fitted')
        X = np.asarray(getattr(X, 'values', X), dtype=float)
        if X.ndim == 2 and X.shape[0] == 0:
            return np.empty(0, dtype=int)
        X = as_matrix(X)
        if X.shape[1] != self.n_features_:
            raise DimensionMismatchError(self.n_features_, X.shape[1])
        return self._predict(X)

    def save(self, filename):
        save_model(self, filename)

    @staticmethod
    def load(filename):
        model = load_model(filename)
        if not isinstance(model, BaseClassifier):
            raise ValueError('{} does not hold a classifier'.format(filename))
        return model

    def _fit(self, X, y):
        raise NotImplementedError('subclasses must implement _fit')

    def _predict(self, X):
        raise NotImplementedError('subclasses must implement _predict')


class KNNClassifier(BaseClassifier):
    """
    Majority vote among the k Euclidean-nearest training points. Distance
    ties go to the lower training index; vote ties go to the class of the
    nearest neighbour among the tied classes.
    """

    def _fit(self, X, y):
        if self.config.k > X.shape[0]:
            raise KTooLargeError(self.config.k, X.shape[0])
        self.train_X_ = X
        self.train_y_ = y

    def _predict(self, X):
        idx, _ = nearest_neighbours(self.train_X_, self.config.k, query=X)
        neighbour_labels = self.train_y_[idx]
        out = np.empty(X.shape[0], dtype=int)
        for row, labels in enumerate(neighbour_labels):
            codes, votes = np.unique(labels, return_counts=True)
            tied = codes[votes == votes.max()]
            if tied.size == 1:
                out[row] = tied[0]
            else:
                # labels are in distance order
                out[row] = next(c for c in labels if c in tied)
        return out


class SVMClassifier(BaseClassifier):
    """One-vs-rest soft-margin SVMs solved by SMO (libsvm) to tolerance 1e-3."""

    def _fit(self, X, y):
        if self.class_codes_.size < 2:
            raise SingleClassError('an SVM needs at least two classes')
        cfg = self.config
        gamma = 'scale' if cfg.gamma == AUTO else float(cfg.gamma)
        svc = SVC(kernel=cfg.kernel.value, C=cfg.c, degree=cfg.degree, gamma=gamma,
                  coef0=cfg.coef0, tol=SVM_TOL)
        self.model_ = OneVsRestClassifier(svc).fit(X, y)

    def decision_function(self, X):
        """
        Per-class decision values, one column per class code seen at fit.
        With two classes the single binary value d is returned as (-d, d).
        """
        X = as_matrix(X)
        if X.shape[1] != self.n_features_:
            raise DimensionMismatchError(self.n_features_, X.shape[1])
        d = self.model_.decision_function(X)
        if d.ndim == 1:
            d = np.column_stack([-d, d])
        return d

    def _predict(self, X):
        # argmax keeps the first maximum, classes are sorted
        return self.class_codes_[np.argmax(self.decision_function(X), axis=1)]


class ForestClassifier(BaseClassifier):
    """
    CART ensemble on bootstrap samples with ``sqrt(d)`` candidate features per
    split. Trees grow best-first (``max_leaf_nodes``), so every tuning control
    has a defined effect. Prediction is a plurality vote of the trees.

    :param config: forest settings
    :type config: ForestConfig
    :param strict: reject configurations outside the tuning bounds, defaults to False
    :type strict: bool, optional
    :param n_jobs: number of threads used to grow the trees, defaults to 1
    :type n_jobs: int, optional
    """

    def __init__(self, config, strict=False, n_jobs=1):
        super().__init__(config)
        self.strict = strict
        self.n_jobs = n_jobs

    def _fit(self, X, y):
        cfg = self.config.validate(strict=self.strict)
        self.model_ = RandomForestClassifier(
            n_estimators=cfg.n_estimators,
            criterion=cfg.criterion.value,
            max_depth=cfg.max_depth,
            min_samples_split=cfg.min_samples_split,
            min_samples_leaf=cfg.min_samples_leaf,
            min_weight_fraction_leaf=cfg.min_weight_fraction_leaf,
            max_features='sqrt',
            max_leaf_nodes=cfg.max_leaf_nodes,
            min_impurity_decrease=cfg.min_impurity_decrease,
            bootstrap=True,
            random_state=cfg.seed,
            n_jobs=self.n_jobs,
        ).fit(X, y)

    def _predict(self, X):
        # trees predict positions in classes_
        votes = np.stack([tree.predict(X) for tree in self.model_.estimators_]).astype(int)
        n_classes = self.model_.classes_.size
        counts = np.apply_along_axis(np.bincount, 0, votes, minlength=n_classes)
        return self.model_.classes_[np.argmax(counts, axis=0)].astype(int)


def make_classifier(config, **kwargs):
    """
    Instantiate the classifier for a configuration.

    :param config: classifier settings or their dictionary form
    :type config: KnnConfig, SvmConfig, ForestConfig or dict
    :return: an unfitted classifier
    :rtype: BaseClassifier
    """
    if isinstance(config, dict):
        config = config_from_dict(config)
    if isinstance(config, KnnConfig):
        return KNNClassifier(config)
    if isinstance(config, SvmConfig):
        return SVMClassifier(config)
    if isinstance(config, ForestConfig):
        return ForestClassifier(config, **kwargs)
    raise ValueError('unknown classifier configuration {!r}'.format(config))


# ---------------------------------------------------------------------------- #
#                               Functional interface                           #
# ---------------------------------------------------------------------------- #


def knn_predict(train_X, train_y, query_X, cfg):
    """
    Classify ``query_X`` by k-nearest-neighbour vote over the training set.

    :raises KTooLargeError: if k exceeds the training-set size
    """
    return KNNClassifier(cfg).fit(train_X, train_y).predict(query_X)


def svm_fit(X, y, cfg):
    """
    Train one-vs-rest SVMs.

    :raises SingleClassError: if y holds a single class
    """
    return SVMClassifier(cfg).fit(X, y)


def svm_predict(model, X):
    return model.predict(X)


def forest_fit(X, y, cfg, strict=False, n_jobs=1):
    """
    Grow a random forest.

    :raises ConfigOutOfBoundsError: if strict and cfg leaves the tuning bounds
    """
    return ForestClassifier(cfg, strict=strict, n_jobs=n_jobs).fit(X, y)


def forest_predict(model, X):
    return model.predict(X)
