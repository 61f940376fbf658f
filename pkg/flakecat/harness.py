"""
Experiment orchestration: stratified cross-validation with fold-local
rebalancing, hyperparameter sweeps, random forest tuning, the KNN structure
analysis of reduced embeddings, the consistency/discriminancy validation of
FDC against F1, and the emission of plot data and result tables.

Every fold follows the same steps: the training split is rebalanced, the
classifier is fitted on it, and the untouched test split is predicted and
scored. Reducers are fitted on the full matrix (``scope='full'``) or, for
PCA and LDA, on each training split (``scope='fold'``).
"""

import enum
import itertools
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .classify import config_from_dict, make_classifier
from .corpus import CategoryLabel
from .embed import (
    DEFAULT_MAX_FEATURES, DEFAULT_MIN_DF, fit_tfidf, load_external_embeddings, transform_tfidf,
)
from .errors import (
    ConfigError, FlakecatError, KLargerThanNError, WrongDimensionalityError, ZeroInputEntropyError,
)
from .javalex import load_flattened
from .metrics import (
    DEFAULT_EPSILON, MetricReport, category_name, consistency_index,
    discriminancy_index, evaluate, split_pairs,
)
from .reduce import Projection, ReducedMatrix, fit_reducer, transform
from .sample import DEFAULT_SMOTE_K, balance
from .tune import DEFAULT_SPACE, optimize
from .utils import as_matrix, derive_seed, frame_to_rows, print_table

logger = logging.getLogger(__name__)

DEFAULT_FOLDS = 10
TUNING_FOLDS = 5
CD_FOLDS = 5
CD_REPEATS = (5, 10, 20, 50)
KNN_K_VALUES = (2, 5, 10, 20, 50, 100, 200, 500)
SVM_C_VALUES = (0.1, 1.0, 10.0, 100.0)
SVM_KERNELS = ('linear', 'poly', 'rbf', 'sigmoid')


class Objective(enum.Enum):
    MACRO_F1 = 'f1'
    FDC = 'fdc'

    def of(self, report):
        return report.macro_f1 if self is Objective.MACRO_F1 else report.fdc


class ReduceScope(enum.Enum):
    FULL = 'full'
    FOLD = 'fold'


# ---------------------------------------------------------------------------- #
#                                   Fold plans                                 #
# ---------------------------------------------------------------------------- #


@dataclass
class FoldPlan:
    """Train/test index arrays of a k-fold split."""

    k: int
    folds: list
    seed: int

    def __len__(self):
        return len(self.folds)

    def __iter__(self):
        return iter(self.folds)

    @property
    def test_sets(self):
        return [test for _, test in self.folds]


def stratified_kfold(y, k, seed=0):
    """
    Stratified k-fold split. The members of every class are shuffled and
    dealt round-robin to the folds; the dealing position carries over from
    one class to the next so that fold sizes stay within one of each other.
    A class with fewer than k members is spread over as many folds as it
    has members, with a warning.

    :param y: class label per sample
    :type y: array_like
    :param k: number of folds, at least 2
    :type k: int
    :param seed: seed of the shuffling, defaults to 0
    :type seed: int, optional
    :raises KLargerThanNError: if there are fewer samples than folds
    :return: the plan; test sets partition ``0..n-1``
    :rtype: FoldPlan
    """
    y = np.asarray(y)
    n = y.shape[0]
    if k < 2:
        raise ValueError('k must be >= 2')
    if n < k:
        raise KLargerThanNError(k, n)
    rng = np.random.RandomState(seed)
    assignment = np.empty(n, dtype=int)
    offset = 0
    for label in np.unique(y):
        members = np.flatnonzero(y == label)
        if members.size < k:
            logger.warning('class %s has %d samples for %d folds', label, members.size, k)
        members = rng.permutation(members)
        assignment[members] = (offset + np.arange(members.size)) % k
        offset = (offset + members.size) % k

    everything = np.arange(n)
    folds = [(everything[assignment != f], everything[assignment == f]) for f in range(k)]
    return FoldPlan(k, folds, seed)


# ---------------------------------------------------------------------------- #
#                                 Configuration                                #
# ---------------------------------------------------------------------------- #


@dataclass
class EmbeddingConfig:
    """
    Where the feature matrix comes from: ``tfidf`` vectorises the flattened
    test cases at ``path``, ``external`` reads an embedding CSV at ``path``.
    """

    source: str = 'tfidf'
    path: str = None
    min_df: int = 2
    max_features: int = 5000

    def __post_init__(self):
        if self.source not in ('tfidf', 'external'):
            raise ConfigError('embedding source must be tfidf or external, got {!r}'.format(self.source))


@dataclass
class ReducerConfig:
    method: str = 'lda'
    r: int = 6
    params: dict = field(default_factory=dict)
    scope: str = ReduceScope.FULL.value

    def __post_init__(self):
        if self.method not in ('none', 'pca', 'lda', 'isomap', 'tsne'):
            raise ConfigError('unknown reducer {!r}'.format(self.method))
        ReduceScope(self.scope)
        if self.scope == ReduceScope.FOLD.value and self.method not in ('pca', 'lda', 'none'):
            raise ConfigError('{} has no out-of-sample projection, use scope=full'.format(self.method))


@dataclass
class ClassifierConfig:
    """
    Classifier family, fixed parameters, and an optional grid whose
    cartesian product (in sorted key order) gives the settings to evaluate.
    """

    kind: str = 'forest'
    params: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)

    def settings(self, seed=0):
        keys = sorted(self.grid)
        combos = itertools.product(*(self.grid[k] for k in keys)) if keys else [()]
        out = []
        for combo in combos:
            d = dict(self.params, kind=self.kind)
            d.update(zip(keys, combo))
            if self.kind == 'forest':
                d.setdefault('seed', seed)
            out.append(config_from_dict(d))
        return out


@dataclass
class ExperimentConfig:
    """One experiment: features, reducer, sampler, classifier settings and CV protocol."""

    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    reducer: ReducerConfig = field(default_factory=ReducerConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    sampler: bool = True
    smote_k: int = DEFAULT_SMOTE_K
    folds: int = DEFAULT_FOLDS
    repeats: int = 1
    seed: int = 0
    objective: str = Objective.MACRO_F1.value
    threads: int = 1

    def __post_init__(self):
        Objective(self.objective)
        if self.folds < 2 or self.repeats < 1:
            raise ConfigError('folds must be >= 2 and repeats >= 1')

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        try:
            d['embedding'] = EmbeddingConfig(**d.get('embedding', {}))
            d['reducer'] = ReducerConfig(**d.get('reducer', {}))
            d['classifier'] = ClassifierConfig(**d.get('classifier', {}))
            return cls(**d)
        except TypeError as e:
            raise ConfigError('invalid experiment configuration: {}'.format(e)) from e

    @classmethod
    def from_json(cls, path):
        with open(path, encoding='utf-8') as f:
            return cls.from_dict(json.load(f))

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------- #
#                                    Reports                                   #
# ---------------------------------------------------------------------------- #


@dataclass
class FoldResult:
    repeat: int
    fold: int
    report: MetricReport
    n_train: int = 0
    n_synthetic: int = 0


@dataclass
class SettingResult:
    """All folds of one classifier setting and their means."""

    setting: dict
    folds: list

    @property
    def macro_f1(self):
        return float(np.mean([f.report.macro_f1 for f in self.folds]))

    @property
    def fdc(self):
        return float(np.mean([f.report.fdc for f in self.folds]))

    @property
    def per_class_f1(self):
        codes = sorted({c for f in self.folds for c in f.report.per_class_f1})
        return {c: float(np.mean([f.report.per_class_f1.get(c, 0.0) for f in self.folds])) for c in codes}

    @property
    def pairs(self):
        return [f.report.pair for f in self.folds]

    def to_dict(self):
        return {
            'setting': self.setting,
            'aggregate': {
                'macro_f1': self.macro_f1,
                'fdc': self.fdc,
                'per_class_f1': {category_name(c): v for c, v in self.per_class_f1.items()},
            },
            'folds': [dict(f.report.to_dict(), repeat=f.repeat, fold=f.fold,
                           n_train=f.n_train, n_synthetic=f.n_synthetic) for f in self.folds],
        }

    @classmethod
    def from_dict(cls, d):
        folds = [FoldResult(f['repeat'], f['fold'], MetricReport.from_dict(f),
                            n_train=f.get('n_train', 0), n_synthetic=f.get('n_synthetic', 0))
                 for f in d['folds']]
        return cls(d['setting'], folds)


@dataclass
class ExperimentReport:
    config: dict
    settings: list
    wall_clock: float = 0.0

    def best(self, objective=None):
        objective = Objective(objective or self.config.get('objective', 'f1'))
        return max(self.settings, key=lambda s: objective.of(s))

    def to_dict(self, include_timing=False):
        d = {'config': self.config, 'settings': [s.to_dict() for s in self.settings]}
        if include_timing:
            d['wall_clock'] = self.wall_clock
        return d

    @classmethod
    def from_dict(cls, d):
        """Rebuild a report saved with :meth:`save`."""
        return cls(d['config'], [SettingResult.from_dict(s) for s in d['settings']], d.get('wall_clock', 0.0))

    def to_json(self, include_timing=False):
        """JSON text with sorted keys; identical inputs give identical text."""
        return json.dumps(self.to_dict(include_timing), sort_keys=True, indent=2)

    def save(self, path, include_timing=False):
        with open(path, 'w', encoding='utf-8') as f:
            f.write(self.to_json(include_timing))
            f.write('\n')

    def print_summary(self):
        rows = [[json.dumps(s.setting, sort_keys=True), '{:.4f}'.format(s.macro_f1), '{:.4f}'.format(s.fdc)]
                for s in self.settings]
        print_table(rows, ['setting', 'macro F1', 'FDC'])


# ---------------------------------------------------------------------------- #
#                                  Experiments                                 #
# ---------------------------------------------------------------------------- #


def load_features(config, corpus):
    """
    Build the feature matrix an experiment configuration points at, with
    rows in manifest order.

    :param config: experiment or embedding configuration
    :type config: ExperimentConfig or EmbeddingConfig
    :param corpus: the labelled manifest
    :type corpus: Corpus
    :return: feature matrix
    :rtype: EmbeddingMatrix
    """
    emb = getattr(config, 'embedding', config)
    if emb.path is None:
        raise ConfigError('embedding.path is required')
    if emb.source == 'external':
        return load_external_embeddings(emb.path, corpus)
    return tfidf_features(load_flattened(emb.path), corpus, emb.min_df, emb.max_features)


def tfidf_features(flattened, corpus, min_df=DEFAULT_MIN_DF, max_features=DEFAULT_MAX_FEATURES):
    """
    tf-idf vectors of the flattened tests of a manifest, rows in manifest order.

    :param flattened: mapping test_id -> flattened source
    :type flattened: dict
    :param corpus: the labelled manifest
    :type corpus: Corpus
    :raises ConfigError: if a test of the manifest has no flattened source
    :return: feature matrix
    :rtype: EmbeddingMatrix
    """
    missing = [t for t in corpus.test_ids if t not in flattened]
    if missing:
        raise ConfigError('{} tests have no flattened source, e.g. {}'.format(len(missing), missing[0]))
    docs = [flattened[t] for t in corpus.test_ids]
    vocab = fit_tfidf(docs, min_df, max_features)
    return transform_tfidf(vocab, docs, corpus.test_ids)


def _reduce_full(config, X, y):
    red = config.reducer
    if red.method == 'none' or red.scope == ReduceScope.FOLD.value:
        return as_matrix(X)
    fitted = fit_reducer(red.method, X, y, red.r, red.params, config.seed)
    if isinstance(fitted, Projection):
        fitted = transform(fitted, X)
    return fitted.values


def _run_fold(config, setting, index, X, y, labels, repeat, fold, train, test):
    """Balance, fit, predict and score one fold. Errors get the setting and fold attached."""
    try:
        assert np.intersect1d(train, test).size == 0
        X_train, y_train = X[train], y[train]
        X_test = X[test]
        red = config.reducer
        if red.scope == ReduceScope.FOLD.value and red.method != 'none':
            p = fit_reducer(red.method, X_train, y_train, red.r, red.params, config.seed)
            X_train, X_test = transform(p, X_train).values, transform(p, X_test).values

        n_synthetic = 0
        if config.sampler:
            sampled = balance(X_train, y_train, config.smote_k, derive_seed(config.seed, repeat, fold))
            X_train, y_train = sampled.X, sampled.y
            n_synthetic = sampled.n_synthetic

        model = make_classifier(setting).fit(X_train, y_train)
        report = evaluate(y[test], model.predict(X_test), labels)
    except FlakecatError as e:
        e.context.update({'setting': index, 'repeat': repeat, 'fold': fold})
        raise
    except Exception as e:
        e.context = {'setting': index, 'repeat': repeat, 'fold': fold}
        raise
    logger.debug('setting %d repeat %d fold %d: F1=%.4f FDC=%.4f', index, repeat, fold,
                 report.macro_f1, report.fdc)
    return FoldResult(repeat, fold, report, n_train=len(y_train), n_synthetic=n_synthetic)


def run_experiment(config, X, y):
    """
    Cross-validate every classifier setting of ``config`` on a feature matrix.

    :param config: the experiment
    :type config: ExperimentConfig
    :param X: feature matrix, one row per labelled test
    :type X: EmbeddingMatrix or array_like
    :param y: category code per row
    :type y: array_like
    :raises FlakecatError: any failure, with ``context`` naming setting, repeat and fold
    :return: per-fold and aggregate scores of every setting
    :rtype: ExperimentReport
    """
    start = time.perf_counter()
    y = np.asarray(y).astype(int)
    labels = np.unique(y)
    if labels.size < 2:
        raise ZeroInputEntropyError('all {} tests share one category, FDC is undefined'.format(y.size),
                                    context={'categories': [category_name(c) for c in labels]})
    values = _reduce_full(config, X, y)
    if values.shape[0] != y.shape[0]:
        raise ValueError('{} rows but {} labels'.format(values.shape[0], y.shape[0]))
    settings = config.classifier.settings(config.seed)
    plans = [stratified_kfold(y, config.folds, derive_seed(config.seed, rep)) for rep in range(config.repeats)]

    tasks = [(s, rep, f, train, test)
             for s in range(len(settings))
             for rep, plan in enumerate(plans)
             for f, (train, test) in enumerate(plan)]
    logger.info('running %d settings x %d repeats x %d folds', len(settings), config.repeats, config.folds)
    results = Parallel(n_jobs=config.threads, prefer='threads')(
        delayed(_run_fold)(config, settings[s], s, values, y, labels, rep, f, train, test)
        for s, rep, f, train, test in tasks
    )

    per_setting = [[] for _ in settings]
    for (s, _, _, _, _), result in zip(tasks, results):
        per_setting[s].append(result)
    out = [SettingResult(setting.to_dict(), folds) for setting, folds in zip(settings, per_setting)]
    return ExperimentReport(config.to_dict(), out, time.perf_counter() - start)


def override(config, **changes):
    d = config.to_dict()
    for key, value in changes.items():
        if isinstance(value, dict) and isinstance(d.get(key), dict):
            d[key] = dict(d[key], **value)
        else:
            d[key] = value
    return ExperimentConfig.from_dict(d)


def _check_k_values(k_values):
    k_values = [int(k) for k in k_values]
    if not k_values or any(not 2 <= k <= 500 for k in k_values):
        raise ValueError('k values must lie in [2, 500]')
    return k_values


def sweep_knn(X, y, k_values=KNN_K_VALUES, config=None):
    """
    Cross-validated KNN for each k on one feature matrix.

    :return: table indexed by k with macro F1 and FDC columns
    :rtype: pandas.DataFrame
    """
    k_values = _check_k_values(k_values)
    config = override(config or ExperimentConfig(),
                   classifier={'kind': 'knn', 'params': {}, 'grid': {'k': k_values}})
    report = run_experiment(config, X, y)
    frame = pd.DataFrame({'macro_f1': [s.macro_f1 for s in report.settings],
                          'fdc': [s.fdc for s in report.settings]},
                         index=pd.Index(k_values, name='k'))
    return frame


def knn_structure_analysis(reduced_sets, y, k_values=KNN_K_VALUES, folds=DEFAULT_FOLDS, seed=0,
                           sampler=True, threads=1):
    """
    How well each reduced embedding preserves the category structure: the
    cross-validated macro F1 of KNN for every k, one column per reducer.

    :param reduced_sets: mapping reducer name -> reduced matrix
    :type reduced_sets: dict
    :param y: category code per row
    :type y: array_like
    :param k_values: neighbour counts within [2, 500]
    :type k_values: list, optional
    :return: table indexed by k, one column per reducer
    :rtype: pandas.DataFrame
    """
    k_values = _check_k_values(k_values)
    base = ExperimentConfig(reducer=ReducerConfig(method='none'), folds=folds, seed=seed,
                            sampler=sampler, threads=threads)
    columns = {}
    for name, matrix in reduced_sets.items():
        logger.info('KNN structure analysis of %s', name)
        columns[name] = sweep_knn(matrix, y, k_values, base)['macro_f1'].to_numpy()
    return pd.DataFrame(columns, index=pd.Index(k_values, name='k'))


def sweep_svm(X, y, kernels=SVM_KERNELS, c_values=SVM_C_VALUES, config=None):
    """
    Cross-validated one-vs-rest SVMs over a kernel x C grid.

    :return: table of the configured objective indexed by C, one column per kernel
    :rtype: pandas.DataFrame
    """
    config = override(config or ExperimentConfig(),
                   classifier={'kind': 'svm', 'params': {}, 'grid': {'kernel': list(kernels), 'c': list(c_values)}})
    report = run_experiment(config, X, y)
    objective = Objective(config.objective)
    table = pd.DataFrame(index=pd.Index(list(c_values), name='c'), columns=list(kernels), dtype=float)
    for s in report.settings:
        table.loc[s.setting['c'], s.setting['kernel']] = objective.of(s)
    return table


def tune_forest(X, y, config=None, n_init=5, n_iter=60, trace=None, folds=TUNING_FOLDS, on_observation=None):
    """
    Bayesian optimisation of the random forest with a cross-validated
    objective. Every candidate is scored on the same fold plan.

    :param X: feature matrix
    :param y: category code per row
    :param config: experiment settings (reducer, sampler, seed, objective), defaults to None
    :type config: ExperimentConfig, optional
    :param n_init: random initial points, defaults to 5
    :param n_iter: guided rounds, defaults to 60
    :param trace: observations of an interrupted run, defaults to None
    :param folds: CV folds per evaluation, defaults to 5
    :param on_observation: called with the trace after each evaluation, defaults to None
    :type on_observation: callable, optional
    :return: best observation and trace
    :rtype: tuple
    """
    config = override(config or ExperimentConfig(), folds=folds, repeats=1)
    objective = Objective(config.objective)
    values = _reduce_full(config, X, y)
    # the reducer already ran once
    fixed = override(config, reducer={'method': 'none', 'scope': 'full'}) \
        if config.reducer.scope == ReduceScope.FULL.value else config
    history = list(trace or [])

    def evaluate_point(point):
        forest = DEFAULT_SPACE.to_config(point, seed=config.seed)
        run = run_experiment(override(fixed, classifier={'kind': 'forest', 'params': forest.to_dict(), 'grid': {}}),
                             values, y)
        return [objective.of(f.report) for f in run.settings[0].folds]

    return optimize(evaluate_point, DEFAULT_SPACE, n_init, n_iter, config.seed, history,
                    callback=on_observation)


def cd_validation(X, y, classifiers, repeats=CD_REPEATS, folds=CD_FOLDS, seed=0, epsilon=DEFAULT_EPSILON,
                  config=None):
    """
    Compare FDC with macro F1 as measures: for every classifier, repeated
    shuffled k-fold runs give one (FDC, F1) outcome per fold, and the
    consistency and discriminancy indices are computed on the outcomes of
    the first m repeats for every m in ``repeats``.

    :param X: feature matrix
    :param y: category code per row
    :param classifiers: mapping name -> classifier configuration (or its dict form)
    :type classifiers: dict
    :param repeats: repeat counts to report, defaults to (5, 10, 20, 50)
    :type repeats: tuple, optional
    :param epsilon: tie tolerance of the indices, defaults to 0.005
    :type epsilon: float, optional
    :return: consistency table and discriminancy table, indexed by repeat count
    :rtype: tuple
    """
    repeats = sorted(int(r) for r in repeats)
    config = override(config or ExperimentConfig(), folds=folds, repeats=repeats[-1], seed=seed)
    c_table = pd.DataFrame(index=pd.Index(repeats, name='repeats'), dtype=float)
    d_table = pd.DataFrame(index=pd.Index(repeats, name='repeats'), dtype=float)
    for name, clf in classifiers.items():
        params = clf if isinstance(clf, dict) else clf.to_dict()
        params = dict(params)
        kind = params.pop('kind')
        run = run_experiment(override(config, classifier={'kind': kind, 'params': params, 'grid': {}}), X, y)
        folds_run = run.settings[0].folds
        c_col, d_col = [], []
        for m in repeats:
            f_vals, g_vals = split_pairs([r.report.pair for r in folds_run if r.repeat < m])
            c_col.append(consistency_index(f_vals, g_vals, epsilon))
            d_col.append(discriminancy_index(f_vals, g_vals, epsilon))
        c_table[name] = c_col
        d_table[name] = d_col
        logger.info('%s: C=%.3f D=%.3f over %d repeats', name, c_col[-1], d_col[-1], repeats[-1])
    return c_table, d_table


def category_table(reports, objective=None):
    """
    Per-category F1 of several experiments, one column each, plus an
    ``Average`` row holding the mean of each column. The best setting of
    each report is used.

    :param reports: mapping column name -> ExperimentReport
    :type reports: dict
    :return: table indexed by category name
    :rtype: pandas.DataFrame
    """
    columns = {}
    for name, report in reports.items():
        best = report.best(objective)
        columns[name] = {category_name(c): v for c, v in best.per_class_f1.items()}
    order = [c.display_name for c in CategoryLabel]
    frame = pd.DataFrame(columns)
    frame = frame.reindex([c for c in order if c in frame.index] + [c for c in frame.index if c not in order])
    frame.loc['Average'] = frame.mean(axis=0)
    frame.index.name = 'category'
    return frame


def print_frame(frame, title=None, fmt='{:.2f}'):
    header, rows = frame_to_rows(frame, fmt)
    print_table(rows, header, title)


# ---------------------------------------------------------------------------- #
#                                   Plot data                                  #
# ---------------------------------------------------------------------------- #


def emit_projection(reduced, labels, path):
    """
    Write a two-dimensional projection as CSV ``test_id,label,c0,c1``.

    :param reduced: reduced matrix with exactly two columns
    :type reduced: ReducedMatrix
    :param labels: category code per row
    :type labels: array_like
    :param path: output file
    :type path: str or Path
    :raises WrongDimensionalityError: if the matrix does not have two columns
    """
    if reduced.values.shape[1] != 2:
        raise WrongDimensionalityError('plot data needs r=2, got r={}'.format(reduced.values.shape[1]))
    frame = pd.DataFrame({
        'test_id': reduced.row_ids,
        'label': [category_name(c) for c in labels],
        'c0': reduced.values[:, 0],
        'c1': reduced.values[:, 1],
    })
    frame.to_csv(path, index=False, float_format='%.17g')


def load_projection(path):
    """
    Read plot data written by :func:`emit_projection`.

    :return: the projection and the category name of each row
    :rtype: tuple
    """
    frame = pd.read_csv(path, dtype={'test_id': str, 'label': str}, float_precision='round_trip')
    reduced = ReducedMatrix(frame[['c0', 'c1']].to_numpy(dtype=float), frame['test_id'].tolist(), 'loaded')
    return reduced, frame['label'].tolist()
