"""
Bayesian optimisation of random forest settings.

Points of the tuning box are encoded into the 10-dimensional unit cube (seven
min-max scaled numeric parameters followed by a one-hot criterion), a
Gaussian process with an ARD Matern-5/2 kernel is fitted to the objective
values seen so far, and the next point maximises expected improvement over
random candidates refined with L-BFGS-B.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.optimize import minimize
from scipy.stats import norm
from sklearn.gaussian_process import GaussianProcessRegressor
from sklearn.gaussian_process.kernels import ConstantKernel, Matern

from .classify import FOREST_BOUNDS, INTEGER_PARAMS, Criterion, ForestConfig
from .errors import NumericalFailure, ObjectiveError, OutOfBoundsError
from .utils import check_random_state, derive_seed, round_half_up

logger = logging.getLogger(__name__)

NUMERIC_ORDER = (
    'max_depth', 'min_impurity_decrease', 'min_samples_leaf', 'min_samples_split',
    'n_estimators', 'min_weight_fraction_leaf', 'max_leaf_nodes',
)
CRITERIA = tuple(c.value for c in Criterion)
DEFAULT_NOISE = 1e-6
MAX_NOISE = 1e-1
N_CANDIDATES = 2048
N_REFINE = 5


@dataclass(frozen=True)
class ParamBound:
    name: str
    low: float
    high: float
    integer: bool

    def contains(self, value):
        return self.low <= value <= self.high and (not self.integer or float(value).is_integer())


@dataclass(frozen=True)
class ParamSpace:
    """The tuning box: numeric bounds in encoding order plus the criterion choices."""

    bounds: tuple = tuple(ParamBound(n, *FOREST_BOUNDS[n], n in INTEGER_PARAMS) for n in NUMERIC_ORDER)
    criteria: tuple = CRITERIA

    @property
    def dim(self):
        return len(self.bounds) + len(self.criteria)

    @property
    def names(self):
        return [b.name for b in self.bounds] + ['criterion']

    def sample(self, rng):
        """A uniformly random in-bound point."""
        rng = check_random_state(rng)
        point = {}
        for b in self.bounds:
            if b.integer:
                point[b.name] = int(rng.randint(int(b.low), int(b.high) + 1))
            else:
                point[b.name] = float(rng.uniform(b.low, b.high))
        point['criterion'] = self.criteria[rng.randint(len(self.criteria))]
        return point

    def to_config(self, point, seed=0):
        return ForestConfig(criterion=point['criterion'], seed=seed,
                            **{b.name: point[b.name] for b in self.bounds})


DEFAULT_SPACE = ParamSpace()


def encode(point, space=DEFAULT_SPACE):
    """
    Map a parameter point into the unit cube.

    :param point: mapping of the eight parameter names to values
    :type point: dict
    :param space: the tuning box, defaults to the random forest box
    :type space: ParamSpace, optional
    :raises OutOfBoundsError: if a value lies outside its bound or the criterion is unknown
    :return: vector of length ``space.dim``
    :rtype: array_like
    """
    u = np.zeros(space.dim)
    for i, b in enumerate(space.bounds):
        value = point[b.name]
        if not b.contains(value):
            raise OutOfBoundsError('{}={} outside [{}, {}]'.format(b.name, value, b.low, b.high))
        u[i] = (value - b.low) / (b.high - b.low)
    criterion = point['criterion']
    criterion = criterion.value if isinstance(criterion, Criterion) else criterion
    if criterion not in space.criteria:
        raise OutOfBoundsError('unknown criterion {!r}'.format(criterion))
    u[len(space.bounds) + space.criteria.index(criterion)] = 1.0
    return u


def decode(u, space=DEFAULT_SPACE):
    """
    Inverse of :func:`encode`. Coordinates are clipped to [0, 1], integers
    rounded half up and the criterion taken from the largest one-hot entry.
    """
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    point = {}
    for i, b in enumerate(space.bounds):
        value = b.low + u[i] * (b.high - b.low)
        if b.integer:
            point[b.name] = min(max(round_half_up(value), int(b.low)), int(b.high))
        else:
            point[b.name] = float(min(max(value, b.low), b.high))
    point['criterion'] = space.criteria[int(np.argmax(u[len(space.bounds):]))]
    return point


@dataclass
class Observation:
    point: dict
    objective: float
    fold_scores: list = field(default_factory=list)
    iteration: int = 0


# ---------------------------------------------------------------------------- #
#                             Gaussian process surrogate                       #
# ---------------------------------------------------------------------------- #


@dataclass
class GpState:
    """A fitted GP surrogate with the hyperparameters it settled on."""

    model: GaussianProcessRegressor
    length_scales: np.ndarray
    signal_variance: float
    noise_variance: float
    chol: np.ndarray
    noise_raised: bool = False


def _kernel(dim, signal_variance, length_scale, fixed):
    bounds = 'fixed' if fixed else (1e-3, 1e3)
    ls_bounds = 'fixed' if fixed else (1e-2, 1e2)
    return (ConstantKernel(signal_variance, bounds)
            * Matern(length_scale=np.full(dim, length_scale), length_scale_bounds=ls_bounds, nu=2.5))


def fit_gp(X, y, noise=DEFAULT_NOISE, n_restarts=5, seed=0, normalize_y=True,
           optimize=True, signal_variance=1.0, length_scale=1.0):
    """
    Fit the GP surrogate. Kernel hyperparameters maximise the log marginal
    likelihood (L-BFGS-B with ``n_restarts`` random restarts) unless
    ``optimize`` is False. If the Gram matrix is numerically singular the
    noise is raised tenfold until the Cholesky factorisation succeeds.

    :param X: encoded points of shape (n, dim)
    :type X: array_like
    :param y: objective values
    :type y: array_like
    :param noise: variance added to the Gram diagonal, defaults to 1e-6
    :type noise: float, optional
    :param n_restarts: optimiser restarts, defaults to 5
    :type n_restarts: int, optional
    :param seed: seed of the restarts, defaults to 0
    :type seed: int, optional
    :param normalize_y: standardise the targets, defaults to True
    :type normalize_y: bool, optional
    :param optimize: fit the kernel hyperparameters, defaults to True
    :type optimize: bool, optional
    :return: the fitted surrogate
    :rtype: GpState
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] < 1 or X.shape[0] != y.shape[0]:
        raise ValueError('need matching, non-empty X and y')
    raised = False
    while True:
        gp = GaussianProcessRegressor(
            kernel=_kernel(X.shape[1], signal_variance, length_scale, not optimize),
            alpha=noise,
            normalize_y=normalize_y,
            optimizer='fmin_l_bfgs_b' if optimize else None,
            n_restarts_optimizer=n_restarts if optimize else 0,
            random_state=seed,
        )
        try:
            gp.fit(X, y)
            break
        except np.linalg.LinAlgError as e:
            if noise * 10 > MAX_NOISE:
                raise NumericalFailure('GP Gram matrix is singular even with noise {:.1e}'.format(noise)) from e
            noise = noise * 10 if noise > 0 else DEFAULT_NOISE
            raised = True
            logger.warning('GP Gram matrix is singular, raising the noise floor to %.1e', noise)
    kernel = gp.kernel_
    return GpState(
        model=gp,
        length_scales=np.atleast_1d(kernel.k2.length_scale).copy(),
        signal_variance=float(kernel.k1.constant_value),
        noise_variance=noise,
        chol=gp.L_,
        noise_raised=raised,
    )


def gp_posterior(state, x):
    """
    Posterior mean and variance (floored at 0) at one or several points.

    :param state: fitted surrogate
    :type state: GpState
    :param x: encoded point, or matrix of points
    :type x: array_like
    :return: mean and variance, scalars for a single point
    :rtype: tuple
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    mean, std = state.model.predict(np.atleast_2d(x), return_std=True)
    var = np.maximum(std ** 2, 0.0)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def expected_improvement(mean, variance, best_so_far):
    """
    Expected improvement over ``best_so_far`` for maximisation. Where the
    variance is zero this is ``max(mean - best, 0)``.
    """
    mean = np.asarray(mean, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    gain = mean - best_so_far
    with np.errstate(divide='ignore', invalid='ignore'):
        z = np.where(sigma > 0, gain / sigma, 0.0)
        ei = np.where(sigma > 0, gain * norm.cdf(z) + sigma * norm.pdf(z), np.maximum(gain, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


# ---------------------------------------------------------------------------- #
#                                   Optimiser                                  #
# ---------------------------------------------------------------------------- #


def _evaluate(objective, point, iteration):
    try:
        result = objective(dict(point))
    except Exception as e:
        raise ObjectiveError(point, e) from e
    if np.ndim(result) == 0:
        scores = [float(result)]
    else:
        scores = [float(s) for s in result]
    if not scores or not all(math.isfinite(s) for s in scores):
        raise ObjectiveError(point, 'objective returned {!r}'.format(result))
    return Observation(point=dict(point), objective=float(np.mean(scores)), fold_scores=scores,
                       iteration=iteration)


def _propose(trace, space, rng, n_candidates, gp_seed):
    X = np.array([encode(o.point, space) for o in trace])
    y = np.array([o.objective for o in trace])
    state = fit_gp(X, y, seed=gp_seed)
    best = y.max()
    n_num = len(space.bounds)

    candidates = np.array([encode(space.sample(rng), space) for _ in range(n_candidates)])
    mean, var = gp_posterior(state, candidates)
    ei = expected_improvement(mean, var, best)
    order = np.argsort(-ei, kind='stable')

    refined = []
    for start in candidates[order[:N_REFINE]]:
        onehot = start[n_num:]

        def neg_ei(v):
            m, s = gp_posterior(state, np.concatenate([v, onehot]))
            return -expected_improvement(m, s, best)

        res = minimize(neg_ei, start[:n_num], method='L-BFGS-B', bounds=[(0.0, 1.0)] * n_num)
        refined.append((-float(res.fun), np.concatenate([np.clip(res.x, 0, 1), onehot])))

    ranked = sorted(refined, key=lambda r: -r[0]) + [(ei[i], candidates[i]) for i in order]
    seen = [o.point for o in trace]
    for _, u in ranked:
        point = decode(u, space)
        if point not in seen:
            return point
    return space.sample(rng)


def optimize(objective, space=DEFAULT_SPACE, n_init=5, n_iter=60, seed=0, trace=None,
             n_candidates=N_CANDIDATES, print_every=10, callback=None):
    """
    Maximise ``objective`` over the tuning box.

    The first ``n_init`` evaluations are uniform random points; each of the
    following ``n_iter`` rounds refits the GP on the whole trace and evaluates
    the point of largest expected improvement. A point already in the trace
    is never proposed again. Every iteration draws from its own RNG derived
    from ``seed``, so a resumed run continues exactly like an uninterrupted one.

    :param objective: callable taking a point dict and returning a score or a list of fold scores
    :type objective: callable
    :param space: the tuning box, defaults to the random forest box
    :type space: ParamSpace, optional
    :param n_init: random initial points, at least 2, defaults to 5
    :type n_init: int, optional
    :param n_iter: guided rounds, defaults to 60
    :type n_iter: int, optional
    :param seed: base seed, defaults to 0
    :type seed: int, optional
    :param trace: observations of an interrupted run to resume from, defaults to None
    :type trace: list, optional
    :param n_candidates: random candidates scored per round, defaults to 2048
    :type n_candidates: int, optional
    :param print_every: rounds between progress messages, defaults to 10
    :type print_every: int, optional
    :param callback: called with the trace after every evaluation, defaults to None
    :type callback: callable, optional
    :raises ObjectiveError: if the objective fails; ``point`` holds the failing parameters
    :return: the best observation and the full trace
    :rtype: tuple
    """
    if n_init < 2:
        raise ValueError('n_init must be >= 2')
    if n_iter < 0:
        raise ValueError('n_iter must be >= 0')
    trace = list(trace or [])
    total = n_init + n_iter
    if len(trace) > total:
        raise ValueError('resumed trace has {} observations, budget is {}'.format(len(trace), total))

    for it in range(len(trace), total):
        rng = np.random.RandomState(derive_seed(seed, it))
        if it < n_init:
            point = space.sample(rng)
        else:
            point = _propose(trace, space, rng, n_candidates, derive_seed(seed, it, 1))
        trace.append(_evaluate(objective, point, it))
        if callback is not None:
            callback(trace)
        if print_every and (it + 1) % print_every == 0:
            logger.info('tuning iteration %d/%d: best objective %.4f', it + 1, total,
                        max(o.objective for o in trace))

    best = max(trace, key=lambda o: o.objective)
    return best, trace


def save_trace(trace, path):
    """
    Write a tuning trace as CSV: iteration, the eight parameters,
    ``;``-separated fold scores and the mean objective.
    """
    names = DEFAULT_SPACE.names
    rows = []
    for o in trace:
        row = {'iteration': o.iteration}
        row.update({n: o.point[n] for n in names})
        row['fold_scores'] = ';'.join(repr(float(s)) for s in o.fold_scores)
        row['objective'] = o.objective
        rows.append(row)
    pd.DataFrame(rows, columns=['iteration'] + names + ['fold_scores', 'objective']).to_csv(
        path, index=False, float_format='%.17g')


def load_trace(path):
    """Read a trace written by :func:`save_trace`, ordered by iteration."""
    frame = pd.read_csv(path, dtype={'fold_scores': str, 'criterion': str}, keep_default_na=False,
                        float_precision='round_trip')
    trace = []
    for _, row in frame.sort_values('iteration').iterrows():
        point = {}
        for b in DEFAULT_SPACE.bounds:
            point[b.name] = int(row[b.name]) if b.integer else float(row[b.name])
        point['criterion'] = row['criterion']
        scores = [float(s) for s in str(row['fold_scores']).split(';') if s]
        trace.append(Observation(point, float(row['objective']), scores, int(row['iteration'])))
    return trace
