"""
Dimensionality reduction of embedding matrices.

PCA and LDA are parametric: they are fitted once and can project any matrix
with the same number of columns. Isomap and exact t-SNE embed the matrix they
are fitted on and have no out-of-sample extension.

All eigen-solves use LAPACK's symmetric drivers through ``scipy.linalg``.
Component signs are fixed so that the largest-magnitude entry of every
component is positive.
"""

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial.distance import pdist, squareform
from sklearn.neighbors import kneighbors_graph

from .errors import (
    DegenerateClassError, DimensionMismatchError, DisconnectedGraphError,
    NumericalFailure, PerplexityOutOfRangeError,
)
from .utils import as_matrix, check_random_state, fix_signs

logger = logging.getLogger(__name__)

EIG_TOL = 1e-10
ZERO_EDGE = 1e-12
DEFAULT_SHRINKAGE = 1e-4
DEFAULT_K_NEIGHBORS = 10
DEFAULT_PERPLEXITY = 30.0
DEFAULT_TSNE_ITERS = 1000
EXAGGERATION = 12.0
EXAGGERATION_ITERS = 250


class ReducerKind(enum.Enum):
    PCA = 'pca'
    LDA = 'lda'
    ISOMAP = 'isomap'
    TSNE = 'tsne'


@dataclass
class ReducedMatrix:
    """Rows of a reduced embedding, aligned with the rows of the input."""

    values: np.ndarray
    row_ids: list
    reducer_tag: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] < 1:
            raise ValueError('reduced values must have at least one column')
        if not np.all(np.isfinite(self.values)):
            raise NumericalFailure('{} produced non-finite coordinates'.format(self.reducer_tag))
        self.row_ids = list(self.row_ids)

    @property
    def shape(self):
        return self.values.shape


@dataclass
class Projection:
    """
    A fitted linear projection ``(X - mean) @ basis``.

    :param mean: centring vector of length d
    :param basis: d x r matrix whose columns are the components
    :param kind: PCA or LDA
    :param eigenvalues: eigenvalue of each component, in descending order
    :param total_variance: trace of the covariance (PCA only)
    :param rank_deficient: fewer informative components than requested
    :param uninformative: LDA between-class scatter vanishes
    """

    mean: np.ndarray
    basis: np.ndarray
    kind: ReducerKind
    eigenvalues: np.ndarray
    total_variance: float = float('nan')
    rank_deficient: bool = False
    uninformative: bool = False

    @property
    def n_components(self):
        return self.basis.shape[1]

    @property
    def explained_variance_ratio(self):
        if self.kind is not ReducerKind.PCA:
            raise AttributeError('explained variance is defined for PCA only')
        if self.total_variance <= 0:
            return np.zeros_like(self.eigenvalues)
        return self.eigenvalues / self.total_variance

    @property
    def tag(self):
        return '{}(r={})'.format(self.kind.value, self.n_components)

    def transform(self, X):
        return transform(self, X)

    def inverse_transform(self, Z):
        """Map reduced coordinates back to the input space (exact for PCA at full rank)."""
        return as_matrix(Z) @ self.basis.T + self.mean


def _row_ids(X, n):
    ids = getattr(X, 'row_ids', None)
    return list(ids) if ids is not None else [str(i) for i in range(n)]


def _top_eigh(S, r):
    """Eigenpairs of a symmetric matrix, descending, ties kept in solver order."""
    w, V = linalg.eigh(S)
    order = np.argsort(-w, kind='stable')[:r]
    return w[order], V[:, order]


def fit_pca(X, r):
    """
    Principal components of X: the top-r eigenvectors of the sample covariance.

    When d > n the eigenvectors are recovered from the n x n Gram matrix of the
    centred data, which has the same non-zero spectrum.

    :param X: data matrix of shape (n, d)
    :type X: EmbeddingMatrix or array_like
    :param r: number of components, 1 <= r <= min(n - 1, d)
    :type r: int
    :return: the projection; ``rank_deficient`` is set (and only the positive
        components kept) when fewer than r eigenvalues are positive
    :rtype: Projection
    """
    X = as_matrix(X)
    n, d = X.shape
    if not 1 <= r <= min(n - 1, d):
        raise ValueError('r={} must lie in [1, {}]'.format(r, min(n - 1, d)))
    mean = X.mean(axis=0)
    Xc = X - mean
    total = float(np.sum(Xc * Xc) / (n - 1))

    if d <= n:
        w, V = _top_eigh(Xc.T @ Xc / (n - 1), r)
    else:
        w, U = _top_eigh(Xc @ Xc.T / (n - 1), r)
        w = np.maximum(w, 0.0)
        with np.errstate(divide='ignore', invalid='ignore'):
            V = Xc.T @ U / np.sqrt(w * (n - 1))
        V[:, w <= 0] = 0.0

    positive = w > EIG_TOL * max(total, 1.0)
    rank_deficient = not positive.all()
    if rank_deficient:
        logger.warning('PCA: only %d of %d requested components have positive variance', positive.sum(), r)
        w, V = w[positive], V[:, positive]
        if w.size == 0:
            raise NumericalFailure('PCA: the data has zero variance')
    V = fix_signs(np.array(V))
    return Projection(mean, V, ReducerKind.PCA, w, total_variance=total, rank_deficient=rank_deficient)


def fit_lda(X, y, r=None, shrinkage=DEFAULT_SHRINKAGE):
    """
    Linear discriminant axes: the top-r generalised eigenvectors of
    ``S_b v = lambda (S_w + shrinkage * tr(S_w) / d * I) v``.

    S_b has rank at most C - 1, so the problem is solved in the span of the
    class-mean offsets: with ``L L^T`` the Cholesky factor of the regularised
    S_w and ``S_b = B B^T``, the left singular vectors of ``L^-1 B`` give the
    eigenvectors after back-substitution. Components are scaled so that
    ``v^T S_w v = 1``.

    :param X: data matrix of shape (n, d)
    :type X: EmbeddingMatrix or array_like
    :param y: class label per row
    :type y: array_like
    :param r: number of components, defaults to C - 1 (larger values are capped)
    :type r: int, optional
    :param shrinkage: ridge weight on the trace-scaled identity, defaults to 1e-4
    :type shrinkage: float, optional
    :raises DegenerateClassError: if a class has fewer than 2 samples
    :return: the projection; ``uninformative`` is set when the class means coincide
    :rtype: Projection
    """
    X = as_matrix(X)
    y = np.asarray(y)
    n, d = X.shape
    if y.shape[0] != n:
        raise ValueError('{} labels for {} rows'.format(y.shape[0], n))
    classes, counts = np.unique(y, return_counts=True)
    for c, cnt in zip(classes, counts):
        if cnt < 2:
            raise DegenerateClassError(c, cnt)
    if classes.size < 2:
        raise ValueError('LDA needs at least two classes')
    max_r = min(classes.size - 1, d)
    if r is None:
        r = max_r
    if r < 1:
        raise ValueError('r must be >= 1')
    if r > max_r:
        logger.warning('LDA: r=%d capped at %d (rank of the between-class scatter)', r, max_r)
        r = max_r

    mean = X.mean(axis=0)
    Xw = np.empty_like(X)
    B = np.empty((d, classes.size))
    for j, c in enumerate(classes):
        mask = y == c
        mu = X[mask].mean(axis=0)
        Xw[mask] = X[mask] - mu
        B[:, j] = np.sqrt(mask.sum()) * (mu - mean)
    Sw = Xw.T @ Xw
    scale = np.trace(Sw) / d
    Sw[np.diag_indices(d)] += shrinkage * (scale if scale > 0 else 1.0)

    try:
        L = linalg.cholesky(Sw, lower=True)
    except linalg.LinAlgError as e:
        raise NumericalFailure('LDA: regularised within-class scatter is not positive definite') from e
    M = linalg.solve_triangular(L, B, lower=True)
    U, s, _ = linalg.svd(M, full_matrices=False)
    eigvals = s[:r] ** 2
    V = linalg.solve_triangular(L.T, U[:, :r], lower=False)

    uninformative = bool(eigvals.size == 0 or eigvals[0] <= EIG_TOL)
    if uninformative:
        logger.warning('LDA: class means coincide, the projection carries no class information')
    V = fix_signs(V)
    return Projection(mean, V, ReducerKind.LDA, eigvals, uninformative=uninformative)


def transform(p, X):
    """
    Project X with a fitted PCA/LDA projection.

    :param p: fitted projection
    :type p: Projection
    :param X: matrix with the same number of columns as the fitting data
    :type X: EmbeddingMatrix or array_like
    :raises DimensionMismatchError: on a column count mismatch
    :return: reduced rows in input order
    :rtype: ReducedMatrix
    """
    values = as_matrix(X)
    if values.shape[1] != p.mean.shape[0]:
        raise DimensionMismatchError(p.mean.shape[0], values.shape[1])
    return ReducedMatrix((values - p.mean) @ p.basis, _row_ids(X, values.shape[0]), p.tag,
                         {'eigenvalues': p.eigenvalues.tolist()})


def _classical_mds(D, r):
    n = D.shape[0]
    J = np.eye(n) - 1.0 / n
    Bm = -0.5 * J @ (D ** 2) @ J
    w, V = _top_eigh((Bm + Bm.T) / 2, r)
    w = np.maximum(w, 0.0)
    V = fix_signs(np.array(V))
    return V * np.sqrt(w), w


def fit_isomap(X, k_neighbors=DEFAULT_K_NEIGHBORS, r=2):
    """
    Isomap: classical MDS on graph-geodesic distances of the symmetrised
    k-nearest-neighbour graph (Euclidean edge weights).

    :param X: data matrix of shape (n, d)
    :type X: EmbeddingMatrix or array_like
    :param k_neighbors: neighbours per point, defaults to 10
    :type k_neighbors: int, optional
    :param r: output dimensionality, defaults to 2
    :type r: int, optional
    :raises DisconnectedGraphError: if the neighbour graph is not connected
    :return: embedded rows
    :rtype: ReducedMatrix
    """
    values = as_matrix(X)
    n = values.shape[0]
    if k_neighbors < 1 or k_neighbors >= n:
        raise ValueError('k_neighbors={} must lie in [1, {}]'.format(k_neighbors, n - 1))
    if not 1 <= r < n:
        raise ValueError('r={} must lie in [1, {}]'.format(r, n - 1))
    G = kneighbors_graph(values, k_neighbors, mode='distance', include_self=False)
    # duplicate rows are neighbours at distance 0; keep them as edges
    G.data = np.maximum(G.data, ZERO_EDGE)
    G = G.maximum(G.T)
    n_components, _ = connected_components(G, directed=False)
    if n_components > 1:
        raise DisconnectedGraphError(n_components)
    D = shortest_path(G, method='D', directed=False)
    coords, w = _classical_mds(D, r)
    tag = 'isomap(k={},r={})'.format(k_neighbors, r)
    return ReducedMatrix(coords, _row_ids(X, n), tag, {'eigenvalues': w.tolist()})


# ---------------------------------------------------------------------------- #
#                                  Exact t-SNE                                 #
# ---------------------------------------------------------------------------- #


def conditional_probabilities(X, perplexity=DEFAULT_PERPLEXITY, tol=1e-5, max_steps=200):
    """
    Row-conditional neighbour distributions P(j|i) whose entropies equal
    ``log2(perplexity)`` bits. The precision of each Gaussian is found by
    bisection (doubling/halving until the target is bracketed).

    :param X: data matrix of shape (n, d)
    :type X: array_like
    :param perplexity: effective number of neighbours
    :type perplexity: float
    :param tol: tolerance on the entropy in bits, defaults to 1e-5
    :type tol: float, optional
    :param max_steps: bisection steps per row, defaults to 200
    :type max_steps: int, optional
    :return: n x n row-stochastic matrix with zero diagonal, and the precisions
    :rtype: tuple
    """
    D = squareform(pdist(as_matrix(X), 'sqeuclidean'))
    n = D.shape[0]
    target = np.log2(perplexity)
    P = np.zeros((n, n))
    betas = np.ones(n)
    for i in range(n):
        d = np.delete(D[i], i)
        d = d - d.min()
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(max_steps):
            p = np.exp(-d * beta)
            sum_p = p.sum()
            h = (np.log(sum_p) + beta * np.dot(d, p) / sum_p) / np.log(2)
            diff = h - target
            if abs(diff) <= tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
        else:
            logger.debug('perplexity search for row %d stopped at %.2e bits off', i, diff)
        betas[i] = beta
        P[i, np.arange(n) != i] = p / sum_p
    return P, betas


def _student_affinities(Y):
    num = 1.0 / (1.0 + squareform(pdist(Y, 'sqeuclidean')))
    np.fill_diagonal(num, 0.0)
    return num, max(num.sum(), np.finfo(float).tiny)


def _kl(P, num, total):
    Q = np.maximum(num / total, 1e-12)
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


def fit_tsne(X, perplexity=DEFAULT_PERPLEXITY, iters=DEFAULT_TSNE_ITERS, seed=0,
             learning_rate=200.0, print_every=100):
    """
    Exact t-SNE to two dimensions.

    Gradient descent with momentum 0.5 during the first 250 iterations (with
    P exaggerated 12 times) and 0.8 afterwards, plus per-coordinate adaptive
    gains. After exaggeration a step that would increase the KL divergence is
    retried with momentum reset and a halved step, so the divergence is
    non-increasing over the late phase.

    :param X: data matrix of shape (n, d)
    :type X: EmbeddingMatrix or array_like
    :param perplexity: 1 < perplexity < n / 3, defaults to 30
    :type perplexity: float, optional
    :param iters: total iterations, >= 250, defaults to 1000
    :type iters: int, optional
    :param seed: seed of the initial layout, defaults to 0
    :type seed: int, optional
    :param learning_rate: step size, defaults to 200
    :type learning_rate: float, optional
    :param print_every: iterations between progress messages, defaults to 100
    :type print_every: int, optional
    :raises PerplexityOutOfRangeError: if the perplexity does not fit the sample size
    :return: n x 2 embedding; ``diagnostics['kl']`` holds the late-phase KL per iteration
    :rtype: ReducedMatrix
    """
    values = as_matrix(X)
    n = values.shape[0]
    if not 1.0 < perplexity < n / 3.0:
        raise PerplexityOutOfRangeError('perplexity {} must lie in (1, {:.2f})'.format(perplexity, n / 3.0))
    if iters < EXAGGERATION_ITERS:
        raise ValueError('iters must be >= {}'.format(EXAGGERATION_ITERS))

    P_cond, _ = conditional_probabilities(values, perplexity)
    P = np.maximum((P_cond + P_cond.T) / (2.0 * n), 1e-12)
    np.fill_diagonal(P, 0.0)

    rng = check_random_state(seed)
    Y = rng.normal(0.0, 1e-4, size=(n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    kl_history = []

    num, total = _student_affinities(Y)
    for it in range(iters):
        early = it < EXAGGERATION_ITERS
        P_eff = P * EXAGGERATION if early else P
        momentum = 0.5 if early else 0.8

        W = (P_eff - num / total) * num
        grad = 4.0 * (np.diag(W.sum(axis=1)) - W) @ Y

        gains = np.where(np.sign(grad) != np.sign(update), gains + 0.2, gains * 0.8)
        np.maximum(gains, 0.01, out=gains)
        step = momentum * update - learning_rate * gains * grad
        Y_new = Y + step
        num_new, total_new = _student_affinities(Y_new)

        if not early:
            kl = kl_history[-1] if kl_history else _kl(P, num, total)
            kl_new = _kl(P, num_new, total_new)
            halvings = 0
            while kl_new > kl and halvings < 30:
                gains[:] = 1.0
                step = -learning_rate * grad / 2.0 ** (halvings + 1)
                Y_new = Y + step
                num_new, total_new = _student_affinities(Y_new)
                kl_new = _kl(P, num_new, total_new)
                halvings += 1
            if kl_new > kl:
                step = np.zeros_like(Y)
                Y_new, num_new, total_new, kl_new = Y, num, total, kl
            kl_history.append(kl_new)
            if print_every and (it + 1) % print_every == 0:
                logger.debug('t-SNE iter %d: KL = %.6f', it + 1, kl_new)

        update = step
        Y = Y_new - Y_new.mean(axis=0)
        num, total = num_new, total_new

    tag = 'tsne(perplexity={},iters={},seed={})'.format(perplexity, iters, seed)
    return ReducedMatrix(Y, _row_ids(X, n), tag, {'kl': kl_history})


# ---------------------------------------------------------------------------- #
#                                   Dispatcher                                 #
# ---------------------------------------------------------------------------- #


def fit_reducer(method, X, y=None, r=2, params=None, seed=0):
    """
    Fit a reducer by name. Parametric reducers return their Projection;
    Isomap and t-SNE return the embedded ReducedMatrix.

    :param method: 'pca', 'lda', 'isomap' or 'tsne'
    :type method: str or ReducerKind
    :param X: data matrix
    :type X: EmbeddingMatrix or array_like
    :param y: labels (LDA only), defaults to None
    :type y: array_like, optional
    :param r: output dimensionality, defaults to 2 (t-SNE is always 2)
    :type r: int, optional
    :param params: extra keyword arguments (shrinkage, k_neighbors, perplexity, iters)
    :type params: dict, optional
    :param seed: seed for t-SNE, defaults to 0
    :type seed: int, optional
    :return: fitted projection or embedded matrix
    :rtype: Projection or ReducedMatrix
    """
    kind = ReducerKind(method.value if isinstance(method, ReducerKind) else str(method).lower())
    params = dict(params or {})
    if kind is ReducerKind.PCA:
        return fit_pca(X, r)
    if kind is ReducerKind.LDA:
        if y is None:
            raise ValueError('LDA requires labels')
        return fit_lda(X, y, r, shrinkage=params.get('shrinkage', DEFAULT_SHRINKAGE))
    if kind is ReducerKind.ISOMAP:
        return fit_isomap(X, params.get('k_neighbors', DEFAULT_K_NEIGHBORS), r)
    if r != 2:
        raise ValueError('t-SNE embeds into exactly 2 dimensions')
    return fit_tsne(X, params.get('perplexity', DEFAULT_PERPLEXITY),
                    params.get('iters', DEFAULT_TSNE_ITERS), seed)


def reduce_matrix(method, X, y=None, r=2, params=None, seed=0):
    """Fit a reducer on X and return the reduced rows of X."""
    fitted = fit_reducer(method, X, y, r, params, seed)
    if isinstance(fitted, Projection):
        return transform(fitted, X)
    return fitted
