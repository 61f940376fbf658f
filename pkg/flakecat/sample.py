"""
Training-set rebalancing: SMOTE oversampling of every non-majority class up
to the majority count, followed by Tomek-link cleaning.

Only training folds pass through here; the harness never hands a test split
to these functions.
"""

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import LengthMismatchError, TooFewSamplesError
from .utils import as_matrix, check_random_state, nearest_neighbours

logger = logging.getLogger(__name__)

DEFAULT_SMOTE_K = 5


class Provenance(enum.IntEnum):
    ORIGINAL = 0
    SYNTHETIC = 1


@dataclass
class SampledSet:
    """
    A rebalanced training set. Original rows come first, in input order and
    bitwise equal to the input; synthetic rows are appended after them.

    ``parents`` holds the (parent, neighbour) input indices each synthetic
    row was interpolated from, and (-1, -1) for original rows. ``removed``
    lists the rows dropped by Tomek cleaning, numbered as in the set before
    cleaning (originals first, so original indices are input indices).
    """

    X: np.ndarray
    y: np.ndarray
    provenance: np.ndarray
    parents: np.ndarray = None
    removed: list = field(default_factory=list)

    def __post_init__(self):
        n = self.X.shape[0]
        if self.parents is None:
            self.parents = np.full((n, 2), -1, dtype=int)
        if not (len(self.y) == len(self.provenance) == self.parents.shape[0] == n):
            raise LengthMismatchError('sampled set arrays disagree in length')

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_synthetic(self):
        return int(np.sum(self.provenance == Provenance.SYNTHETIC))


def _check_xy(X, y):
    X = as_matrix(X)
    y = np.asarray(y)
    if X.shape[0] != y.shape[0]:
        raise LengthMismatchError('{} rows but {} labels'.format(X.shape[0], y.shape[0]))
    return X, y


def smote(X, y, k=DEFAULT_SMOTE_K, seed=0, gap=None):
    """
    Raise every class to the majority-class count with synthetic points
    ``x + u * (x_nn - x)``, where x is drawn uniformly from the class, x_nn
    uniformly from its k nearest same-class neighbours and u ~ U(0, 1).
    Classes are processed in ascending label order.

    :param X: training matrix of shape (n, d)
    :type X: array_like
    :param y: training labels
    :type y: array_like
    :param k: neighbours per parent, truncated to class size - 1, defaults to 5
    :type k: int, optional
    :param seed: seed of the sampling, defaults to 0
    :type seed: int or RandomState, optional
    :param gap: fixed interpolation factor used instead of u, defaults to None
    :type gap: float, optional
    :raises TooFewSamplesError: if a class to oversample has fewer than 2 samples
    :return: originals followed by the synthetic rows
    :rtype: SampledSet
    """
    X, y = _check_xy(X, y)
    if k < 1:
        raise ValueError('k must be >= 1')
    rng = check_random_state(seed)
    classes, counts = np.unique(y, return_counts=True)
    target = counts.max() if counts.size else 0

    new_X, new_y, new_parents = [], [], []
    for label, count in zip(classes, counts):
        n_new = target - count
        if n_new == 0:
            continue
        if count < 2:
            raise TooFewSamplesError(label, count)
        members = np.flatnonzero(y == label)
        k_eff = min(k, count - 1)
        neigh, _ = nearest_neighbours(X[members], k_eff)

        base = rng.randint(0, count, size=n_new)
        pick = rng.randint(0, k_eff, size=n_new)
        u = np.full(n_new, gap, dtype=float) if gap is not None else rng.uniform(0.0, 1.0, size=n_new)

        x_base = X[members[base]]
        nn_local = neigh[base, pick]
        x_nn = X[members[nn_local]]
        new_X.append(x_base + u[:, np.newaxis] * (x_nn - x_base))
        new_y.append(np.full(n_new, label, dtype=y.dtype))
        new_parents.append(np.column_stack([members[base], members[nn_local]]))
        logger.debug('SMOTE: %d synthetic rows for class %s (k=%d)', n_new, label, k_eff)

    n = X.shape[0]
    n_syn = sum(len(b) for b in new_y)
    return SampledSet(
        X=np.vstack([X] + new_X),
        y=np.concatenate([y] + new_y),
        provenance=np.concatenate([np.full(n, Provenance.ORIGINAL, dtype=int),
                                   np.full(n_syn, Provenance.SYNTHETIC, dtype=int)]),
        parents=np.vstack([np.full((n, 2), -1, dtype=int)] + new_parents),
    )


def tomek_links(X, y):
    """
    Rows to drop for Tomek cleaning. A Tomek link is a pair of mutual
    nearest neighbours with different labels; the member from the class with
    the larger count is removed, both members when the counts are equal.

    :param X: matrix of shape (n, d)
    :type X: array_like
    :param y: labels
    :type y: array_like
    :return: sorted indices of the removed rows
    :rtype: list
    """
    X, y = _check_xy(X, y)
    if X.shape[0] < 2:
        raise ValueError('Tomek links need at least 2 samples')
    if np.unique(y).size < 2:
        return []
    nn = nearest_neighbours(X, 1)[0][:, 0]
    labels, counts = np.unique(y, return_counts=True)
    count = dict(zip(labels.tolist(), counts.tolist()))

    removed = set()
    for i, j in enumerate(nn):
        if i < j and nn[j] == i and y[i] != y[j]:
            ci, cj = count[y[i].item()], count[y[j].item()]
            if ci >= cj:
                removed.add(i)
            if cj >= ci:
                removed.add(int(j))
    return sorted(removed)


def balance(X, y, k=DEFAULT_SMOTE_K, seed=0):
    """
    SMOTE followed by Tomek cleaning on the oversampled set.

    :param X: training matrix
    :type X: array_like
    :param y: training labels
    :type y: array_like
    :param k: SMOTE neighbours, defaults to 5
    :type k: int, optional
    :param seed: seed of the sampling, defaults to 0
    :type seed: int, optional
    :return: the balanced training set
    :rtype: SampledSet
    """
    X, y = _check_xy(X, y)
    if np.unique(y).size < 2:
        return SampledSet(X.copy(), y.copy(), np.full(len(y), Provenance.ORIGINAL, dtype=int))

    sampled = smote(X, y, k, seed)
    removed = tomek_links(sampled.X, sampled.y)
    keep = np.ones(len(sampled), dtype=bool)
    keep[removed] = False
    logger.debug('balance: %d synthetic rows, %d Tomek removals', sampled.n_synthetic, len(removed))
    return SampledSet(sampled.X[keep], sampled.y[keep], sampled.provenance[keep],
                      sampled.parents[keep], removed)


def save_synthetic(sampled, path):
    """
    Dump the synthetic rows of a sampled set as CSV
    ``row,label,parent,neighbour,x0..x{d-1}`` for inspection.

    :param sampled: the sampled set
    :type sampled: SampledSet
    :param path: output file
    :type path: str or Path
    """
    rows = np.flatnonzero(sampled.provenance == Provenance.SYNTHETIC)
    frame = pd.DataFrame(sampled.X[rows], columns=['x{}'.format(i) for i in range(sampled.X.shape[1])])
    frame.insert(0, 'neighbour', sampled.parents[rows, 1])
    frame.insert(0, 'parent', sampled.parents[rows, 0])
    frame.insert(0, 'label', sampled.y[rows])
    frame.insert(0, 'row', rows)
    frame.to_csv(path, index=False, float_format='%.17g')
