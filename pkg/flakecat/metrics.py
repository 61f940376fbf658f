"""
Scores of a categorisation run: confusion matrices, per-class and macro F1,
the flakiness detection capacity (FDC), and the consistency and
discriminancy indices used to compare FDC with F1 as evaluation measures.

FDC is the mutual information between actual and predicted category divided
by the entropy of the actual category, so it measures how much of the
uncertainty about a test's category the classifier removes.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import entropy
from sklearn.metrics import confusion_matrix

from .corpus import N_CATEGORIES, CategoryLabel
from .errors import (
    EmptyInputError, LengthMismatchError, NoOrderedPairsError,
    ZeroInputEntropyError,
)

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 0.005
CLAMP_TOL = 1e-12


def category_name(code):
    code = int(code)
    return CategoryLabel(code).display_name if 0 <= code < N_CATEGORIES else str(code)


def category_code(name):
    """Inverse of :func:`category_name`."""
    try:
        return int(CategoryLabel.parse(name))
    except KeyError:
        return int(name)


@dataclass
class ConfusionMatrix:
    """Counts with rows = actual category and columns = predicted category."""

    counts: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.labels = np.asarray(self.labels)
        c = self.labels.size
        if self.counts.shape != (c, c):
            raise ValueError('counts must be {0}x{0}, got {1}'.format(c, self.counts.shape))
        if (self.counts < 0).any():
            raise ValueError('counts must be non-negative')

    @property
    def n(self):
        return int(self.counts.sum())

    @property
    def support(self):
        return self.counts.sum(axis=1)

    @property
    def predicted_totals(self):
        return self.counts.sum(axis=0)


@dataclass
class MetricReport:
    """Scores of one evaluation (one fold, or an aggregate of folds)."""

    per_class_f1: dict
    macro_f1: float
    fdc: float
    support: dict
    confusion: ConfusionMatrix = None
    extra: dict = field(default_factory=dict)

    @property
    def pair(self):
        return MetricPair(fdc=self.fdc, f1=self.macro_f1)

    def to_dict(self):
        """JSON layout: per-class F1 and support keyed by category name."""
        d = {
            'per_class_f1': {category_name(c): float(v) for c, v in self.per_class_f1.items()},
            'macro_f1': float(self.macro_f1),
            'fdc': float(self.fdc),
            'support': {category_name(c): int(v) for c, v in self.support.items()},
        }
        if self.confusion is not None:
            d['confusion'] = {
                'labels': [category_name(c) for c in self.confusion.labels],
                'counts': self.confusion.counts.tolist(),
            }
        return d

    @classmethod
    def from_dict(cls, d):
        """Rebuild a report from its JSON layout; unknown keys are ignored."""
        confusion = None
        if 'confusion' in d:
            confusion = ConfusionMatrix(d['confusion']['counts'],
                                        [category_code(c) for c in d['confusion']['labels']])
        return cls(
            per_class_f1={category_code(c): float(v) for c, v in d['per_class_f1'].items()},
            macro_f1=float(d['macro_f1']),
            fdc=float(d['fdc']),
            support={category_code(c): int(v) for c, v in d.get('support', {}).items()},
            confusion=confusion,
        )


@dataclass(frozen=True)
class MetricPair:
    """One evaluation outcome measured twice: by FDC and by macro F1."""

    fdc: float
    f1: float

    def __post_init__(self):
        if not (math.isfinite(self.fdc) and math.isfinite(self.f1)):
            raise ValueError('metric values must be finite')


@dataclass(frozen=True)
class PairCounts:
    """Sizes of the pair sets behind the consistency and discriminancy indices."""

    agree: int
    disagree: int
    f_only: int
    g_only: int


# ---------------------------------------------------------------------------- #
#                               Confusion and F1                               #
# ---------------------------------------------------------------------------- #


def confusion(actual, predicted, labels=None):
    """
    Build the confusion matrix of a prediction.

    :param actual: actual class codes
    :type actual: array_like
    :param predicted: predicted class codes
    :type predicted: array_like
    :param labels: class order of rows and columns, defaults to the sorted
        union of both label sets
    :type labels: array_like, optional
    :raises LengthMismatchError: if the sequences differ in length
    :raises EmptyInputError: if they are empty
    :return: the confusion matrix
    :rtype: ConfusionMatrix
    """
    actual = np.asarray(actual)
    predicted = np.asarray(predicted)
    if actual.shape != predicted.shape:
        raise LengthMismatchError('{} actual vs {} predicted labels'.format(actual.size, predicted.size))
    if actual.size == 0:
        raise EmptyInputError('cannot score an empty prediction')
    if labels is None:
        labels = np.union1d(actual, predicted)
    labels = np.asarray(labels)
    return ConfusionMatrix(confusion_matrix(actual, predicted, labels=labels), labels)


def macro_f1(cm):
    """
    Per-class F1 ``2TP / (2TP + FP + FN)`` and their unweighted mean over the
    classes that occur among the actual or predicted labels. A class that
    never occurs has F1 = 0 and is left out of the mean.

    :param cm: confusion matrix
    :type cm: ConfusionMatrix
    :return: per-class F1 (aligned with ``cm.labels``) and the macro mean
    :rtype: tuple
    """
    tp = np.diag(cm.counts).astype(float)
    fp = cm.predicted_totals - tp
    fn = cm.support - tp
    denom = 2 * tp + fp + fn
    per_class = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    present = (cm.support + cm.predicted_totals) > 0
    macro = float(per_class[present].mean()) if present.any() else 0.0
    return per_class, macro


def fdc(cm, base=2):
    """
    Flakiness detection capacity ``I(c_in; c_out) / H(c_in)``, summed directly
    over the joint cells (``0 log 0 = 0``) and clamped to [0, 1].

    :param cm: confusion matrix
    :type cm: ConfusionMatrix
    :param base: logarithm base, cancels in the ratio, defaults to 2
    :type base: float, optional
    :raises ZeroInputEntropyError: if all actual labels are the same class
    :return: the FDC
    :rtype: float
    """
    n = cm.n
    if n == 0:
        raise EmptyInputError('empty confusion matrix')
    joint = cm.counts / n
    p_in = joint.sum(axis=1)
    p_out = joint.sum(axis=0)
    h_in = entropy(p_in, base=base)
    if h_in <= 0:
        raise ZeroInputEntropyError('all actual labels belong to one category')

    rows, cols = np.nonzero(joint)
    p = joint[rows, cols]
    mi = np.sum(p * np.log(p / (p_in[rows] * p_out[cols]))) / np.log(base)
    ratio = mi / h_in
    if ratio < -CLAMP_TOL or ratio > 1 + CLAMP_TOL:
        logger.warning('FDC %.3e outside [0, 1] beyond rounding', ratio)
    return float(min(max(ratio, 0.0), 1.0))


def evaluate(actual, predicted, labels=None):
    """
    Score a prediction.

    :param actual: actual class codes
    :type actual: array_like
    :param predicted: predicted class codes
    :type predicted: array_like
    :param labels: classes to report, defaults to the union of both label sets
    :type labels: array_like, optional
    :return: confusion matrix, F1 scores and FDC
    :rtype: MetricReport
    """
    cm = confusion(actual, predicted, labels)
    per_class, macro = macro_f1(cm)
    codes = cm.labels.tolist()
    return MetricReport(
        per_class_f1=dict(zip(codes, per_class.tolist())),
        macro_f1=macro,
        fdc=fdc(cm),
        support=dict(zip(codes, cm.support.tolist())),
        confusion=cm,
    )


# ---------------------------------------------------------------------------- #
#                       Consistency and discriminancy                          #
# ---------------------------------------------------------------------------- #


def split_pairs(outcomes):
    """FDC and F1 values of a list of MetricPair, as two arrays."""
    return (np.array([o.fdc for o in outcomes], dtype=float),
            np.array([o.f1 for o in outcomes], dtype=float))


def pair_counts(f, g, epsilon=DEFAULT_EPSILON):
    """
    Classify every unordered pair of outcomes. Two values differ when they
    are more than ``epsilon`` apart.

    :param f: first measure, one value per outcome
    :type f: array_like
    :param g: second measure, one value per outcome
    :type g: array_like
    :param epsilon: tie tolerance, defaults to 0.005
    :type epsilon: float, optional
    :return: pairs ordered alike by f and g, ordered oppositely, separated by
        f only, and separated by g only
    :rtype: PairCounts
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise LengthMismatchError('{} f values vs {} g values'.format(f.size, g.size))
    if f.size < 2:
        raise ValueError('at least 2 outcomes are required')
    if epsilon < 0:
        raise ValueError('epsilon must be >= 0')
    i, j = np.triu_indices(f.size, k=1)
    df = f[i] - f[j]
    dg = g[i] - g[j]
    f_differs = np.abs(df) > epsilon
    g_differs = np.abs(dg) > epsilon
    both = f_differs & g_differs
    same_sign = np.sign(df) == np.sign(dg)
    return PairCounts(
        agree=int(np.sum(both & same_sign)),
        disagree=int(np.sum(both & ~same_sign)),
        f_only=int(np.sum(f_differs & ~g_differs)),
        g_only=int(np.sum(g_differs & ~f_differs)),
    )


def consistency_index(f, g, epsilon=DEFAULT_EPSILON):
    """
    Share of the pairs ordered by both measures that they order the same
    way: ``R / (R + S)``. Pairs tied under either measure are ignored.

    :raises NoOrderedPairsError: if no pair is ordered by both measures
    """
    c = pair_counts(f, g, epsilon)
    total = c.agree + c.disagree
    if total == 0:
        raise NoOrderedPairsError('no pair of outcomes is ordered by both measures')
    return c.agree / total


def discriminancy_index(f, g, epsilon=DEFAULT_EPSILON):
    """
    How much more often f separates outcomes that g ties than the other way
    round: ``P / Q``. When g never separates an f-tie the index is infinite
    and ``math.inf`` is returned; when neither measure separates a tie of
    the other the ratio is undefined and ``math.nan`` is returned. Both log
    a warning.
    """
    c = pair_counts(f, g, epsilon)
    if c.g_only == 0 and c.f_only == 0:
        logger.warning('discriminancy undefined: neither measure separates a tie of the other')
        return math.nan
    if c.g_only == 0:
        logger.warning('discriminancy undefined: no pair is separated by g alone (P=%d)', c.f_only)
        return math.inf
    return c.f_only / c.g_only
