"""
Shared helpers: nearest-neighbour search, sign conventions, logging setup,
model persistence, table printing and plotting.
"""

import logging
import pickle

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.utils import check_random_state  # noqa: F401  (re-exported)
from prettytable import PrettyTable
import seaborn as sns
import matplotlib.pyplot as plt

from . import __version__

LOG_FORMAT = '%(asctime)s:%(levelname)s:%(name)s:%(message)s'
MODEL_FORMAT_VERSION = 1
COLORS = sns.color_palette('colorblind', n_colors=10)

logger = logging.getLogger(__name__)

# ---------------------------------------------------------------------------- #
#                               Numerical utils                                #
# ---------------------------------------------------------------------------- #


def as_matrix(X):
    """
    Return the values of an EmbeddingMatrix / ReducedMatrix or any array-like as a 2D float array.

    :param X: input matrix
    :type X: array_like or object with a ``values`` attribute
    :return: array of shape (n_samples, n_features)
    :rtype: array_like
    """
    values = getattr(X, 'values', X)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, np.newaxis]
    if values.ndim != 2:
        raise ValueError('expected a 2D matrix, got shape {}'.format(values.shape))
    return values


def nearest_neighbours(X, k, query=None, chunk_size=1024):
    """
    Exact Euclidean k-nearest neighbours. Ties in distance are broken by the
    lower index of the reference point. When ``query`` is None the neighbours
    of every row of X among the other rows are returned (a point is never its
    own neighbour).

    :param X: reference points of shape (n, d)
    :type X: array_like
    :param k: number of neighbours to return
    :type k: int
    :param query: query points of shape (m, d), defaults to None
    :type query: array_like, optional
    :param chunk_size: number of query rows processed per distance block
    :type chunk_size: int, optional
    :return: neighbour indices of shape (m, k) and the matching distances
    :rtype: tuple
    """
    X = np.asarray(X, dtype=float)
    self_query = query is None
    Q = X if self_query else np.asarray(query, dtype=float)
    n_ref = X.shape[0] - (1 if self_query else 0)
    if k < 1 or k > n_ref:
        raise ValueError('k={} must lie in [1, {}]'.format(k, n_ref))

    indices = np.empty((Q.shape[0], k), dtype=int)
    distances = np.empty((Q.shape[0], k))
    for start in range(0, Q.shape[0], chunk_size):
        stop = min(start + chunk_size, Q.shape[0])
        d = cdist(Q[start:stop], X, 'sqeuclidean')
        if self_query:
            d[np.arange(stop - start), np.arange(start, stop)] = np.inf
        order = np.argsort(d, axis=1, kind='stable')[:, :k]
        indices[start:stop] = order
        distances[start:stop] = np.sqrt(np.take_along_axis(d, order, axis=1))
    return indices, distances


def fix_signs(basis):
    """
    Flip the columns of ``basis`` so that the entry with the largest magnitude
    in each column is positive. Modifies the input **inplace**.

    :param basis: matrix whose columns are components
    :type basis: array_like
    :return: the same matrix
    :rtype: array_like
    """
    if basis.size == 0:
        return basis
    rows = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[rows, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    basis *= signs
    return basis


def round_half_up(x):
    """Round to the nearest integer, halves away from minus infinity."""
    return int(np.floor(x + 0.5))


def derive_seed(seed, *offsets):
    """Derive a child seed from a base seed and a tuple of integer offsets."""
    ss = np.random.SeedSequence([int(seed)] + [int(o) for o in offsets])
    return int(ss.generate_state(1)[0])


# ---------------------------------------------------------------------------- #
#                                 Logging utils                                #
# ---------------------------------------------------------------------------- #


def configure_logging(verbose=False):
    """
    Attach a stream handler to the package logger. Only the command line
    interface calls this; library code leaves handlers to the application.

    :param verbose: emit DEBUG messages if True, INFO otherwise
    :type verbose: bool, optional
    """
    pkg_logger = logging.getLogger('flakecat')
    pkg_logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    if not any(getattr(h, '_flakecat', False) for h in pkg_logger.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._flakecat = True
        pkg_logger.addHandler(handler)
    return pkg_logger


# ---------------------------------------------------------------------------- #
#                                   IO utils                                   #
# ---------------------------------------------------------------------------- #


def save_model(model, filename):
    """
    Save a trained classifier to a versioned pickle blob.

    :param model: the trained classifier
    :type model: object
    :param filename: full path or just file name where to save the model
    :type filename: str
    """
    blob = {
        'format_version': MODEL_FORMAT_VERSION,
        'flakecat_version': __version__,
        'kind': type(model).__name__,
        'model': model,
    }
    with open(filename, 'wb') as f:
        pickle.dump(blob, f)


def load_model(filename):
    """
    Load a classifier saved with :func:`save_model`.

    :param filename: path of the blob
    :type filename: str
    :raises ValueError: if the blob has an unsupported format version
    :return: the trained classifier
    :rtype: object
    """
    with open(filename, 'rb') as f:
        blob = pickle.load(f)
    if not isinstance(blob, dict) or blob.get('format_version') != MODEL_FORMAT_VERSION:
        raise ValueError('unsupported model blob in {}'.format(filename))
    return blob['model']


def print_table(rows, header, title=None):
    """
    Print rows as a table.

    :param rows: list of rows, each a list of cells
    :type rows: list
    :param header: column names
    :type header: list
    :param title: optional caption printed above the table
    :type title: str, optional
    """
    t = PrettyTable(header)
    for row in rows:
        t.add_row(row)
    if title is not None:
        print(title)
    print(t)


def frame_to_rows(frame, fmt='{:.2f}'):
    """Helper for print_table: turns a DataFrame into header and formatted rows."""
    header = [frame.index.name or ''] + [str(c) for c in frame.columns]
    rows = []
    for idx, row in frame.iterrows():
        rows.append([str(idx)] + [fmt.format(v) if isinstance(v, float) else str(v) for v in row])
    return header, rows


# ---------------------------------------------------------------------------- #
#                             Visualisation utils                              #
# ---------------------------------------------------------------------------- #


def plot_projection(values, labels, title=None, filename=None):
    """
    Scatter plot of a two-dimensional projection coloured by category.

    :param values: array of shape (n_samples, 2)
    :type values: array_like
    :param labels: category name per row
    :type labels: list
    :param title: plot title, defaults to None
    :type title: str, optional
    :param filename: full path to where to save the figure, defaults to None
    :type filename: str, optional
    """
    values = np.asarray(values, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 6))
    sns.scatterplot(x=values[:, 0], y=values[:, 1], hue=list(labels),
                    palette=COLORS[:len(set(labels))], s=12, linewidth=0, ax=ax)
    ax.set_xlabel('c0')
    ax.set_ylabel('c1')
    if title is not None:
        ax.set_title(title)
    ax.legend(loc='center left', bbox_to_anchor=(1, 0.5), frameon=True)
    fig.tight_layout()

    if filename is not None:
        fig.savefig(filename)
        plt.close(fig)
    else:
        plt.show()


def plot_sweep(table, ylabel='macro F1', filename=None):
    """
    Plot one curve per column of a sweep table indexed by the swept parameter.

    :param table: DataFrame with the swept values as index
    :type table: pandas.DataFrame
    :param ylabel: label of the y axis
    :type ylabel: str, optional
    :param filename: full path to where to save the figure, defaults to None
    :type filename: str, optional
    """
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, column in enumerate(table.columns):
        ax.plot(table.index, table[column], marker='o', label=str(column), color=COLORS[i % len(COLORS)])
    ax.set_xlabel(table.index.name or '')
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()

    if filename is not None:
        fig.savefig(filename)
        plt.close(fig)
    else:
        plt.show()
