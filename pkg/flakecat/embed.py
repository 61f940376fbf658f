"""
Vector embeddings of flattened test cases.

tf-idf is computed with raw term counts and the smoothed idf
``ln((1 + n_docs) / (1 + df)) + 1``; rows are L2-normalised. Embeddings
produced elsewhere (e.g. 384-dimensional code2vec vectors) are imported from
CSV files ``test_id[,label],v0..v{d-1}``, the same layout this module exports.
"""

import enum
import logging
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import sparse
from sklearn.preprocessing import normalize

from .corpus import CategoryLabel
from .errors import DimensionMismatchError, EmptyCorpusError, MissingRowError

logger = logging.getLogger(__name__)

DEFAULT_MIN_DF = 2
DEFAULT_MAX_FEATURES = 5000


class EmbeddingSource(enum.Enum):
    TFIDF = 'tfidf'
    EXTERNAL = 'external'


@dataclass(frozen=True)
class Vocabulary:
    """Fitted tf-idf vocabulary: terms in index order and their document frequencies."""

    terms: tuple
    document_frequency: np.ndarray
    n_docs: int

    def __post_init__(self):
        object.__setattr__(self, 'index', {t: i for i, t in enumerate(self.terms)})

    def __len__(self):
        return len(self.terms)

    def __contains__(self, term):
        return term in self.index

    @property
    def idf(self):
        return np.log((1.0 + self.n_docs) / (1.0 + self.document_frequency)) + 1.0


@dataclass
class EmbeddingMatrix:
    """An n_samples x d real matrix whose rows are aligned with ``row_ids``."""

    values: np.ndarray
    row_ids: list
    source: EmbeddingSource = EmbeddingSource.EXTERNAL

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError('embedding values must be a 2D matrix')
        if len(self.row_ids) != self.values.shape[0]:
            raise ValueError('{} row ids for {} rows'.format(len(self.row_ids), self.values.shape[0]))
        if not np.all(np.isfinite(self.values)):
            raise ValueError('embedding contains NaN or infinite entries')
        self.row_ids = list(self.row_ids)

    @property
    def shape(self):
        return self.values.shape

    def take(self, indices):
        """Rows at ``indices`` as a new matrix."""
        indices = np.asarray(indices, dtype=int)
        return EmbeddingMatrix(self.values[indices], [self.row_ids[i] for i in indices], self.source)


def _as_tokens(doc):
    return doc.split() if isinstance(doc, str) else list(doc)


def fit_tfidf(docs, min_df=DEFAULT_MIN_DF, max_features=DEFAULT_MAX_FEATURES):
    """
    Build the vocabulary of a document collection. Terms occurring in fewer
    than ``min_df`` documents are dropped; if more than ``max_features``
    remain, the ones with the highest document frequency are kept (ties
    broken lexicographically). Terms are indexed in lexicographic order.

    :param docs: documents, each a list of token texts or a space-separated string
    :type docs: list
    :param min_df: minimal document frequency, defaults to 2
    :type min_df: int, optional
    :param max_features: maximal vocabulary size, defaults to 5000
    :type max_features: int, optional
    :raises EmptyCorpusError: if there are no documents or no term survives ``min_df``
    :return: the fitted vocabulary
    :rtype: Vocabulary
    """
    if min_df < 1:
        raise ValueError('min_df must be >= 1')
    if max_features is not None and max_features < 1:
        raise ValueError('max_features must be >= 1')
    docs = [_as_tokens(d) for d in docs]
    if not docs:
        raise EmptyCorpusError('cannot fit a vocabulary on zero documents')

    df = Counter()
    for doc in docs:
        df.update(set(doc))
    kept = [(t, c) for t, c in df.items() if c >= min_df]
    if not kept:
        raise EmptyCorpusError('no term occurs in at least {} documents'.format(min_df))
    if max_features is not None and len(kept) > max_features:
        kept.sort(key=lambda tc: (-tc[1], tc[0]))
        kept = kept[:max_features]
    kept.sort()

    logger.debug('vocabulary of %d terms (%d distinct) over %d documents', len(kept), len(df), len(docs))
    return Vocabulary(
        terms=tuple(t for t, _ in kept),
        document_frequency=np.array([c for _, c in kept], dtype=float),
        n_docs=len(docs),
    )


def transform_tfidf(vocab, docs, row_ids=None):
    """
    tf-idf vectors of ``docs`` over a fitted vocabulary. Out-of-vocabulary
    terms are ignored; documents without any known term give all-zero rows.

    :param vocab: fitted vocabulary
    :type vocab: Vocabulary
    :param docs: documents, each a list of token texts or a space-separated string
    :type docs: list
    :param row_ids: identifiers of the rows, defaults to their positions
    :type row_ids: list, optional
    :return: L2-normalised embedding matrix
    :rtype: EmbeddingMatrix
    """
    docs = [_as_tokens(d) for d in docs]
    rows, cols, vals = [], [], []
    for r, doc in enumerate(docs):
        counts = Counter(t for t in doc if t in vocab.index)
        for term, c in counts.items():
            rows.append(r)
            cols.append(vocab.index[term])
            vals.append(c)
    tf = sparse.csr_matrix((vals, (rows, cols)), shape=(len(docs), len(vocab)), dtype=float)
    weighted = normalize(tf @ sparse.diags(vocab.idf), norm='l2', axis=1)
    if row_ids is None:
        row_ids = [str(i) for i in range(len(docs))]
    return EmbeddingMatrix(weighted.toarray(), row_ids, EmbeddingSource.TFIDF)


def load_external_embeddings(path, corpus):
    """
    Import an embedding CSV and order its rows like the manifest. An optional
    ``label`` column (as written by :func:`save_embeddings`) is ignored; rows
    for tests outside the manifest are dropped.

    :param path: CSV file ``test_id[,label],v0..v{d-1}``
    :type path: str or Path
    :param corpus: the manifest the rows must cover
    :type corpus: Corpus
    :raises MissingRowError: if a manifest test has no row
    :raises DimensionMismatchError: if a row has a different number of values
    :return: matrix with one row per manifest record
    :rtype: EmbeddingMatrix
    """
    try:
        frame = pd.read_csv(path, dtype={'test_id': str, 'label': str}, float_precision='round_trip')
    except pd.errors.ParserError as e:
        # pandas reports 'Expected 5 fields in line 7, saw 6'
        m = re.search(r'Expected (\d+) fields in line (\d+), saw (\d+)', str(e))
        if m:
            raise DimensionMismatchError(int(m.group(1)), int(m.group(3)), int(m.group(2))) from None
        raise
    value_cols = [c for c in frame.columns if re.fullmatch(r'v\d+', str(c))]
    if 'test_id' not in frame.columns or not value_cols:
        raise DimensionMismatchError('test_id,v0..', ','.join(map(str, frame.columns)), 1)
    values = frame[value_cols].apply(pd.to_numeric, errors='coerce')
    bad = values.isna().any(axis=1).to_numpy()
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise DimensionMismatchError(len(value_cols), int(values.iloc[row].notna().sum()), row + 2)

    position = {tid: i for i, tid in enumerate(frame['test_id'])}
    order = []
    for test_id in corpus.test_ids:
        if test_id not in position:
            raise MissingRowError(test_id)
        order.append(position[test_id])
    if len(position) > len(order):
        logger.info('ignoring %d embedding rows outside the manifest', len(position) - len(order))
    return EmbeddingMatrix(values.to_numpy(dtype=float)[order], corpus.test_ids, EmbeddingSource.EXTERNAL)


def save_embeddings(matrix, labels, path):
    """
    Export an embedding matrix as ``test_id,label,v0..v{d-1}``.

    :param matrix: the embedding matrix
    :type matrix: EmbeddingMatrix
    :param labels: category code per row
    :type labels: array_like
    :param path: output file
    :type path: str or Path
    """
    frame = pd.DataFrame(matrix.values, columns=['v{}'.format(i) for i in range(matrix.shape[1])])
    frame.insert(0, 'label', [CategoryLabel(int(c)).display_name for c in labels])
    frame.insert(0, 'test_id', matrix.row_ids)
    frame.to_csv(path, index=False, float_format='%.17g')
