import numpy as np
import pytest

from flakecat.corpus import CategoryLabel, Corpus, TestRecord
from flakecat.embed import (
    EmbeddingMatrix, EmbeddingSource, fit_tfidf, load_external_embeddings,
    save_embeddings, transform_tfidf,
)
from flakecat.errors import DimensionMismatchError, EmptyCorpusError, MissingRowError
from flakecat.tests.conftest import SHA, URL


def corpus_of(test_ids, cache_dir):
    return Corpus([TestRecord(URL, SHA, t, CategoryLabel.ID) for t in test_ids], cache_dir)


class TestTfidf:

    @pytest.fixture(autouse=True)
    def setup(self):
        self.docs = ['a b b', 'a c', 'a b d']

    def test_min_df_and_order(self):
        vocab = fit_tfidf(self.docs, min_df=2)
        assert vocab.terms == ('a', 'b')
        assert vocab.document_frequency.tolist() == [3.0, 2.0]
        assert vocab.n_docs == 3

    def test_smoothed_idf(self):
        vocab = fit_tfidf(self.docs, min_df=1)
        expected = np.log(4.0 / (1.0 + vocab.document_frequency)) + 1.0
        assert np.allclose(vocab.idf, expected)
        assert vocab.idf[vocab.index['a']] == pytest.approx(1.0)

    def test_max_features_ties_are_lexicographic(self):
        vocab = fit_tfidf(['y x', 'x y', 'z'], min_df=1, max_features=1)
        assert vocab.terms == ('x',)

    def test_transform_values(self):
        vocab = fit_tfidf(self.docs, min_df=2)
        m = transform_tfidf(vocab, ['b b a'])
        raw = np.array([1.0, 2.0 * (np.log(4.0 / 3.0) + 1.0)])
        assert np.allclose(m.values[0], raw / np.linalg.norm(raw))
        assert m.source is EmbeddingSource.TFIDF

    def test_rows_are_unit_or_zero(self):
        vocab = fit_tfidf(self.docs, min_df=1)
        m = transform_tfidf(vocab, self.docs + ['unknown tokens only'], row_ids=['1', '2', '3', '4'])
        norms = np.linalg.norm(m.values, axis=1)
        assert np.allclose(norms[:3], 1.0)
        assert norms[3] == 0.0
        assert m.row_ids == ['1', '2', '3', '4']
        assert m.shape == (4, len(vocab))

    def test_token_lists_equal_strings(self):
        vocab = fit_tfidf(self.docs, min_df=1)
        a = transform_tfidf(vocab, self.docs).values
        b = transform_tfidf(vocab, [d.split() for d in self.docs]).values
        assert np.array_equal(a, b)

    def test_document_order_only_permutes_rows(self):
        docs = self.docs + ['d c c b', 'e a']
        order = np.random.RandomState(10).permutation(len(docs))
        shuffled = [docs[i] for i in order]
        vocab = fit_tfidf(docs, min_df=1)
        again = fit_tfidf(shuffled, min_df=1)
        assert again.terms == vocab.terms
        assert np.array_equal(again.document_frequency, vocab.document_frequency)
        a = transform_tfidf(vocab, docs).values
        b = transform_tfidf(vocab, shuffled).values
        assert np.allclose(b, a[order])

    def test_empty(self):
        with pytest.raises(EmptyCorpusError):
            fit_tfidf([])
        with pytest.raises(EmptyCorpusError):
            fit_tfidf(['a', 'b'], min_df=2)


class TestExternalEmbeddings:

    @pytest.fixture(autouse=True)
    def setup(self, tmp_path):
        self.tmp = tmp_path
        self.corpus = corpus_of(['p.C.t1', 'p.C.t2'], tmp_path)

    def test_reordered_to_manifest(self):
        path = self.tmp / 'emb.csv'
        path.write_text('test_id,v0,v1\np.C.extra,9,9\np.C.t2,3,4\np.C.t1,1,2\n')
        m = load_external_embeddings(path, self.corpus)
        assert m.row_ids == ['p.C.t1', 'p.C.t2']
        assert m.values.tolist() == [[1.0, 2.0], [3.0, 4.0]]

    def test_label_column_is_ignored(self):
        path = self.tmp / 'emb.csv'
        path.write_text('test_id,label,v0\np.C.t1,OD,0.5\np.C.t2,ID,-0.5\n')
        m = load_external_embeddings(path, self.corpus)
        assert m.values[:, 0].tolist() == [0.5, -0.5]

    def test_missing_row(self):
        path = self.tmp / 'emb.csv'
        path.write_text('test_id,v0\np.C.t1,1\n')
        with pytest.raises(MissingRowError) as info:
            load_external_embeddings(path, self.corpus)
        assert info.value.test_id == 'p.C.t2'

    def test_short_row(self):
        path = self.tmp / 'emb.csv'
        path.write_text('test_id,v0,v1,v2\np.C.t1,1,2,3\np.C.t2,1,2\n')
        with pytest.raises(DimensionMismatchError) as info:
            load_external_embeddings(path, self.corpus)
        assert (info.value.expected, info.value.got, info.value.line_no) == (3, 2, 3)

    def test_long_row(self):
        path = self.tmp / 'emb.csv'
        path.write_text('test_id,v0,v1,v2\np.C.t1,1,2,3\np.C.t2,1,2,3,4\n')
        with pytest.raises(DimensionMismatchError) as info:
            load_external_embeddings(path, self.corpus)
        assert info.value.line_no == 3

    def test_save_then_load(self):
        prng = np.random.RandomState(10)
        m = EmbeddingMatrix(prng.randn(2, 5), ['p.C.t1', 'p.C.t2'])
        save_embeddings(m, [CategoryLabel.OD_VIC, CategoryLabel.NOD], self.tmp / 'emb.csv')
        header = (self.tmp / 'emb.csv').read_text().splitlines()[0]
        assert header == 'test_id,label,v0,v1,v2,v3,v4'
        again = load_external_embeddings(self.tmp / 'emb.csv', self.corpus)
        assert np.array_equal(again.values, m.values)


class TestEmbeddingMatrix:

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            EmbeddingMatrix(np.array([[np.nan, 1.0]]), ['a'])

    def test_rejects_id_mismatch(self):
        with pytest.raises(ValueError):
            EmbeddingMatrix(np.zeros((2, 3)), ['a'])

    def test_take(self):
        m = EmbeddingMatrix(np.arange(6.0).reshape(3, 2), ['a', 'b', 'c'])
        sub = m.take([2, 0])
        assert sub.row_ids == ['c', 'a']
        assert sub.values.tolist() == [[4.0, 5.0], [0.0, 1.0]]
