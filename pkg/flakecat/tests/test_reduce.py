import numpy as np
import pytest
from scipy.spatial.distance import pdist

from flakecat.errors import (
    DegenerateClassError, DimensionMismatchError, DisconnectedGraphError,
    PerplexityOutOfRangeError,
)
from flakecat.reduce import (
    ReducerKind, conditional_probabilities, fit_isomap, fit_lda, fit_pca,
    fit_reducer, fit_tsne, reduce_matrix, transform,
)
from flakecat.tests.conftest import make_blobs


def isotropic_cloud(prng, n, centre):
    """2-D points around ``centre`` whose scatter matrix is exactly a multiple of I."""
    E = prng.randn(n, 2)
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    offsets = np.vstack([E, -E, E @ R.T, -(E @ R.T)])
    return np.asarray(centre) + offsets


class TestPCA:

    @pytest.fixture(autouse=True)
    def setup(self):
        self.prng = np.random.RandomState(10)

    def test_collinear_pair(self):
        p = fit_pca(np.array([[-1.0, -1.0], [1.0, 1.0]]), 1)
        assert np.allclose(p.basis[:, 0], [np.sqrt(0.5), np.sqrt(0.5)])
        assert p.explained_variance_ratio[0] == pytest.approx(1.0)
        assert transform(p, np.array([[1.0, 1.0]])).values[0, 0] == pytest.approx(np.sqrt(2.0))

    def test_orthonormal_and_decorrelated(self):
        X = self.prng.randn(50, 6) @ self.prng.randn(6, 6)
        p = fit_pca(X, 4)
        assert np.allclose(p.basis.T @ p.basis, np.eye(4), atol=1e-10)
        Z = p.transform(X).values
        cov = np.cov(Z, rowvar=False)
        assert np.allclose(cov, np.diag(np.diag(cov)), atol=1e-8)
        assert np.all(np.diff(p.eigenvalues) <= 0)

    def test_full_rank_reconstruction(self):
        X = self.prng.randn(20, 4)
        p = fit_pca(X, 4)
        assert np.allclose(p.inverse_transform(p.transform(X).values), X)
        assert p.eigenvalues.sum() == pytest.approx(p.total_variance)

    def test_wide_matrix_matches_covariance_spectrum(self):
        X = self.prng.randn(5, 10)
        p = fit_pca(X, 3)
        expected = np.sort(np.linalg.eigvalsh(np.cov(X, rowvar=False)))[::-1][:3]
        assert np.allclose(p.eigenvalues, expected)
        assert np.allclose(p.basis.T @ p.basis, np.eye(3), atol=1e-8)

    def test_low_rank_structure(self):
        F = self.prng.randn(200, 3)
        X = F @ self.prng.randn(3, 10) + 0.01 * self.prng.randn(200, 10)
        p = fit_pca(X, 3)
        assert p.explained_variance_ratio.sum() >= 0.99

    def test_rank_deficient(self, caplog):
        t = np.linspace(0, 1, 5)[:, np.newaxis]
        X = t * np.array([[1.0, 2.0, 3.0]])
        p = fit_pca(X, 2)
        assert p.rank_deficient
        assert p.n_components == 1
        assert 'positive variance' in caplog.text

    def test_signs_are_fixed(self):
        p = fit_pca(self.prng.randn(30, 5), 3)
        rows = np.argmax(np.abs(p.basis), axis=0)
        assert np.all(p.basis[rows, np.arange(3)] > 0)

    def test_invalid_r(self):
        with pytest.raises(ValueError):
            fit_pca(self.prng.randn(5, 3), 4)

    def test_dimension_mismatch(self):
        p = fit_pca(self.prng.randn(10, 3), 2)
        with pytest.raises(DimensionMismatchError):
            transform(p, self.prng.randn(4, 5))

    def test_rows_keep_ids(self):
        class Rows:
            values = np.arange(12.0).reshape(4, 3) ** 2
            row_ids = ['a', 'b', 'c', 'd']
        reduced = reduce_matrix('pca', Rows(), r=2)
        assert reduced.row_ids == ['a', 'b', 'c', 'd']
        assert reduced.reducer_tag == 'pca(r=2)'


class TestLDA:

    @pytest.fixture(autouse=True)
    def setup(self):
        self.prng = np.random.RandomState(10)

    def test_direction_of_separation(self):
        X = np.vstack([isotropic_cloud(self.prng, 25, (-5.0, 0.0)), isotropic_cloud(self.prng, 25, (5.0, 0.0))])
        y = np.repeat([0, 1], 100)
        p = fit_lda(X, y, 1)
        v = p.basis[:, 0] / np.linalg.norm(p.basis[:, 0])
        angle = np.degrees(np.arccos(min(abs(v[0]), 1.0)))
        assert angle < 5.0
        assert not p.uninformative

    def test_components_capped_at_classes_minus_one(self, caplog):
        X, y = make_blobs(20, 7, 10)
        assert fit_lda(X, y).n_components == 6
        assert fit_lda(X, y, 10).n_components == 6
        assert 'capped' in caplog.text

    def test_within_class_scatter_is_normalised(self):
        X, y = make_blobs(30, 3, 4)
        p = fit_lda(X, y, 2, shrinkage=0.0)
        Xw = X.copy()
        for c in np.unique(y):
            Xw[y == c] -= X[y == c].mean(axis=0)
        Sw = Xw.T @ Xw
        assert np.allclose(p.basis.T @ Sw @ p.basis, np.eye(2), atol=1e-8)

    def test_translation_invariant(self):
        X, y = make_blobs(30, 3, 4)
        a = fit_lda(X, y, 2).basis
        b = fit_lda(X + 100.0, y, 2).basis
        assert np.allclose(a, b, atol=1e-6)

    def test_coinciding_means(self, caplog):
        X = np.vstack([isotropic_cloud(self.prng, 10, (0.0, 0.0)) for _ in range(3)])
        y = np.repeat([0, 1, 2], 40)
        p = fit_lda(X, y)
        assert p.uninformative
        assert 'coincide' in caplog.text

    def test_degenerate_class(self):
        X = self.prng.randn(6, 2)
        with pytest.raises(DegenerateClassError):
            fit_lda(X, [0, 0, 0, 1, 1, 2])

    def test_explained_variance_is_pca_only(self):
        X, y = make_blobs(10, 2, 3)
        with pytest.raises(AttributeError):
            fit_lda(X, y).explained_variance_ratio


class TestIsomap:

    def test_collinear_points_stay_ordered(self):
        X = np.column_stack([np.arange(10.0), np.zeros(10)])
        Z = fit_isomap(X, k_neighbors=2, r=1).values[:, 0]
        d = np.diff(Z)
        assert np.all(d > 0) or np.all(d < 0)

    def test_arc_is_unrolled_evenly(self):
        theta = np.linspace(0, np.pi / 2, 10)
        X = np.column_stack([np.cos(theta), np.sin(theta)])
        Z = np.sort(fit_isomap(X, k_neighbors=2, r=1).values[:, 0])
        gaps = np.diff(Z)
        assert np.all(np.abs(gaps - gaps.mean()) <= 0.1 * gaps.mean())

    def test_dense_graph_recovers_plane(self):
        prng = np.random.RandomState(10)
        P = prng.randn(12, 2)
        basis = np.linalg.qr(prng.randn(3, 2))[0]
        X = P @ basis.T
        Z = fit_isomap(X, k_neighbors=11, r=2).values
        assert np.allclose(pdist(Z), pdist(X), atol=1e-6)

    def test_disconnected(self):
        X = np.array([[0.0, 0.0], [0.1, 0.0], [100.0, 0.0], [100.1, 0.0]])
        with pytest.raises(DisconnectedGraphError) as info:
            fit_isomap(X, k_neighbors=1, r=1)
        assert info.value.n_components == 2

    def test_duplicate_rows_stay_connected(self):
        Z = fit_isomap(np.array([[0.0], [0.0], [1.0]]), k_neighbors=1, r=1).values[:, 0]
        assert abs(Z[0] - Z[1]) < 1e-6
        assert abs(Z[2] - Z[0]) == pytest.approx(1.0, abs=1e-6)

    def test_repeated_zero_rows(self):
        X = np.vstack([np.zeros((3, 2)), np.column_stack([np.arange(1.0, 6.0), np.zeros(5)])])
        Z = fit_isomap(X, k_neighbors=2, r=1).values[:, 0]
        assert np.ptp(Z[:3]) < 1e-6
        assert np.allclose(np.abs(Z[3:] - Z[0]), np.arange(1.0, 6.0), atol=1e-6)


class TestTSNE:

    @pytest.fixture(autouse=True)
    def setup(self):
        self.X, self.y = make_blobs(50, 3, 5, sep=10.0, scale=0.1)

    def test_perplexity_calibration(self):
        prng = np.random.RandomState(10)
        P, _ = conditional_probabilities(prng.randn(60, 4), perplexity=10.0)
        assert np.allclose(P.sum(axis=1), 1.0)
        assert np.all(np.diag(P) == 0)
        for row in P:
            p = row[row > 0]
            h = -np.sum(p * np.log2(p))
            assert abs(h - np.log2(10.0)) <= 1e-5 + 1e-9

    def test_clusters_are_kept(self):
        reduced = fit_tsne(self.X, perplexity=30.0, iters=400, seed=0)
        Y = reduced.values
        assert Y.shape == (150, 2)
        D = np.linalg.norm(Y[:, np.newaxis] - Y[np.newaxis], axis=2)
        np.fill_diagonal(D, np.inf)
        accuracy = np.mean(self.y[np.argmin(D, axis=1)] == self.y)
        assert accuracy >= 0.95

    def test_late_phase_kl_is_non_increasing(self):
        kl = np.array(fit_tsne(self.X, perplexity=20.0, iters=300, seed=1).diagnostics['kl'])
        assert kl.size == 50
        assert np.all(np.diff(kl) <= 1e-6)

    def test_deterministic(self):
        a = fit_tsne(self.X, perplexity=20.0, iters=260, seed=3).values
        b = fit_tsne(self.X, perplexity=20.0, iters=260, seed=3).values
        assert np.array_equal(a, b)

    def test_perplexity_out_of_range(self):
        with pytest.raises(PerplexityOutOfRangeError):
            fit_tsne(self.X[:30], perplexity=10.0)
        with pytest.raises(PerplexityOutOfRangeError):
            fit_tsne(self.X, perplexity=1.0)

    def test_dispatcher_is_two_dimensional_only(self):
        with pytest.raises(ValueError):
            fit_reducer(ReducerKind.TSNE, self.X, r=3)
