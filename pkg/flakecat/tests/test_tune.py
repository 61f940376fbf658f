import math

import numpy as np
import pytest
from sklearn.gaussian_process import GaussianProcessRegressor

from flakecat.classify import ForestConfig
from flakecat.errors import NumericalFailure, ObjectiveError, OutOfBoundsError
from flakecat.tune import (
    DEFAULT_SPACE, decode, encode, expected_improvement, fit_gp, gp_posterior,
    load_trace, optimize, save_trace,
)


def matern52(a, b, length_scale=1.0):
    r = np.abs(a[:, np.newaxis] - b[np.newaxis]) / length_scale
    return (1 + math.sqrt(5) * r + 5.0 * r ** 2 / 3.0) * np.exp(-math.sqrt(5) * r)


def base_point(**changes):
    point = {
        'max_depth': 100, 'min_impurity_decrease': 0.0, 'min_samples_leaf': 1,
        'min_samples_split': 2, 'n_estimators': 100, 'min_weight_fraction_leaf': 0.0,
        'max_leaf_nodes': 400, 'criterion': 'gini',
    }
    point.update(changes)
    return point


class TestEncoding:

    def test_endpoints(self):
        assert encode(base_point(max_depth=1))[0] == 0.0
        assert encode(base_point(max_depth=200))[0] == 1.0

    def test_one_hot_criterion(self):
        u = encode(base_point(criterion='entropy'))
        assert u.shape == (10,)
        assert u[7:].tolist() == [0.0, 1.0, 0.0]

    def test_decode_inverts_encode(self):
        prng = np.random.RandomState(10)
        for _ in range(500):
            point = DEFAULT_SPACE.sample(prng)
            back = decode(encode(point))
            for name, value in point.items():
                if isinstance(value, float):
                    assert back[name] == pytest.approx(value, abs=1e-12)
                else:
                    assert back[name] == value

    def test_decode_rounds_and_clips(self):
        u = np.zeros(10)
        u[0] = 1.5
        u[2] = 0.6 / 199.0
        u[9] = 0.2
        point = decode(u)
        assert point['max_depth'] == 200
        assert point['min_samples_leaf'] == 2
        assert point['criterion'] == 'log_loss'

    @pytest.mark.parametrize('changes', [
        {'max_depth': 0}, {'n_estimators': 30}, {'min_impurity_decrease': 0.6},
        {'max_leaf_nodes': 10.5}, {'criterion': 'mse'},
    ])
    def test_out_of_bounds(self, changes):
        with pytest.raises(OutOfBoundsError):
            encode(base_point(**changes))

    def test_to_config(self):
        cfg = DEFAULT_SPACE.to_config(base_point(max_depth=12), seed=4)
        assert cfg == ForestConfig(max_depth=12, seed=4)
        assert cfg.violations() == []


class TestSurrogate:

    @pytest.fixture(autouse=True)
    def setup(self):
        self.prng = np.random.RandomState(10)

    def test_expected_improvement(self):
        assert expected_improvement(0.5, 1.0, 0.5) == pytest.approx(0.3989, abs=1e-4)
        assert expected_improvement(0.7, 0.0, 0.5) == pytest.approx(0.2)
        assert expected_improvement(0.3, 0.0, 0.5) == 0.0
        assert np.all(expected_improvement(self.prng.randn(20), self.prng.rand(20), 0.0) >= 0)

    def test_interpolates_observations(self):
        X = self.prng.rand(6, 10)
        y = self.prng.randn(6)
        state = fit_gp(X, y, noise=1e-10, optimize=False, normalize_y=False)
        for x, target in zip(X, y):
            mean, var = gp_posterior(state, x)
            assert mean == pytest.approx(target, abs=1e-6)
            assert var <= 1e-6

    def test_reverts_to_prior_far_away(self):
        X = self.prng.rand(6, 10)
        state = fit_gp(X, self.prng.randn(6), optimize=False, normalize_y=False)
        mean, var = gp_posterior(state, np.full(10, 100.0))
        assert mean == pytest.approx(0.0, abs=1e-8)
        assert var == pytest.approx(1.0, abs=1e-8)

    def test_one_dimensional_closed_form(self):
        X = np.array([0.0, 0.3, 1.0, 1.7, 2.5])
        y = np.sin(X)
        state = fit_gp(X[:, np.newaxis], y, noise=1e-10, optimize=False, normalize_y=False)
        query = np.array([0.15, 0.65, 1.35, 2.1])
        K = matern52(X, X) + 1e-10 * np.eye(5)
        expected = matern52(query, X) @ np.linalg.solve(K, y)
        mean, _ = gp_posterior(state, query[:, np.newaxis])
        assert np.allclose(mean, expected, atol=1e-8)

    def test_singular_gram_raises_noise(self, caplog):
        X = np.vstack([np.full((3, 2), 0.5), [[0.1, 0.9]]])
        y = np.array([1.0, 2.0, 3.0, 0.0])
        state = fit_gp(X, y, noise=0.0, optimize=False)
        assert state.noise_raised
        assert state.noise_variance > 0
        assert 'raising the noise floor' in caplog.text

    def test_noise_cap_raises_numerical_failure(self, monkeypatch):
        def singular(self, X, y):
            raise np.linalg.LinAlgError('not positive definite')

        monkeypatch.setattr(GaussianProcessRegressor, 'fit', singular)
        with pytest.raises(NumericalFailure) as info:
            fit_gp(np.eye(3), np.arange(3.0), noise=1e-6, optimize=False)
        assert isinstance(info.value.__cause__, np.linalg.LinAlgError)


class TestOptimize:

    def test_random_phase_only(self):
        best, trace = optimize(lambda p: p['max_depth'] / 200.0, n_init=4, n_iter=0, seed=1)
        assert len(trace) == 4
        assert best.objective == max(o.objective for o in trace)
        assert [o.iteration for o in trace] == [0, 1, 2, 3]

    def test_deterministic_and_distinct(self):
        objective = lambda p: -abs(p['max_leaf_nodes'] - 100) / 400.0  # noqa: E731
        _, a = optimize(objective, n_init=3, n_iter=3, seed=5, n_candidates=128)
        _, b = optimize(objective, n_init=3, n_iter=3, seed=5, n_candidates=128)
        assert [o.point for o in a] == [o.point for o in b]
        points = [tuple(sorted(o.point.items())) for o in a]
        assert len(set(points)) == len(points)
        for o in a:
            encode(o.point)

    def test_fold_scores(self):
        best, trace = optimize(lambda p: [0.25, 0.75], n_init=2, n_iter=0)
        assert best.fold_scores == [0.25, 0.75]
        assert best.objective == 0.5

    def test_objective_error_carries_point(self):
        def failing(point):
            raise RuntimeError('boom')
        with pytest.raises(ObjectiveError) as info:
            optimize(failing, n_init=2, n_iter=0)
        assert set(info.value.point) == set(DEFAULT_SPACE.names)
        assert isinstance(info.value.__cause__, RuntimeError)

    def test_resume_matches_uninterrupted_run(self, tmp_path):
        objective = lambda p: math.sin(p['max_depth'] / 30.0) + p['min_impurity_decrease']  # noqa: E731
        _, full = optimize(objective, n_init=3, n_iter=3, seed=2, n_candidates=128)
        _, part = optimize(objective, n_init=3, n_iter=1, seed=2, n_candidates=128)
        save_trace(part, tmp_path / 'trace.csv')
        _, resumed = optimize(objective, n_init=3, n_iter=3, seed=2, n_candidates=128,
                              trace=load_trace(tmp_path / 'trace.csv'))
        assert [o.point for o in resumed] == [o.point for o in full]
        assert [o.objective for o in resumed] == [o.objective for o in full]

    def test_callback_sees_every_observation(self):
        sizes = []
        optimize(lambda p: 0.0 if p['criterion'] == 'gini' else 1.0, n_init=2, n_iter=1,
                 n_candidates=64, callback=lambda t: sizes.append(len(t)))
        assert sizes == [1, 2, 3]

    def test_finds_peak_in_max_depth(self):
        objective = lambda p: -(p['max_depth'] / 200.0 - 0.3) ** 2  # noqa: E731
        best, _ = optimize(objective, n_init=5, n_iter=25, seed=0)
        assert 50 <= best.point['max_depth'] <= 70

    def test_invalid_budget(self):
        with pytest.raises(ValueError):
            optimize(lambda p: 0.0, n_init=1)
