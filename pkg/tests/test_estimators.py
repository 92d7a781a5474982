"""Scikit-learn style completion estimators."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from bitmc.estimators import FactorMatrixCompletion, StudentMatrixCompletion
from bitmc.model import logistic


def _synthetic(seed=0, d1=5, d2=5, n=2500):
    rng = np.random.default_rng(seed)
    mstar = rng.uniform(-1, 1, (d1, 1)) @ rng.uniform(-1, 1, (1, d2)) * 3.0
    X = np.column_stack([rng.integers(0, d1, n), rng.integers(0, d2, n)])
    y = np.where(rng.random(n) < logistic(mstar[X[:, 0], X[:, 1]]), 1, -1)
    return mstar, X, y


@pytest.fixture(scope="module")
def fitted_student():
    mstar, X, y = _synthetic()
    est = StudentMatrixCompletion(
        shape=(5, 5), tau=1.0, step_size=0.05, n_steps=600, burn_in=150, random_state=0
    )
    return mstar, X, y, est.fit(X, y)


class TestEstimatorApi:
    def test_get_params_round_trip(self):
        est = StudentMatrixCompletion(alpha=0.9, n_steps=123)
        params = est.get_params()
        assert params["alpha"] == 0.9 and params["n_steps"] == 123
        cloned = clone(est)
        assert cloned.get_params() == params

    def test_set_params(self):
        est = FactorMatrixCompletion().set_params(n_factors=3, b=0.5)
        assert est.n_factors == 3 and est.b == 0.5

    def test_not_fitted_raises(self):
        with pytest.raises(NotFittedError):
            StudentMatrixCompletion().predict(np.array([[0, 0]]))

    def test_mismatched_lengths_rejected(self):
        est = StudentMatrixCompletion(shape=(2, 2), n_steps=10, burn_in=2)
        with pytest.raises(ValueError, match="rows"):
            est.fit(np.array([[0, 0], [1, 1]]), np.array([1]))

    def test_shape_inferred_from_indices(self):
        _, X, y = _synthetic(d1=4, d2=6, n=800)
        est = StudentMatrixCompletion(tau=1.0, n_steps=100, burn_in=20, random_state=1).fit(X, y)
        assert est.shape_ == (4, 6)
        assert est.mean_matrix_.shape == (4, 6)

    def test_out_of_shape_prediction_rejected(self, fitted_student):
        *_, est = fitted_student
        with pytest.raises(ValueError, match="out of range"):
            est.predict(np.array([[5, 0]]))


class TestStudentEstimator:
    def test_decision_function_reads_mean_matrix(self, fitted_student):
        *_, est = fitted_student
        X = np.array([[0, 0], [2, 3]])
        np.testing.assert_array_equal(
            est.decision_function(X), est.mean_matrix_[X[:, 0], X[:, 1]]
        )

    def test_predict_proba_rows_sum_to_one(self, fitted_student):
        *_, est = fitted_student
        X = np.array([[i, j] for i in range(5) for j in range(5)])
        proba = est.predict_proba(X)
        assert proba.shape == (25, 2)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_array_equal(est.classes_, [-1, 1])

    def test_predict_matches_sign_of_decision(self, fitted_student):
        *_, est = fitted_student
        X = np.array([[i, j] for i in range(5) for j in range(5)])
        np.testing.assert_array_equal(
            est.predict(X), np.where(est.decision_function(X) >= 0, 1, -1)
        )

    def test_beats_chance_on_training_entries(self, fitted_student):
        _, X, y, est = fitted_student
        assert est.score(X, y) > 0.6

    def test_recovers_truth_better_than_zero(self, fitted_student):
        mstar, _, _, est = fitted_student
        assert np.linalg.norm(est.mean_matrix_ - mstar) < np.linalg.norm(mstar)

    def test_random_state_reproducible(self):
        _, X, y = _synthetic(seed=3)
        kwargs = dict(shape=(5, 5), tau=1.0, n_steps=150, burn_in=30, random_state=42)
        a = StudentMatrixCompletion(**kwargs).fit(X, y)
        b = StudentMatrixCompletion(**kwargs).fit(X, y)
        np.testing.assert_array_equal(a.mean_matrix_, b.mean_matrix_)


class TestFactorEstimator:
    def test_fit_predict_cycle(self):
        mstar, X, y = _synthetic(seed=5)
        est = FactorMatrixCompletion(
            shape=(5, 5), n_factors=2, a=2.0, b=1.0, step_size=0.05,
            n_steps=600, burn_in=150, random_state=7,
        ).fit(X, y)
        assert est.mean_matrix_.shape == (5, 5)
        assert est.score(X, y) > 0.6
        assert np.linalg.norm(est.mean_matrix_ - mstar) < np.linalg.norm(mstar)

    def test_gamma_family_accepted(self):
        _, X, y = _synthetic(seed=6, n=400)
        est = FactorMatrixCompletion(
            shape=(5, 5), n_factors=2, family="gamma", b=0.5, n_steps=120, burn_in=30,
            random_state=8,
        ).fit(X, y)
        assert np.isfinite(est.mean_matrix_).all()

    def test_invalid_family_rejected_at_fit(self):
        _, X, y = _synthetic(seed=7, n=50)
        est = FactorMatrixCompletion(shape=(5, 5), family="bogus", n_steps=20, burn_in=4)
        with pytest.raises(ValueError, match="family"):
            est.fit(X, y)
