"""Scikit-learn style estimators over the posterior-mean matrix.

``X`` is an (n_samples, 2) integer array of 0-based (row, col) entry indices
and ``y`` the observed labels in {-1, +1}. After ``fit`` the posterior-mean
matrix is available as ``mean_matrix_`` and drives ``decision_function`` /
``predict_proba`` / ``predict`` for arbitrary entries, so the completers plug
into pipelines, grid search and cross-validation.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import as_generator, check_index_pairs, check_labels
from .model import ObservationSet, logistic
from .priors import FactorPriorConfig
from .samplers import MalaConfig, posterior_mean, run_factor_chain, run_student_chain

__all__ = ["FactorMatrixCompletion", "StudentMatrixCompletion"]


class _CompletionBase(BaseEstimator):
    """Shared prediction surface; subclasses implement ``_run_chain``."""

    def _resolve_shape(self, X):
        if self.shape is not None:
            d1, d2 = int(self.shape[0]), int(self.shape[1])
        elif X.shape[0] == 0:
            raise ValueError("cannot infer matrix shape from empty X; pass shape=")
        else:
            d1, d2 = int(X[:, 0].max()) + 1, int(X[:, 1].max()) + 1
        if d1 < 1 or d2 < 1:
            raise ValueError(f"invalid matrix shape {(d1, d2)}")
        return d1, d2

    def _mala_config(self):
        return MalaConfig(
            step_size=self.step_size,
            n_steps=self.n_steps,
            burn_in=self.burn_in,
            thin=self.thin,
            adapt=self.adapt,
        )

    def fit(self, X, y):
        """Run the MCMC chain on the observed entries and store the posterior mean."""
        X = check_index_pairs(X, name="X")
        y = check_labels(y)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        shape = self._resolve_shape(X)
        check_index_pairs(X, shape=shape, name="X")
        obs = ObservationSet(X[:, 0], X[:, 1], y)
        rng = self.random_state if isinstance(self.random_state, int) else as_generator(self.random_state)
        self.chain_ = self._run_chain(obs, shape, rng)
        summary = posterior_mean(self.chain_)
        self.mean_matrix_ = summary.mean_matrix
        self.mean_matrix_mcse_ = summary.mc_standard_error
        self.shape_ = shape
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = 2
        return self

    def _check_fitted(self):
        if not hasattr(self, "mean_matrix_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit first")

    def decision_function(self, X):
        """Posterior-mean logit of each requested entry."""
        self._check_fitted()
        X = check_index_pairs(X, shape=self.shape_, name="X")
        return self.mean_matrix_[X[:, 0], X[:, 1]]

    def predict_proba(self, X):
        """Columns follow ``classes_``: probabilities of labels -1 and +1."""
        p = logistic(self.decision_function(X))
        p = np.atleast_1d(p)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return np.where(np.atleast_1d(self.decision_function(X)) >= 0.0, 1, -1)

    def score(self, X, y):
        """Mean label accuracy on the given entries."""
        y = check_labels(y)
        return float(np.mean(self.predict(X) == y))


class StudentMatrixCompletion(_CompletionBase):
    """1-bit matrix completion under the spectral scaled Student prior.

    Parameters
    ----------
    shape : tuple of (int, int), optional
        Matrix dimensions; inferred from the largest index in X when omitted.
    alpha : float
        Likelihood tempering exponent in (0, 1).
    tau : float, optional
        Prior scale; defaults to 1/n_observations at fit time.
    step_size, n_steps, burn_in, thin, adapt
        MALA settings (see :class:`bitmc.samplers.MalaConfig`).
    random_state : int, Generator or None
        Seed for a fully reproducible chain.
    """

    def __init__(
        self,
        shape=None,
        alpha=0.99,
        tau=None,
        step_size=0.1,
        n_steps=2000,
        burn_in=None,
        thin=5,
        adapt=True,
        random_state=None,
    ):
        self.shape = shape
        self.alpha = alpha
        self.tau = tau
        self.step_size = step_size
        self.n_steps = n_steps
        self.burn_in = burn_in
        self.thin = thin
        self.adapt = adapt
        self.random_state = random_state

    def _run_chain(self, obs, shape, rng):
        tau = self.tau if self.tau is not None else 1.0 / max(obs.n, 1)
        return run_student_chain(obs, shape, self.alpha, tau, self._mala_config(), rng)


class FactorMatrixCompletion(_CompletionBase):
    """1-bit matrix completion under the hierarchical factorization prior.

    ``n_factors=None`` resolves to min(shape) capped at 10. The default
    variance-hyperprior scale ``b=1.0`` is a practical choice; the much
    smaller theory-backed value is available from
    :func:`bitmc.bounds.default_gamma_scale`.
    """

    def __init__(
        self,
        shape=None,
        alpha=0.99,
        n_factors=None,
        a=1.0,
        b=1.0,
        family="inv_gamma",
        step_size=0.1,
        n_steps=2000,
        burn_in=None,
        thin=5,
        adapt=True,
        random_state=None,
    ):
        self.shape = shape
        self.alpha = alpha
        self.n_factors = n_factors
        self.a = a
        self.b = b
        self.family = family
        self.step_size = step_size
        self.n_steps = n_steps
        self.burn_in = burn_in
        self.thin = thin
        self.adapt = adapt
        self.random_state = random_state

    def _run_chain(self, obs, shape, rng):
        k = self.n_factors if self.n_factors is not None else min(*shape, 10)
        config = FactorPriorConfig(n_factors=k, a=self.a, b=self.b, family=self.family)
        return run_factor_chain(obs, shape, self.alpha, config, self._mala_config(), rng)
