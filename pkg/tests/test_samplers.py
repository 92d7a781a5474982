"""MALA kernel, chain runners, posterior summaries."""

import math

import numpy as np
import pytest

from bitmc.model import ObservationSet
from bitmc.priors import FactorPriorConfig, FactorState, sample_student_prior
from bitmc.samplers import (
    Chain,
    MalaConfig,
    _log_accept_ratio,
    _mala_move,
    batch_means_mcse,
    dump_chain,
    mala_step,
    posterior_functional,
    posterior_mean,
    run_factor_chain,
    run_student_chain,
)


def _student_target(tau):
    def lp(m):
        return -2.0 * math.log(tau**2 + float(m[0, 0]) ** 2)

    def grad(m):
        return np.array([[-4.0 * float(m[0, 0]) / (tau**2 + float(m[0, 0]) ** 2)]])

    return lp, grad


class TestMalaKernel:
    def test_identical_proposal_accepts_surely(self):
        lp, grad = _student_target(1.0)
        x = np.array([[0.7]])
        ratio = _log_accept_ratio(x, lp(x), grad(x), x, lp(x), grad(x), 0.3)
        assert ratio == pytest.approx(0.0, abs=1e-15)

    def test_detailed_balance_identity(self):
        # pi(x) q(y|x) a(x->y) == pi(y) q(x|y) a(y->x), in logs, unnormalized
        lp, grad = _student_target(0.8)
        rng = np.random.default_rng(0)
        h = 0.4
        for _ in range(200):
            x = np.array([[float(rng.normal())]])
            y = np.array([[float(rng.normal())]])
            fwd_q = -float(np.sum((y - x - h * grad(x)) ** 2)) / (4 * h)
            rev_q = -float(np.sum((x - y - h * grad(y)) ** 2)) / (4 * h)
            r_xy = _log_accept_ratio(x, lp(x), grad(x), y, lp(y), grad(y), h)
            r_yx = _log_accept_ratio(y, lp(y), grad(y), x, lp(x), grad(x), h)
            lhs = lp(x) + fwd_q + min(0.0, r_xy)
            rhs = lp(y) + rev_q + min(0.0, r_yx)
            assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_one_step_preserves_prior_moments(self):
        # start at exact prior draws, apply one kernel step, compare moments
        tau = 1.0
        lp, grad = _student_target(tau)
        rng = np.random.default_rng(1)
        before = np.array([sample_student_prior(1, 1, tau, rng) for _ in range(20000)])
        after = np.array([mala_step(x, lp, grad, 0.5, rng)[0] for x in before])
        b, a = before.ravel(), after.ravel()
        se = a.std(ddof=1) / math.sqrt(a.size)
        assert abs(a.mean() - b.mean()) <= 3 * se
        se2 = (a**2).std(ddof=1) / math.sqrt(a.size)
        assert abs(np.mean(a**2) - np.mean(b**2)) <= 3 * se2

    def test_nonfinite_proposal_rejected_and_flagged(self):
        def target(m):
            if abs(float(m[0, 0])) > 0.0:
                return -np.inf, np.array([[np.nan]])
            return 0.0, np.array([[0.0]])

        x = np.zeros((1, 1))
        nxt, _, _, accept_prob, accepted, diverged = _mala_move(
            x, 0.0, np.zeros((1, 1)), target, 0.5, np.random.default_rng(2)
        )
        assert not accepted and diverged and accept_prob == 0.0
        np.testing.assert_array_equal(nxt, x)

    def test_mala_step_requires_finite_start(self):
        with pytest.raises(ValueError, match="finite"):
            mala_step(np.zeros((1, 1)), lambda m: np.nan, lambda m: np.zeros((1, 1)), 0.1, 3)


class TestMalaConfig:
    def test_auto_burn_in_is_one_fifth(self):
        assert MalaConfig(n_steps=1000).resolved_burn_in == 200

    def test_invalid_settings_rejected(self):
        with pytest.raises(ValueError):
            MalaConfig(step_size=0.0)
        with pytest.raises(ValueError):
            MalaConfig(n_steps=100, burn_in=100)
        with pytest.raises(ValueError):
            MalaConfig(thin=0)


class TestStudentChain:
    def test_bit_identical_reproducibility(self):
        obs = ObservationSet([0, 1], [1, 0], [1, -1])
        cfg = MalaConfig(step_size=0.3, n_steps=400, burn_in=100, thin=2)
        a = run_student_chain(obs, (2, 2), 0.5, 1.0, cfg, rng=99)
        b = run_student_chain(obs, (2, 2), 0.5, 1.0, cfg, rng=99)
        np.testing.assert_array_equal(a.states, b.states)
        assert a.accept_rate == b.accept_rate
        assert a.seed == 99

    def test_thinning_commutes_with_storage(self):
        obs = ObservationSet([0], [0], [1])
        thin1 = run_student_chain(
            obs, (1, 1), 0.5, 1.0, MalaConfig(step_size=0.4, n_steps=600, burn_in=100, thin=1), rng=5
        )
        thin5 = run_student_chain(
            obs, (1, 1), 0.5, 1.0, MalaConfig(step_size=0.4, n_steps=600, burn_in=100, thin=5), rng=5
        )
        np.testing.assert_array_equal(thin1.states[::5], thin5.states)
        manual = thin1.states[::5].mean(axis=0)
        assert posterior_mean(thin5).mean_matrix[0, 0] == pytest.approx(
            manual[0, 0], abs=1e-12
        )

    def test_prior_only_chain_centered(self):
        cfg = MalaConfig(step_size=0.5, n_steps=200000, burn_in=20000, thin=1)
        chain = run_student_chain(ObservationSet.empty(), (1, 1), 0.5, 1.0, cfg, rng=17)
        mean, mcse = posterior_functional(chain, lambda s: s[:, 0, 0], vectorized=True)
        assert abs(mean) <= 3 * mcse

    def test_prior_only_chain_moment_bound(self):
        # matches the exact-prior Frobenius bound within Monte Carlo error
        tau, d1, d2 = 0.5, 2, 2
        cfg = MalaConfig(step_size=0.2, n_steps=60000, burn_in=10000, thin=2)
        chain = run_student_chain(ObservationSet.empty(), (d1, d2), 0.9, tau, cfg, rng=23)
        val, mcse = posterior_functional(
            chain, lambda s: np.sum(s * s, axis=(1, 2)), vectorized=True
        )
        assert val <= d1 * d2 * tau**2 + 3 * mcse

    def test_tiny_step_accepts_everything(self):
        obs = ObservationSet([0], [0], [1])
        cfg = MalaConfig(step_size=1e-10, n_steps=300, burn_in=50, thin=1, adapt=False)
        chain = run_student_chain(obs, (1, 1), 0.5, 1.0, cfg, rng=7)
        assert chain.accept_rate >= 0.99

    def test_adaptation_reaches_target(self):
        obs = ObservationSet([0, 0, 0], [0, 0, 0], [1, 1, -1])
        cfg = MalaConfig(step_size=5.0, n_steps=12000, burn_in=6000, thin=1, adapt=True)
        chain = run_student_chain(obs, (1, 1), 0.5, 1.0, cfg, rng=11)
        assert abs(chain.accept_rate - 0.574) < 0.08

    def test_recovers_rank_one_truth_2x2(self):
        rng = np.random.default_rng(31)
        wins = 0
        for rep in range(20):
            u = rng.uniform(-1, 1, (2, 1))
            v = rng.uniform(-1, 1, (2, 1))
            mstar = u @ v.T
            rows = rng.integers(0, 2, 2000)
            cols = rng.integers(0, 2, 2000)
            labels = np.where(rng.random(2000) < 1 / (1 + np.exp(-mstar[rows, cols])), 1, -1)
            obs = ObservationSet(rows, cols, labels)
            cfg = MalaConfig(step_size=0.05, n_steps=800, burn_in=200, thin=2)
            chain = run_student_chain(obs, (2, 2), 0.99, 1.0, cfg, rng=rng)
            err = np.linalg.norm(posterior_mean(chain).mean_matrix - mstar)
            wins += err < np.linalg.norm(mstar)
        assert wins >= 19

    def test_empty_shape_validation(self):
        with pytest.raises(ValueError, match="positive"):
            run_student_chain(ObservationSet.empty(), (0, 2), 0.5, 1.0, MalaConfig(n_steps=10, burn_in=1), rng=1)


class TestFactorChain:
    def test_bit_identical_reproducibility(self):
        obs = ObservationSet([0, 1], [1, 0], [1, -1])
        prior = FactorPriorConfig(n_factors=2, a=2.0, b=1.0, family="inv_gamma")
        cfg = MalaConfig(step_size=0.2, n_steps=300, burn_in=60, thin=3)
        a = run_factor_chain(obs, (2, 2), 0.5, prior, cfg, rng=13)
        b = run_factor_chain(obs, (2, 2), 0.5, prior, cfg, rng=13)
        np.testing.assert_array_equal(a.states.left, b.states.left)
        np.testing.assert_array_equal(a.states.variances, b.states.variances)

    @pytest.mark.parametrize("family", ["gamma", "inv_gamma"])
    def test_prior_only_variance_moments(self, family):
        # empty data: the variance marginal must match the hyperprior (a=3, b=1:
        # inverse-gamma mean 1/2; gamma mean a*b = 3)
        prior = FactorPriorConfig(n_factors=1, a=3.0, b=1.0, family=family)
        cfg = MalaConfig(step_size=0.5, n_steps=50000, burn_in=10000, thin=1)
        chain = run_factor_chain(ObservationSet.empty(), (1, 1), 0.5, prior, cfg, rng=37)
        trace = chain.states.variances[:, 0]
        expected = 0.5 if family == "inv_gamma" else 3.0
        mcse = batch_means_mcse(trace)
        assert abs(trace.mean() - expected) <= max(3 * mcse, 1e-3)

    def test_induced_matrix_permutation_invariant(self):
        rng = np.random.default_rng(41)
        left = rng.normal(size=(3, 3))
        right = rng.normal(size=(4, 3))
        variances = rng.uniform(0.5, 2.0, 3)
        perm = [1, 2, 0]
        state = FactorState(left, right, variances)
        permuted = FactorState(left[:, perm], right[:, perm], variances[perm])
        np.testing.assert_allclose(state.induced(), permuted.induced(), atol=1e-12)

    def test_recovers_rank_one_truth_4x4(self):
        rng = np.random.default_rng(43)
        prior = FactorPriorConfig(n_factors=2, a=2.0, b=1.0, family="inv_gamma")
        wins = 0
        for rep in range(20):
            u = rng.uniform(-1, 1, (4, 1))
            v = rng.uniform(-1, 1, (4, 1))
            mstar = u @ v.T
            rows = rng.integers(0, 4, 4000)
            cols = rng.integers(0, 4, 4000)
            labels = np.where(rng.random(4000) < 1 / (1 + np.exp(-mstar[rows, cols])), 1, -1)
            obs = ObservationSet(rows, cols, labels)
            cfg = MalaConfig(step_size=0.05, n_steps=800, burn_in=200, thin=2)
            chain = run_factor_chain(obs, (4, 4), 0.99, prior, cfg, rng=rng)
            err = np.linalg.norm(posterior_mean(chain).mean_matrix - mstar)
            wins += err < np.linalg.norm(mstar)
        assert wins >= 19

    def test_gamma_family_runs_and_mixes(self):
        obs = ObservationSet([0, 0, 1], [0, 1, 1], [1, -1, 1])
        prior = FactorPriorConfig(n_factors=2, a=2.0, b=0.5, family="gamma")
        cfg = MalaConfig(step_size=0.2, n_steps=2000, burn_in=400, thin=2)
        chain = run_factor_chain(obs, (2, 2), 0.5, prior, cfg, rng=19)
        assert 0.1 < chain.accept_rate <= 1.0
        assert np.isfinite(chain.induced()).all()


class TestPosteriorSummaries:
    def _constant_chain(self, value, count=40):
        states = np.repeat(value[None, :, :], count, axis=0)
        return Chain(
            states=states, accept_rate=1.0, n_steps=count, burn_in=0, thin=1, seed=0,
            target="fixture", step_sizes={}, step_trace=np.array([]), divergences=0,
        )

    def test_identical_states(self):
        m0 = np.array([[1.0, -2.0], [0.5, 3.0]])
        summary = posterior_mean(self._constant_chain(m0))
        np.testing.assert_array_equal(summary.mean_matrix, m0)
        np.testing.assert_array_equal(summary.mc_standard_error, 0.0)

    def test_alternating_states_average_to_zero(self):
        a = np.array([[2.0, -1.0]])
        states = np.array([a if i % 2 == 0 else -a for i in range(40)]).reshape(40, 1, 2)
        chain = Chain(
            states=states, accept_rate=1.0, n_steps=40, burn_in=0, thin=1, seed=0,
            target="fixture", step_sizes={}, step_trace=np.array([]), divergences=0,
        )
        np.testing.assert_allclose(posterior_mean(chain).mean_matrix, 0.0, atol=1e-15)

    def test_constant_functional_has_zero_mcse(self):
        chain = self._constant_chain(np.ones((2, 2)))
        value, mcse = posterior_functional(chain, lambda m: 4.2)
        assert value == pytest.approx(4.2, rel=1e-15)
        assert mcse == pytest.approx(0.0, abs=1e-14)

    def test_empty_chain_rejected(self):
        chain = self._constant_chain(np.ones((1, 1)), count=40)
        empty = Chain(
            states=np.empty((0, 1, 1)), accept_rate=0.0, n_steps=0, burn_in=0, thin=1,
            seed=None, target="fixture", step_sizes={}, step_trace=np.array([]), divergences=0,
        )
        with pytest.raises(ValueError, match="no stored samples"):
            posterior_mean(empty)

    def test_prior_only_student_mean_within_mcse(self):
        cfg = MalaConfig(step_size=0.3, n_steps=40000, burn_in=8000, thin=2)
        chain = run_student_chain(ObservationSet.empty(), (2, 2), 0.5, 0.5, cfg, rng=53)
        summary = posterior_mean(chain)
        assert np.all(np.abs(summary.mean_matrix) <= 3 * summary.mc_standard_error)

    def test_jensen_gap_nonnegative(self):
        # sample analogue of Jensen: mean-estimator error <= posterior-average error
        rng = np.random.default_rng(59)
        mstar = rng.normal(size=(2, 2))
        obs = ObservationSet(rng.integers(0, 2, 500), rng.integers(0, 2, 500), rng.choice([-1, 1], 500))
        cfg = MalaConfig(step_size=0.1, n_steps=1000, burn_in=200, thin=2)
        chain = run_student_chain(obs, (2, 2), 0.8, 1.0, cfg, rng=rng)
        avg, mcse = posterior_functional(
            chain, lambda s: np.sum((s - mstar) ** 2, axis=(1, 2)) / 4, vectorized=True
        )
        mhat = posterior_mean(chain).mean_matrix
        assert float(np.sum((mhat - mstar) ** 2) / 4) <= avg + 3 * mcse


class TestBatchMeansMcse:
    def test_constant_series(self):
        assert batch_means_mcse(np.full(100, 2.5)) == 0.0

    def test_iid_series_close_to_classical_se(self):
        rng = np.random.default_rng(61)
        x = rng.normal(size=20000)
        classical = x.std(ddof=1) / math.sqrt(x.size)
        assert batch_means_mcse(x) == pytest.approx(classical, rel=0.5)

    def test_degenerate_single_batch(self):
        assert batch_means_mcse(np.array([1.0])) == 0.0


class TestDumpChain:
    def test_student_dump_round_trip(self, tmp_path):
        obs = ObservationSet([0], [0], [1])
        cfg = MalaConfig(step_size=0.3, n_steps=200, burn_in=40, thin=4)
        chain = run_student_chain(obs, (2, 3), 0.5, 1.0, cfg, rng=67)
        csv_path, json_path = tmp_path / "chain.csv", tmp_path / "chain.json"
        dump_chain(chain, csv_path, json_path)
        lines = csv_path.read_text().splitlines()
        assert lines[0].split(",")[0] == "m_0_0"
        assert len(lines) == 1 + len(chain)
        first = dump_chain(chain, csv_path, json_path)  # re-dump: byte identical
        assert csv_path.read_text().splitlines() == lines
        assert "accept_rate" in json_path.read_text()

    def test_factor_dump_headers(self, tmp_path):
        obs = ObservationSet([0], [0], [1])
        prior = FactorPriorConfig(n_factors=2, a=2.0, b=1.0, family="inv_gamma")
        cfg = MalaConfig(step_size=0.3, n_steps=100, burn_in=20, thin=4)
        chain = run_factor_chain(obs, (2, 2), 0.5, prior, cfg, rng=71)
        dump_chain(chain, tmp_path / "c.csv", tmp_path / "c.json")
        header = (tmp_path / "c.csv").read_text().splitlines()[0].split(",")
        assert header[0] == "left_0_0" and header[-1] == "var_1"
