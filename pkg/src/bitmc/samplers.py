"""MCMC kernels targeting the tempered posterior for both prior families.

The single kernel is MALA (Langevin proposal plus Metropolis-Hastings
correction), so invariance is exact and testable against quadrature oracles.
The factorization prior runs as Metropolis-within-Gibbs: MALA block moves on
the left and right factors, then either an exact conjugate variance redraw
(inverse-Gamma family) or a MALA move on log-variances (Gamma family).

Chains store post-burn-in, thinned states in preallocated stacks; identical
seeds reproduce chains bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ._validation import as_generator, check_alpha, check_positive
from .model import _check_obs_indices, _loglik_and_grad_raw
from .priors import (
    GAMMA,
    INVERSE_GAMMA,
    FactorState,
    sample_factor_state,
    student_log_prior_and_grad,
)

__all__ = [
    "Chain",
    "FactorTrace",
    "MalaConfig",
    "PosteriorSummary",
    "batch_means_mcse",
    "dump_chain",
    "mala_step",
    "posterior_functional",
    "posterior_mean",
    "run_factor_chain",
    "run_student_chain",
]


@dataclass(frozen=True)
class MalaConfig:
    """MALA settings; ``burn_in=None`` resolves to 20% of ``n_steps``.

    With ``adapt=True`` the step size is tuned by dual averaging toward an
    acceptance rate of 0.574 during burn-in only, then frozen.
    """

    step_size: float = 0.1
    n_steps: int = 2000
    burn_in: int | None = None
    thin: int = 5
    adapt: bool = True
    target_accept: float = 0.574

    def __post_init__(self):
        check_positive(self.step_size, "step_size")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.thin < 1:
            raise ValueError(f"thin must be >= 1, got {self.thin}")
        burn = self.resolved_burn_in
        if not 0 <= burn < self.n_steps:
            raise ValueError(f"burn_in must lie in [0, n_steps), got {burn}")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")

    @property
    def resolved_burn_in(self):
        if self.burn_in is None:
            return self.n_steps // 5
        return self.burn_in


class _DualAveraging:
    """Nesterov dual averaging of log step size toward a target acceptance."""

    def __init__(self, step0, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.mu = math.log(10.0 * step0)
        self.log_step = math.log(step0)
        self.log_avg = math.log(step0)
        self.h_bar = 0.0
        self.count = 0

    def update(self, accept_prob):
        self.count += 1
        frac = 1.0 / (self.count + self.t0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - accept_prob)
        self.log_step = self.mu - math.sqrt(self.count) / self.gamma * self.h_bar
        eta = self.count ** (-self.kappa)
        self.log_avg = eta * self.log_step + (1.0 - eta) * self.log_avg

    @property
    def step(self):
        return math.exp(self.log_step)

    @property
    def averaged_step(self):
        return math.exp(self.log_avg)


def _log_accept_ratio(x, lp_x, grad_x, y, lp_y, grad_y, step):
    """Log MH ratio for the Langevin proposal N(x + step*grad, 2*step*I)."""
    fwd = -float(np.sum((y - x - step * grad_x) ** 2)) / (4.0 * step)
    rev = -float(np.sum((x - y - step * grad_y) ** 2)) / (4.0 * step)
    return lp_y - lp_x + rev - fwd


def _mala_move(x, lp, grad, target, step, rng):
    """One MALA transition from a state with cached (lp, grad).

    Returns (state, lp, grad, accept_prob, accepted, diverged); a non-finite
    proposal value or gradient rejects the move and flags a divergence.
    """
    noise = rng.standard_normal(x.shape)
    prop = x + step * grad + math.sqrt(2.0 * step) * noise
    lp_p, grad_p = target(prop)
    if not np.isfinite(lp_p) or not np.isfinite(grad_p).all():
        return x, lp, grad, 0.0, False, True
    rev = x - prop - step * grad_p
    # forward density term: ||prop - x - step*grad||^2 / (4 step) == 0.5 ||noise||^2
    log_ratio = lp_p - lp + 0.5 * float(np.vdot(noise, noise)) - float(np.vdot(rev, rev)) / (
        4.0 * step
    )
    accept_prob = math.exp(min(0.0, log_ratio))
    if rng.random() < accept_prob:
        return prop, lp_p, grad_p, accept_prob, True, False
    return x, lp, grad, accept_prob, False, False


def mala_step(state, log_target, log_target_grad, step_size, rng):
    """Single MALA step; returns (next_state, accepted).

    Convenience wrapper that recomputes the current log-target and gradient;
    the chain runners cache them internally instead.
    """
    check_positive(step_size, "step_size")
    rng = as_generator(rng)
    x = np.asarray(state, dtype=float)
    lp = float(log_target(x))
    if not np.isfinite(lp):
        raise ValueError("log_target must be finite at the current state")
    grad = np.asarray(log_target_grad(x), dtype=float)

    def target(y):
        return float(log_target(y)), np.asarray(log_target_grad(y), dtype=float)

    nxt, _, _, _, accepted, _ = _mala_move(x, lp, grad, target, float(step_size), rng)
    return nxt, accepted


@dataclass(frozen=True)
class FactorTrace:
    """Stacked factor-chain states: left (S,d1,K), right (S,d2,K), variances (S,K)."""

    left: np.ndarray
    right: np.ndarray
    variances: np.ndarray

    def __len__(self):
        return self.left.shape[0]

    def induced(self):
        return np.einsum("sik,sjk->sij", self.left, self.right)

    def state(self, index):
        return FactorState(self.left[index], self.right[index], self.variances[index])


@dataclass(frozen=True)
class Chain:
    """A finished MCMC run: stored states plus diagnostics.

    ``states`` is a (S, d1, d2) stack for matrix-space chains or a
    :class:`FactorTrace` for factorization chains; stored states are already
    post-burn-in and thinned.
    """

    states: object
    accept_rate: float
    n_steps: int
    burn_in: int
    thin: int
    seed: int | None
    target: str
    step_sizes: dict
    step_trace: np.ndarray
    divergences: int

    def __len__(self):
        return len(self.states)

    def induced(self):
        """Stored states as a (S, d1, d2) stack of parameter matrices."""
        if isinstance(self.states, FactorTrace):
            return self.states.induced()
        return self.states


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior mean estimate with per-entry Monte Carlo standard errors."""

    mean_matrix: np.ndarray
    n_samples_used: int
    mc_standard_error: np.ndarray


def batch_means_mcse(values, n_batches=20):
    """Batch-means Monte Carlo standard error along axis 0.

    Uses the trailing ``n_batches * (S // n_batches)`` samples; degenerate
    inputs (fewer than two batches) report zero.
    """
    values = np.asarray(values, dtype=float)
    size = values.shape[0]
    if size == 0:
        raise ValueError("values must be nonempty")
    nb = min(n_batches, size)
    bs = size // nb
    used = values[size - nb * bs :]
    means = used.reshape((nb, bs) + values.shape[1:]).mean(axis=1)
    if nb < 2:
        return np.zeros_like(means[0]) if means.ndim > 1 else 0.0
    out = means.std(axis=0, ddof=1) / math.sqrt(nb)
    return float(out) if np.ndim(out) == 0 else out


def posterior_mean(chain):
    """Average the induced matrices of the stored states (the mean estimator)."""
    stack = chain.induced()
    if stack.shape[0] == 0:
        raise ValueError("chain has no stored samples")
    mean = stack.mean(axis=0)
    mcse = batch_means_mcse(stack)
    return PosteriorSummary(mean_matrix=mean, n_samples_used=stack.shape[0], mc_standard_error=mcse)


def posterior_functional(chain, fn, vectorized=False):
    """Posterior average of a scalar functional of the matrix, with its MCSE.

    ``fn`` maps one (d1, d2) matrix to a float; with ``vectorized=True`` it
    receives the whole (S, d1, d2) stack and returns S values.
    """
    stack = chain.induced()
    if stack.shape[0] == 0:
        raise ValueError("chain has no stored samples")
    if vectorized:
        values = np.asarray(fn(stack), dtype=float)
    else:
        values = np.fromiter((fn(m) for m in stack), dtype=float, count=stack.shape[0])
    return float(values.mean()), float(batch_means_mcse(values))


def _resolve_rng(rng):
    if isinstance(rng, (int, np.integer)):
        return np.random.default_rng(int(rng)), int(rng)
    return as_generator(rng), None


def _label_counts(obs):
    n_pos = int(np.sum(obs.labels == 1))
    return n_pos, obs.n - n_pos


def _scalar_loglik(m00, n_pos, n_neg, alpha):
    """Tempered log-likelihood and d/dm for a 1 x 1 parameter (hot-path form)."""
    if m00 >= 0.0:
        lf_pos = -math.log1p(math.exp(-m00))
        lf_neg = lf_pos - m00
    else:
        lf_neg = -math.log1p(math.exp(m00))
        lf_pos = lf_neg + m00
    f = math.exp(lf_pos)
    lp = alpha * (n_pos * lf_pos + n_neg * lf_neg)
    grad = alpha * (n_pos * (1.0 - f) - n_neg * f)
    return lp, grad


def _subsample_trace(trace, limit=128):
    arr = np.asarray(trace, dtype=float)
    if arr.size <= limit:
        return arr
    idx = np.linspace(0, arr.size - 1, limit).astype(np.intp)
    return arr[idx]


def run_student_chain(obs, shape, alpha, tau, mala=None, rng=None):
    """MALA chain on the full matrix under the scaled Student prior.

    With empty observations the chain samples the prior itself (and must
    reproduce the prior's moment bounds). Aborts if the log-target ever
    becomes non-finite at the current state.
    """
    mala = mala or MalaConfig()
    alpha = check_alpha(alpha)
    check_positive(tau, "tau")
    d1, d2 = int(shape[0]), int(shape[1])
    if d1 < 1 or d2 < 1:
        raise ValueError(f"shape must be positive, got {(d1, d2)}")
    _check_obs_indices(obs, (d1, d2))
    rng, seed = _resolve_rng(rng)
    rows, cols, labels = obs.rows, obs.cols, obs.labels

    if d1 == 1 and d2 == 1:
        n_pos, n_neg = _label_counts(obs)
        tau2 = tau * tau

        def target(m):
            m00 = m[0, 0]
            gram = tau2 + m00 * m00
            lp_lik, grad_lik = _scalar_loglik(m00, n_pos, n_neg, alpha)
            return lp_lik - 2.0 * math.log(gram), np.array([[grad_lik - 4.0 * m00 / gram]])

    else:

        def target(m):
            lp_prior, grad_prior = student_log_prior_and_grad(m, tau)
            if rows.size == 0:
                return lp_prior, grad_prior
            lp_lik, grad_lik = _loglik_and_grad_raw(m, rows, cols, labels, alpha)
            return lp_lik + lp_prior, grad_lik + grad_prior

    x = np.zeros((d1, d2))
    lp, grad = target(x)
    burn = mala.resolved_burn_in
    keep = range(burn, mala.n_steps, mala.thin)
    states = np.empty((len(keep), d1, d2))
    adapter = _DualAveraging(mala.step_size, mala.target_accept) if mala.adapt else None
    step = mala.step_size
    trace = []
    accepted = 0
    sampled = 0
    divergences = 0
    kept = 0
    for it in range(mala.n_steps):
        if adapter is not None and it < burn:
            step = adapter.step
        x, lp, grad, accept_prob, did_accept, diverged = _mala_move(x, lp, grad, target, step, rng)
        divergences += diverged
        if it < burn:
            trace.append(step)
            if adapter is not None:
                adapter.update(accept_prob)
                if it == burn - 1:
                    step = adapter.averaged_step
        else:
            sampled += 1
            accepted += did_accept
        if not np.isfinite(lp):
            raise RuntimeError(
                f"student chain diverged at step {it} (seed={seed!r}, divergences={divergences})"
            )
        if it >= burn and (it - burn) % mala.thin == 0:
            states[kept] = x
            kept += 1
    return Chain(
        states=states,
        accept_rate=accepted / sampled if sampled else 0.0,
        n_steps=mala.n_steps,
        burn_in=burn,
        thin=mala.thin,
        seed=seed,
        target=f"student(tau={tau!r})|alpha={alpha!r}|data={obs.digest()}",
        step_sizes={"matrix": step},
        step_trace=_subsample_trace(trace),
        divergences=divergences,
    )


def run_factor_chain(obs, shape, alpha, config, mala=None, rng=None):
    """Metropolis-within-Gibbs chain for the hierarchical factorization prior.

    Each sweep block-updates the left factor, the right factor, then the
    per-column variances: an exact conjugate redraw for the inverse-Gamma
    family, a MALA move on log-variances (with the log-scale measure term in
    the target) for the Gamma family. Every sweep leaves the tempered
    posterior invariant.
    """
    mala = mala or MalaConfig()
    alpha = check_alpha(alpha)
    d1, d2 = int(shape[0]), int(shape[1])
    if d1 < 1 or d2 < 1:
        raise ValueError(f"shape must be positive, got {(d1, d2)}")
    _check_obs_indices(obs, (d1, d2))
    rng, seed = _resolve_rng(rng)
    rows, cols, labels = obs.rows, obs.cols, obs.labels
    k = config.n_factors

    init = sample_factor_state(config, d1, d2, rng)
    left = np.array(init.left)
    right = np.array(init.right)
    variances = np.array(init.variances)

    if d1 == 1 and d2 == 1:
        n_pos, n_neg = _label_counts(obs)

        def loglik(m):
            lp, grad = _scalar_loglik(m[0, 0], n_pos, n_neg, alpha)
            return lp, np.array([[grad]])

    elif rows.size == 0:
        zero_grad = np.zeros((d1, d2))

        def loglik(m):
            return 0.0, zero_grad

    else:

        def loglik(m):
            return _loglik_and_grad_raw(m, rows, cols, labels, alpha)

    def left_target(candidate):
        lp, grad_m = loglik(candidate @ right.T)
        lp -= 0.5 * float(np.sum(candidate**2 / variances))
        return lp, grad_m @ right - candidate / variances

    def right_target(candidate):
        lp, grad_m = loglik(left @ candidate.T)
        lp -= 0.5 * float(np.sum(candidate**2 / variances))
        return lp, grad_m.T @ left - candidate / variances

    a, b = config.a, config.b

    def theta_target(theta):
        # log prior of (left, right, exp(theta)) plus the log-scale Jacobian
        g = np.exp(theta)
        quad = np.sum(left**2, axis=0) + np.sum(right**2, axis=0)
        lp = -0.5 * float(np.sum((d1 + d2) * theta + quad / g))
        lp += float(np.sum((a - 1.0) * theta - g / b)) + float(np.sum(theta))
        grad = -0.5 * (d1 + d2) + 0.5 * quad / g + a - g / b
        return lp, grad

    burn = mala.resolved_burn_in
    keep = range(burn, mala.n_steps, mala.thin)
    trace_left = np.empty((len(keep), d1, k))
    trace_right = np.empty((len(keep), d2, k))
    trace_var = np.empty((len(keep), k))
    ig_shape = config.a + 0.5 * (d1 + d2)
    blocks = ["left", "right"] + (["variances"] if config.family == GAMMA else [])
    adapters = {
        name: _DualAveraging(mala.step_size, mala.target_accept) if mala.adapt else None
        for name in blocks
    }
    steps = {name: mala.step_size for name in blocks}
    trace = []
    accepted = 0
    sampled = 0
    divergences = 0
    kept = 0
    for it in range(mala.n_steps):
        adapting = it < burn
        for name, target_fn, current in (
            ("left", left_target, left),
            ("right", right_target, right),
        ):
            adapter = adapters[name]
            if adapter is not None and adapting:
                steps[name] = adapter.step
            lp, grad = target_fn(current)
            nxt, _, _, accept_prob, did_accept, diverged = _mala_move(
                current, lp, grad, target_fn, steps[name], rng
            )
            divergences += diverged
            if name == "left":
                left = nxt
            else:
                right = nxt
            if adapting:
                if adapter is not None:
                    adapter.update(accept_prob)
                    if it == burn - 1:
                        steps[name] = adapter.averaged_step
            else:
                sampled += 1
                accepted += did_accept
        if config.family == INVERSE_GAMMA:
            # conjugate redraw, same formula as priors.gamma_conditional_draw,
            # inlined to avoid per-sweep state construction
            quad = np.einsum("ik,ik->k", left, left) + np.einsum("ik,ik->k", right, right)
            variances = (config.b + 0.5 * quad) / rng.gamma(ig_shape, size=k)
        else:
            adapter = adapters["variances"]
            if adapter is not None and adapting:
                steps["variances"] = adapter.step
            theta = np.log(variances)
            lp, grad = theta_target(theta)
            theta, _, _, accept_prob, did_accept, diverged = _mala_move(
                theta, lp, grad, theta_target, steps["variances"], rng
            )
            divergences += diverged
            variances = np.exp(theta)
            if adapting:
                if adapter is not None:
                    adapter.update(accept_prob)
                    if it == burn - 1:
                        steps["variances"] = adapter.averaged_step
            else:
                sampled += 1
                accepted += did_accept
        if adapting:
            trace.append(steps["left"])
        if it >= burn and (it - burn) % mala.thin == 0:
            trace_left[kept] = left
            trace_right[kept] = right
            trace_var[kept] = variances
            kept += 1
    return Chain(
        states=FactorTrace(trace_left, trace_right, trace_var),
        accept_rate=accepted / sampled if sampled else 0.0,
        n_steps=mala.n_steps,
        burn_in=burn,
        thin=mala.thin,
        seed=seed,
        target=(
            f"factor({config.family},k={k},a={config.a!r},b={config.b!r})"
            f"|alpha={alpha!r}|data={obs.digest()}"
        ),
        step_sizes=dict(steps),
        step_trace=_subsample_trace(trace),
        divergences=divergences,
    )


def dump_chain(chain, csv_path, json_path):
    """Write stored states as flat CSV plus a JSON diagnostics sidecar."""
    states = chain.states
    if isinstance(states, FactorTrace):
        d1, k = states.left.shape[1], states.left.shape[2]
        d2 = states.right.shape[1]
        header = (
            [f"left_{i}_{j}" for i in range(d1) for j in range(k)]
            + [f"right_{i}_{j}" for i in range(d2) for j in range(k)]
            + [f"var_{j}" for j in range(k)]
        )
        flat = np.concatenate(
            [
                states.left.reshape(len(states), -1),
                states.right.reshape(len(states), -1),
                states.variances.reshape(len(states), -1),
            ],
            axis=1,
        )
    else:
        d1, d2 = states.shape[1], states.shape[2]
        header = [f"m_{i}_{j}" for i in range(d1) for j in range(d2)]
        flat = states.reshape(len(states), -1)
    with open(csv_path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in flat:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    diag = {
        "accept_rate": chain.accept_rate,
        "burn_in": chain.burn_in,
        "divergences": chain.divergences,
        "n_steps": chain.n_steps,
        "n_stored": len(chain),
        "seed": chain.seed,
        "step_sizes": {k: float(v) for k, v in chain.step_sizes.items()},
        "step_trace": [float(v) for v in chain.step_trace],
        "target": chain.target,
        "thin": chain.thin,
    }
    with open(json_path, "w") as fh:
        json.dump(diag, fh, indent=2, sort_keys=True)
        fh.write("\n")
