"""Closed-form rates, constants and concentration-check predicates.

Each calculator evaluates one displayed formula exactly; the unknown
universal constant in the factorization rate defaults to 1 and is exposed
as ``rate_constant`` so scaling checks stay invariant to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_alpha, check_positive
from .metrics import hellinger_bound_constant

__all__ = [
    "BoundCheckResult",
    "CHECK_SIDES",
    "check_concentration",
    "concentration_threshold",
    "default_gamma_scale",
    "factor_kl_offset",
    "factor_prior_kl_bound",
    "factor_rate",
    "student_prior_kl_bound",
    "student_rate",
]

CHECK_SIDES = ("renyi", "hellinger", "frobenius")


def _check_dims(n, d1, d2, rank):
    if n < 1 or d1 < 1 or d2 < 1:
        raise ValueError(f"n, d1, d2 must be >= 1, got {(n, d1, d2)}")
    if rank < 0:
        raise ValueError(f"rank must be >= 0, got {rank}")


def factor_rate(n, d1, d2, rank, rate_constant=1.0):
    """Concentration rate for the factorization prior: C r (d1+d2) log(n d1 d2) / n."""
    _check_dims(n, d1, d2, rank)
    check_positive(rate_constant, "rate_constant")
    return rate_constant * rank * (d1 + d2) * math.log(n * d1 * d2) / n


def student_rate(n, d1, d2, rank, truth_frobenius):
    """Concentration rate for the scaled Student prior.

    2 r (d1+d2+2) log(1 + n ||truth||_F / sqrt(2r)) / n, with the rank-0
    convention 0 * log(1 + 0/0) = 0.
    """
    _check_dims(n, d1, d2, rank)
    if truth_frobenius < 0:
        raise ValueError(f"truth_frobenius must be >= 0, got {truth_frobenius}")
    if rank == 0:
        return 0.0
    return 2.0 * rank * (d1 + d2 + 2) * math.log1p(n * truth_frobenius / math.sqrt(2.0 * rank)) / n


def default_gamma_scale(n, d1, d2, n_factors, entry_bound):
    """Theory-backed default for the variance hyperprior scale.

    entry_bound^2 / [512 (n d1 d2)^4 n_factors^2 max(d1, d2)^2]. Far too
    small for practical chains; exposed so configs can request it explicitly.
    """
    _check_dims(n, d1, d2, 0)
    if n_factors < 1:
        raise ValueError(f"n_factors must be >= 1, got {n_factors}")
    check_positive(entry_bound, "entry_bound")
    return entry_bound**2 / (512.0 * float(n * d1 * d2) ** 4 * n_factors**2 * max(d1, d2) ** 2)


def factor_kl_offset(a):
    """Additive constant in the factor-prior KL bound: log(8 sqrt(pi) Gamma(a) 2^(10a+1)) + 3."""
    check_positive(a, "a")
    return math.log(8.0 * math.sqrt(math.pi)) + math.lgamma(a) + (10.0 * a + 1.0) * math.log(2.0) + 3.0


def factor_prior_kl_bound(n, d1, d2, rank, a):
    """KL bound for the factor prior: 2(1+2a) r (d1+d2) [log(n d1 d2) + offset(a)]."""
    _check_dims(n, d1, d2, rank)
    return 2.0 * (1.0 + 2.0 * a) * rank * (d1 + d2) * (math.log(n * d1 * d2) + factor_kl_offset(a))


def student_prior_kl_bound(d1, d2, rank, tau, truth_frobenius):
    """KL bound for the translated Student prior: 2 r (d1+d2+2) log(1 + ||truth||_F/(tau sqrt(2r)))."""
    _check_dims(1, d1, d2, rank)
    check_positive(tau, "tau")
    if truth_frobenius < 0:
        raise ValueError(f"truth_frobenius must be >= 0, got {truth_frobenius}")
    if rank == 0:
        return 0.0
    return 2.0 * rank * (d1 + d2 + 2) * math.log1p(truth_frobenius / (tau * math.sqrt(2.0 * rank)))


def concentration_threshold(rate, alpha, side, min_prob=None, curvature=None):
    """Right-hand side of the selected concentration statement.

    ``side`` is one of ``"renyi"`` (2(alpha+1)/(1-alpha) * rate),
    ``"hellinger"`` (piecewise constant * rate) or ``"frobenius"``
    (piecewise constant / (min_prob * curvature) * rate).
    """
    alpha = check_alpha(alpha)
    if rate < 0:
        raise ValueError(f"rate must be >= 0, got {rate}")
    if side == "renyi":
        return 2.0 * (alpha + 1.0) / (1.0 - alpha) * rate
    if side == "hellinger":
        return hellinger_bound_constant(alpha) * rate
    if side == "frobenius":
        if min_prob is None or curvature is None:
            raise ValueError("frobenius threshold requires min_prob and curvature")
        check_positive(min_prob, "min_prob")
        check_positive(curvature, "curvature")
        return hellinger_bound_constant(alpha) / (min_prob * curvature) * rate
    raise ValueError(f"side must be one of {CHECK_SIDES}, got {side!r}")


@dataclass(frozen=True)
class BoundCheckResult:
    """Outcome of checking one concentration statement against observed runs.

    ``probability_floor`` is 1 - 2/(n * rate); floors <= 0 make the statement
    vacuous at this scale and are reported as such rather than hidden.
    """

    rate: float
    threshold: float
    probability_floor: float
    empirical_fraction: float
    trivially_satisfied: bool
    passed: bool


def check_concentration(values, rate, n, alpha, side, min_prob=None, curvature=None):
    """Compare empirical posterior integrals against a concentration statement.

    ``values`` are per-run scalar integrals; the check passes when the
    fraction of runs below the threshold reaches the probability floor, or
    the floor is nonpositive (vacuous bound).
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("values must be nonempty")
    threshold = concentration_threshold(rate, alpha, side, min_prob=min_prob, curvature=curvature)
    floor = 1.0 - 2.0 / (n * rate) if rate > 0 else -math.inf
    fraction = float(np.mean(values <= threshold))
    trivial = floor <= 0.0
    return BoundCheckResult(
        rate=float(rate),
        threshold=float(threshold),
        probability_floor=floor,
        empirical_fraction=fraction,
        trivially_satisfied=trivial,
        passed=trivial or fraction >= floor,
    )
