"""Exact divergences between the Bernoulli observation laws of two matrices.

Every divergence here is computed in closed form from the two logit matrices
and the entry-sampling distribution; nothing is estimated from samples.
Per-entry Bernoulli divergences are aggregated with the sampling weights,
optionally divided by d1*d2 (``size_normalized=True``, the per-entry
convention the concentration bounds in :mod:`bitmc.bounds` are stated in).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_matrix, check_alpha
from .model import log_logistic, logistic

__all__ = [
    "DIVERGENCE_KINDS",
    "TransferConstants",
    "bernoulli_hellinger_sq",
    "bernoulli_kl",
    "bernoulli_renyi",
    "frobenius_error",
    "hellinger_bound_constant",
    "joint_divergence",
    "logistic_curvature_constant",
    "normalized_sq_error",
    "sup_error",
]

DIVERGENCE_KINDS = ("kl", "hellinger_sq", "renyi")


def _check_probs(p, name, strict):
    arr = np.asarray(p, dtype=float)
    if strict:
        if not ((arr > 0.0) & (arr < 1.0)).all():
            raise ValueError(f"{name} must lie strictly inside (0, 1)")
    elif not ((arr >= 0.0) & (arr <= 1.0)).all():
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr


def bernoulli_kl(p, q):
    """KL divergence between Bernoulli(p) and Bernoulli(q), elementwise."""
    p = _check_probs(p, "p", strict=True)
    q = _check_probs(q, "q", strict=True)
    out = p * np.log(p / q) + (1.0 - p) * np.log((1.0 - p) / (1.0 - q))
    return float(out) if out.ndim == 0 else out


def bernoulli_hellinger_sq(p, q):
    """Squared Hellinger distance (sqrt(p)-sqrt(q))^2 + (sqrt(1-p)-sqrt(1-q))^2."""
    p = _check_probs(p, "p", strict=False)
    q = _check_probs(q, "q", strict=False)
    out = (np.sqrt(p) - np.sqrt(q)) ** 2 + (np.sqrt(1.0 - p) - np.sqrt(1.0 - q)) ** 2
    return float(out) if out.ndim == 0 else out


def bernoulli_renyi(p, q, alpha):
    """Renyi divergence of order alpha in (0, 1) between two Bernoulli laws."""
    alpha = check_alpha(alpha)
    p = _check_probs(p, "p", strict=True)
    q = _check_probs(q, "q", strict=True)
    mass = p**alpha * q ** (1.0 - alpha) + (1.0 - p) ** alpha * (1.0 - q) ** (1.0 - alpha)
    out = np.log(mass) / (alpha - 1.0)
    return float(out) if out.ndim == 0 else out


def _entrywise_from_logits(a, b, kind, alpha):
    """Per-entry divergence between Bernoulli(f(a)) and Bernoulli(f(b)).

    Works in log-sigmoid space so that large logits never produce 0/1
    probabilities inside a logarithm.
    """
    if kind == "kl":
        p = logistic(a)
        return p * (log_logistic(a) - log_logistic(b)) + (1.0 - p) * (
            log_logistic(-a) - log_logistic(-b)
        )
    if kind == "hellinger_sq":
        return bernoulli_hellinger_sq(logistic(a), logistic(b))
    if kind == "renyi":
        alpha = check_alpha(alpha)
        mass = np.exp(alpha * log_logistic(a) + (1.0 - alpha) * log_logistic(b)) + np.exp(
            alpha * log_logistic(-a) + (1.0 - alpha) * log_logistic(-b)
        )
        return np.log(mass) / (alpha - 1.0)
    raise ValueError(f"kind must be one of {DIVERGENCE_KINDS}, got {kind!r}")


def joint_divergence(a, b, dist, kind, alpha=None, size_normalized=True):
    """Sampling-weighted divergence between the observation laws of two matrices.

    Parameters
    ----------
    a, b : array_like
        Logit matrices of equal shape.
    dist : SamplingDistribution
        Entry-sampling law; its probabilities weight the per-entry divergences.
    kind : str
        One of ``"kl"``, ``"hellinger_sq"``, ``"renyi"``.
    alpha : float, optional
        Renyi order, required iff ``kind == "renyi"``.
    size_normalized : bool
        When True (default) the weighted sum is additionally divided by
        d1*d2, the convention the concentration bounds are stated in;
        ``False`` gives the plain joint-law divergence.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != b.shape or a.shape != dist.shape:
        raise ValueError(f"shape mismatch: {a.shape}, {b.shape}, {dist.shape}")
    per_entry = _entrywise_from_logits(a, b, kind, alpha)
    total = float(np.sum(dist.probs * per_entry))
    if size_normalized:
        total /= a.shape[0] * a.shape[1]
    return total


def hellinger_bound_constant(alpha):
    """Piecewise constant turning the concentration rate into a Hellinger bound.

    Equals 2(alpha+1)/(1-alpha) on [0.5, 1) and 2(alpha+1)/alpha on (0, 0.5);
    both branches give 6 at alpha = 0.5.
    """
    alpha = check_alpha(alpha)
    if alpha >= 0.5:
        return 2.0 * (alpha + 1.0) / (1.0 - alpha)
    return 2.0 * (alpha + 1.0) / alpha


def logistic_curvature_constant(kappa):
    """Worst-case curvature of the logistic link over logits bounded by kappa.

    inf over |x| <= kappa of f'(x)^2 / (8 f(x)(1 - f(x))), attained at the
    boundary: e^kappa / (8 (1 + e^kappa)^2). Decreasing in kappa, 1/32 at 0.
    """
    if not np.isfinite(kappa) or kappa < 0:
        raise ValueError(f"kappa must be finite and >= 0, got {kappa!r}")
    t = np.exp(-float(kappa))  # e^k/(1+e^k)^2 == e^-k/(1+e^-k)^2, overflow-safe
    return float(t / (8.0 * (1.0 + t) ** 2))


def frobenius_error(a, b):
    """Frobenius norm of a - b."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def normalized_sq_error(a, b):
    """Squared Frobenius error divided by d1*d2 (per-entry mean square)."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.sum(diff * diff) / diff.size)


def sup_error(a, b):
    """Entrywise max-norm of a - b."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).max()) if a.size else 0.0


@dataclass(frozen=True)
class TransferConstants:
    """Constants moving a divergence bound onto the parameter matrix."""

    hellinger_constant: float
    curvature: float
    kappa: float
    min_prob: float

    @classmethod
    def compute(cls, alpha, kappa, dist):
        if dist.min_prob <= 0:
            raise ValueError("sampling distribution must have strictly positive entries")
        return cls(
            hellinger_constant=hellinger_bound_constant(alpha),
            curvature=logistic_curvature_constant(kappa),
            kappa=float(kappa),
            min_prob=dist.min_prob,
        )
