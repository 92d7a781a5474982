"""Input validation helpers shared across the package."""

from __future__ import annotations

import numbers

import numpy as np

__all__ = [
    "as_generator",
    "as_matrix",
    "check_alpha",
    "check_index_pairs",
    "check_labels",
    "check_positive",
]


def as_matrix(value, name="matrix"):
    """Coerce ``value`` to a finite 2-D float array."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.size and not np.isfinite(arr).all():
        raise ValueError(f"{name} must have finite entries")
    return arr


def check_alpha(alpha):
    """Validate a tempering / Renyi exponent in the open interval (0, 1)."""
    if not isinstance(alpha, numbers.Real) or not 0.0 < float(alpha) < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    return float(alpha)


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or float(value) <= 0.0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def as_generator(seed=None):
    """Return a numpy random Generator; an existing Generator passes through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def check_index_pairs(X, shape=None, name="X"):
    """Coerce an (n, 2) array of 0-based (row, col) entry indices.

    When ``shape`` is given, indices are bounds-checked against it.
    """
    arr = np.asarray(X)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"{name} must have shape (n, 2), got {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        asfloat = np.asarray(arr, dtype=float)
        if arr.size and not np.array_equal(asfloat, np.rint(asfloat)):
            raise ValueError(f"{name} must contain integer entry indices")
        arr = asfloat
    arr = arr.astype(np.intp)
    if arr.size and arr.min() < 0:
        raise ValueError(f"{name} indices must be nonnegative (0-based)")
    if shape is not None and arr.size:
        d1, d2 = shape
        if arr[:, 0].max() >= d1 or arr[:, 1].max() >= d2:
            raise ValueError(f"{name} indices out of range for shape {tuple(shape)}")
    return arr


def check_labels(y, name="y"):
    """Coerce labels to an integer array with values in {-1, +1}."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    arr = arr.astype(np.intp)
    if arr.size and not np.isin(arr, (-1, 1)).all():
        raise ValueError(f"{name} must contain only -1 and +1")
    return arr
