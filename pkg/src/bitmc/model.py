"""Logistic 1-bit observation model: data containers, likelihoods, gradients.

Entries of a real d1 x d2 matrix are observed through independent binary
responses: the label +1 appears with probability ``logistic(m[i, j])``.
Indices are 0-based everywhere in the in-memory API; the on-disk CSV formats
are 1-based and converted exactly once at ingestion.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_matrix, check_alpha

__all__ = [
    "ObservationSet",
    "SamplingDistribution",
    "frac_log_likelihood",
    "frac_log_likelihood_and_grad",
    "frac_log_likelihood_grad",
    "likelihood_of_label",
    "log_likelihood",
    "log_logistic",
    "logistic",
    "read_matrix",
    "read_observations",
    "read_sampling_distribution",
    "write_matrix",
    "write_observations",
    "write_sampling_distribution",
]


def logistic(x):
    """Elementwise e^x / (1 + e^x), overflow-safe on both tails.

    Only e^{-|x|} is ever evaluated, so no overflow occurs for large |x|.
    """
    x = np.asarray(x, dtype=float)
    t = np.exp(-np.abs(x))
    out = np.where(x >= 0.0, 1.0, t) / (1.0 + t)
    return float(out) if out.ndim == 0 else out


def log_logistic(x):
    """Elementwise log(e^x / (1 + e^x)) = min(x, 0) - log1p(e^{-|x|})."""
    x = np.asarray(x, dtype=float)
    out = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ObservationSet:
    """Immutable batch of binary entry observations.

    ``rows``/``cols`` are 0-based entry indices, ``labels`` take values in
    {-1, +1}. Repeated (row, col) pairs are kept as-is: the model samples
    entries with replacement.
    """

    rows: np.ndarray
    cols: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        rows = np.atleast_1d(np.asarray(self.rows)).astype(np.intp)
        cols = np.atleast_1d(np.asarray(self.cols)).astype(np.intp)
        labels = np.atleast_1d(np.asarray(self.labels)).astype(np.intp)
        if not (rows.shape == cols.shape == labels.shape) or rows.ndim != 1:
            raise ValueError("rows, cols and labels must be 1-D arrays of equal length")
        if rows.size:
            if rows.min() < 0 or cols.min() < 0:
                raise ValueError("entry indices must be nonnegative (0-based)")
            if not np.isin(labels, (-1, 1)).all():
                raise ValueError("labels must be -1 or +1")
        for name, arr in (("rows", rows), ("cols", cols), ("labels", labels)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def empty(cls):
        zero = np.empty(0, dtype=np.intp)
        return cls(zero, zero.copy(), zero.copy())

    @property
    def n(self):
        return int(self.rows.size)

    def __len__(self):
        return self.n

    def digest(self):
        """Short stable hash of the observation arrays (for chain descriptors)."""
        h = hashlib.sha256()
        for arr in (self.rows, self.cols, self.labels):
            h.update(np.ascontiguousarray(arr, dtype=np.int64).tobytes())
        return h.hexdigest()[:12]


@dataclass(frozen=True)
class SamplingDistribution:
    """Entry-sampling law over the d1 x d2 grid.

    Probabilities are nonnegative and sum to one (absolute tolerance 1e-12);
    ``min_prob`` is the smallest entry probability.
    """

    probs: np.ndarray
    min_prob: float = field(init=False)

    def __post_init__(self):
        probs = as_matrix(self.probs, "probs").copy()
        if probs.size == 0:
            raise ValueError("probs must be nonempty")
        if (probs < 0).any():
            raise ValueError("probabilities must be nonnegative")
        total = float(probs.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got {total!r}")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "min_prob", float(probs.min()))

    @classmethod
    def uniform(cls, d1, d2):
        return cls(np.full((d1, d2), 1.0 / (d1 * d2)))

    @property
    def shape(self):
        return self.probs.shape


def _check_obs_indices(obs, shape):
    if obs.n == 0:
        return
    d1, d2 = shape
    if obs.rows.max() >= d1 or obs.cols.max() >= d2:
        raise ValueError(f"observation indices out of range for shape {tuple(shape)}")


def log_likelihood(matrix, obs):
    """Plain (untempered) log-likelihood of binary observations.

    Uses log(1 - f(x)) = log f(-x), so every term is a stable log-sigmoid.
    """
    m = as_matrix(matrix)
    _check_obs_indices(obs, m.shape)
    if obs.n == 0:
        return 0.0
    z = m[obs.rows, obs.cols] * obs.labels
    return float(np.sum(np.minimum(z, 0.0) - np.log1p(np.exp(-np.abs(z)))))


def frac_log_likelihood(matrix, obs, alpha):
    """Tempered log-likelihood alpha * log L_n(matrix); exactly linear in alpha."""
    return check_alpha(alpha) * log_likelihood(matrix, obs)


def frac_log_likelihood_grad(matrix, obs, alpha):
    """Gradient of the tempered log-likelihood with respect to the matrix.

    Entry (i, j) equals alpha * sum over observations at (i, j) of
    ((1 + y)/2 - f(m[i, j])); unobserved entries get zero.
    """
    alpha = check_alpha(alpha)
    m = as_matrix(matrix)
    _check_obs_indices(obs, m.shape)
    return _loglik_grad_raw(m, obs.rows, obs.cols, obs.labels, alpha)


def frac_log_likelihood_and_grad(matrix, obs, alpha):
    """Tempered log-likelihood and its gradient in one pass (shared gather)."""
    alpha = check_alpha(alpha)
    m = as_matrix(matrix)
    _check_obs_indices(obs, m.shape)
    return _loglik_and_grad_raw(m, obs.rows, obs.cols, obs.labels, alpha)


def _loglik_grad_raw(m, rows, cols, labels, alpha):
    d1, d2 = m.shape
    if rows.size == 0:
        return np.zeros((d1, d2))
    x = m[rows, cols]
    p = logistic(x)
    contrib = alpha * (0.5 * (1.0 + labels) - p)
    flat = np.bincount(rows * d2 + cols, weights=contrib, minlength=d1 * d2)
    return flat.reshape(d1, d2)


def _loglik_and_grad_raw(m, rows, cols, labels, alpha):
    d1, d2 = m.shape
    if rows.size == 0:
        return 0.0, np.zeros((d1, d2))
    x = m[rows, cols]
    z = x * labels
    lp = alpha * float(np.sum(np.minimum(z, 0.0) - np.log1p(np.exp(-np.abs(z)))))
    t = np.exp(-np.abs(x))
    p = np.where(x >= 0.0, 1.0, t) / (1.0 + t)
    contrib = alpha * (0.5 * (1.0 + labels) - p)
    flat = np.bincount(rows * d2 + cols, weights=contrib, minlength=d1 * d2)
    return lp, flat.reshape(d1, d2)


def likelihood_of_label(matrix, i, j, label):
    """Probability of observing ``label`` at entry (i, j): f(m) or 1 - f(m)."""
    m = as_matrix(matrix)
    if not (0 <= i < m.shape[0] and 0 <= j < m.shape[1]):
        raise ValueError(f"index ({i}, {j}) out of range for shape {m.shape}")
    if label not in (-1, 1):
        raise ValueError(f"label must be -1 or +1, got {label!r}")
    return logistic(label * m[i, j])


# ---------------------------------------------------------------------------
# On-disk formats. Observation files carry a header "i,j,y" with 1-based
# indices; matrices and sampling distributions are plain row-major CSV grids.
# ---------------------------------------------------------------------------


def read_observations(path):
    """Read an observation CSV (header ``i,j,y``, 1-based indices, y in {-1,1})."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["i", "j", "y"]:
            raise ValueError(f"{path}: expected header 'i,j,y', got {header!r}")
        rows, cols, labels = [], [], []
        for rec in reader:
            if not rec:
                continue
            i, j, y = (int(v) for v in rec)
            if i < 1 or j < 1:
                raise ValueError(f"{path}: indices are 1-based, got ({i}, {j})")
            rows.append(i - 1)
            cols.append(j - 1)
            labels.append(y)
    if not rows:
        return ObservationSet.empty()
    return ObservationSet(np.array(rows), np.array(cols), np.array(labels))


def write_observations(obs, path):
    """Write observations as CSV with header ``i,j,y`` and 1-based indices."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "y"])
        for i, j, y in zip(obs.rows, obs.cols, obs.labels):
            writer.writerow([int(i) + 1, int(j) + 1, int(y)])


def read_matrix(path):
    """Read a row-major CSV grid of reals as a 2-D array."""
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    return as_matrix(arr, str(path))


def write_matrix(matrix, path):
    """Write a matrix as a row-major CSV grid (full float precision)."""
    m = as_matrix(matrix)
    with open(path, "w", newline="") as fh:
        for row in m:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def read_sampling_distribution(path):
    """Read a d1 x d2 grid of entry probabilities."""
    return SamplingDistribution(read_matrix(path))


def write_sampling_distribution(dist, path):
    write_matrix(dist.probs, path)
