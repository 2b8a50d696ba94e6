"""Shared input-validation helpers used across the package."""

import numpy as np


def as_float_matrix(x, name="array"):
    """Coerce to a 2-D float64 array, rejecting anything else."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def check_finite(x, name="array"):
    """Raise if any entry is NaN/inf, naming the first offending position."""
    arr = np.asarray(x)
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"{name} contains non-finite value at index {idx}")
    return arr


def check_posterior(p, n_labels, name="posterior", tol=1e-6):
    """Validate a probability vector: finite, non-negative, sums to 1 +- tol."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.shape != (n_labels,):
        raise ValueError(f"{name} must have shape ({n_labels},), got {arr.shape}")
    check_finite(arr, name)
    if (arr < 0).any():
        raise ValueError(f"{name} has negative entries")
    total = float(arr.sum())
    if abs(total - 1.0) > tol:
        raise ValueError(f"{name} sums to {total!r}, expected 1 within {tol}")
    return arr


def check_times_sorted(times, name="times", strict=True):
    """Validate a 1-D time vector is (strictly) increasing."""
    arr = np.asarray(times, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D")
    diffs = np.diff(arr)
    if strict and (diffs <= 0).any():
        raise ValueError(f"{name} must be strictly increasing")
    if not strict and (diffs < 0).any():
        raise ValueError(f"{name} must be non-decreasing")
    return arr
