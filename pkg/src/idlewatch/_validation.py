"""Input validation helpers.

sklearn's ``check_array`` rejects complex input, so snapshot matrices are
validated here instead.
"""

from __future__ import annotations

import math
import numbers

import numpy as np


def check_positive(value, name, *, allow_zero=False):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ValueError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValueError(f"{name} must be {bound}, got {value}")
    return value


def check_int(value, name, *, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_angle(theta, name="theta"):
    """Validate a direction in radians measured from broadside."""
    arr = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if np.any(np.abs(arr) > math.pi / 2 + 1e-12):
        raise ValueError(f"{name} must lie in [-pi/2, pi/2] radians")
    return arr


def check_amplitudes(r, name="r"):
    """Return a 1-D float array of nonnegative, finite amplitudes."""
    arr = np.asarray(r, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if np.any(arr < 0):
        raise ValueError(f"{name} must be nonnegative")
    return arr


def check_snapshots(X, n_elements=None, *, min_snapshots=1):
    """Return snapshots as a complex array of shape (n_snapshots, n_elements).

    Accepts an array-like or a sequence of :class:`~idlewatch.signal_model.Snapshot`.
    A single 1-D snapshot is promoted to shape (1, M).
    """
    if isinstance(X, (list, tuple)) and X and hasattr(X[0], "values"):
        X = [s.values for s in X]
    arr = np.asarray(X)
    if arr.dtype == object:
        raise ValueError("snapshots must be numeric")
    arr = arr.astype(complex, copy=False)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"snapshots must have shape (n_snapshots, M), got {arr.shape}")
    if arr.shape[0] < min_snapshots:
        raise ValueError(f"need at least {min_snapshots} snapshot(s), got {arr.shape[0]}")
    if n_elements is not None and arr.shape[1] != n_elements:
        raise ValueError(f"snapshots have {arr.shape[1]} elements, expected {n_elements}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("snapshots contain non-finite values")
    return arr
