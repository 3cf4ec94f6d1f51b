"""Input validation helpers used by the estimators and domain types."""

import numpy as np

from .exceptions import ConfigurationError

# Relative tolerance on grid spacing: times must be uniform to this level.
_GRID_RTOL = 1e-12


def as_float_array(x, name, ndim=None):
    """Coerce to a float64 ndarray, requiring finite entries."""
    arr = np.asarray(x, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_uniform_times(times):
    """Validate a strictly increasing uniform time grid; return its spacing."""
    t = as_float_array(times, "times", ndim=1)
    if t.size < 2:
        raise ValueError("times must contain at least 2 samples")
    steps = np.diff(t)
    if np.any(steps <= 0):
        raise ValueError("times must be strictly increasing")
    dt = (t[-1] - t[0]) / (t.size - 1)
    if np.max(np.abs(steps - dt)) > _GRID_RTOL * max(abs(dt), 1e-300) * t.size:
        raise ValueError("times must be uniformly spaced")
    return dt


def check_positive(value, name):
    v = float(value)
    if not np.isfinite(v) or v <= 0:
        raise ConfigurationError(f"{name} must be a positive finite number, got {value!r}")
    return v


def check_spd(mat, name):
    """Validate a symmetric positive-definite matrix."""
    a = as_float_array(mat, name, ndim=2)
    if a.shape[0] != a.shape[1]:
        raise ConfigurationError(f"{name} must be square, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-12):
        raise ConfigurationError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise ConfigurationError(f"{name} must be positive definite") from None
    return a
