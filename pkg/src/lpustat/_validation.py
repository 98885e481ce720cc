import numbers

import numpy as np
from sklearn.utils.validation import check_array


class DomainError(ValueError):
    """A parameter lies outside the admissible region of a model."""


def check_series(x, name="X", min_length=1):
    """Validate a one-dimensional finite float series and return a copy-free array."""
    arr = check_array(
        np.asarray(x, dtype=float), ensure_2d=False, dtype=np.float64,
        ensure_all_finite=True, input_name=name,
    )
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.shape[0] < min_length:
        raise ValueError(f"{name} needs at least {min_length} values, got {arr.shape[0]}")
    return arr


def check_count(value, name, minimum=0):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_theta(theta, dim):
    """Return ``theta`` as a float vector of length ``dim``."""
    arr = np.atleast_1d(np.asarray(theta, dtype=float))
    if arr.shape != (dim,):
        raise ValueError(f"parameter must have {dim} component(s), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"parameter must be finite, got {arr}")
    return arr
