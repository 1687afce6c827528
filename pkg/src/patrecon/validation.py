"""Small input-checking helpers in the spirit of ``sklearn.utils.validation``."""
import numbers

import numpy as np

from .exceptions import InvalidArgumentError


def check_positive(value, name, allow_zero=False):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise InvalidArgumentError(f"{name} must be a finite real number, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise InvalidArgumentError(f"{name} must be {bound}, got {value!r}")
    return float(value)


def check_int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise InvalidArgumentError(f"{name} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise InvalidArgumentError(f"{name} must be >= {minimum}, got {value!r}")
    return int(value)


def check_vector(value, name, dims=(2,)):
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 1 or arr.shape[0] not in dims or not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} must be a finite vector of length {dims}, got {value!r}")
    return arr


def check_choice(value, name, choices):
    if value not in choices:
        raise InvalidArgumentError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value


def check_matrix(value, name, shape=None):
    """Return ``value`` as a finite float64 2-D array, optionally with a fixed shape."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidArgumentError(f"{name} must be 2-D, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise InvalidArgumentError(f"{name} must have shape {tuple(shape)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return arr
