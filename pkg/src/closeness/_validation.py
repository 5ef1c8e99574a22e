"""Input validation helpers shared by the public operations."""

import numbers

import numpy as np

from closeness.exceptions import InvalidParameterError

SUM_TOL = 1e-9


def check_positive(value, name, *, integer=False, allow_zero=False):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise InvalidParameterError(f"{name} must be a real number, got {value!r}")
    if not np.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value!r}")
    if integer and int(value) != value:
        raise InvalidParameterError(f"{name} must be an integer, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise InvalidParameterError(f"{name} must be {bound}, got {value!r}")
    return int(value) if integer else value


def check_eps(eps, *, allow_zero=False):
    eps = check_positive(eps, "eps", allow_zero=allow_zero)
    if eps > 1:
        raise InvalidParameterError(f"eps must lie in (0, 1], got {eps!r}")
    return float(eps)


def check_probability_array(probs):
    arr = np.asarray(probs, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidParameterError("a distribution must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise InvalidParameterError("probabilities must be finite and non-negative")
    total = float(arr.sum())
    if abs(total - 1.0) > SUM_TOL:
        raise InvalidParameterError(f"probabilities sum to {total!r}, not 1")
    return arr


def check_count_array(counts):
    arr = np.asarray(counts)
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        as_int = arr.astype(np.int64)
        if not np.array_equal(as_int, arr):
            raise InvalidParameterError("counts must be integers")
        arr = as_int
    arr = arr.astype(np.int64, copy=False)
    if arr.ndim < 1:
        raise InvalidParameterError("counts must be at least 1-d")
    if np.any(arr < 0):
        raise InvalidParameterError("counts must be non-negative")
    return arr


def check_same_length(a, b, what="vectors"):
    if np.shape(a)[-1] != np.shape(b)[-1]:
        raise InvalidParameterError(
            f"{what} have different lengths: {np.shape(a)[-1]} != {np.shape(b)[-1]}"
        )


def index_mask(A, n):
    """Turn an index set (None, boolean mask or integer indices) into a mask."""
    if A is None:
        return np.ones(n, dtype=bool)
    arr = np.asarray(A)
    if arr.dtype == bool:
        if arr.shape != (n,):
            raise InvalidParameterError("boolean index mask has the wrong length")
        return arr
    mask = np.zeros(n, dtype=bool)
    if arr.size:
        idx = arr.astype(np.int64).ravel()
        if idx.min() < 0 or idx.max() >= n:
            raise InvalidParameterError("index set is not a subset of [n]")
        mask[idx] = True
    return mask
