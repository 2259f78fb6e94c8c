"""Input checks shared by the estimators and the command line."""
import numbers

import numpy as np
from sklearn.utils import check_array

from .exceptions import DomainError


def check_dividends(X):
    """Return dividend rates from ``X`` as a flat float array.

    Accepts a scalar, a 1-D array or a single-column 2-D array. Values
    must be finite and nonnegative.
    """
    if X is None:
        raise DomainError("dividend rates are required")
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    try:
        arr = check_array(arr, dtype=np.float64, ensure_2d=True)
    except ValueError as exc:
        raise DomainError(str(exc)) from exc
    if arr.shape[1] != 1:
        raise DomainError(f"expected a single column of dividend rates, got {arr.shape[1]} columns")
    arr = arr[:, 0]
    if np.any(arr < 0):
        raise DomainError("dividend rates must be nonnegative")
    return arr


def check_count(name, value, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise DomainError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_positive(name, value, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise DomainError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)
