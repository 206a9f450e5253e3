"""Input validation helpers and the package exception types."""

import numbers

import numpy as np


class ConfigurationError(ValueError):
    """Raised when a combination of settings cannot be used together."""


class DomainError(ValueError):
    """Raised when a point lies outside the domain of a function."""


class PreconditionError(ValueError):
    """Raised when an operation's precondition on its arguments fails.

    Extra keyword arguments are kept as attributes so callers can report
    the computed quantities (for instance the first admissible iteration).
    """

    def __init__(self, message, **info):
        super().__init__(message)
        self.info = info
        for key, value in info.items():
            setattr(self, key, value)


def check_vector(x, n=None, name="x"):
    """Return ``x`` as a finite 1-D float array, optionally of length ``n``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{name} has dimension {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_points(X, n=None, name="X"):
    """Return ``X`` as a float array whose last axis has length ``n``."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 0:
        raise ValueError(f"{name} must have at least one dimension")
    if n is not None and arr.shape[-1] != n:
        raise ValueError(f"{name} has dimension {arr.shape[-1]}, expected {n}")
    return arr


def check_scalar(value, name, *, min_val=None, max_val=None,
                 include_min=True, include_max=True):
    """Validate a real scalar against optional bounds and return it as float."""
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    if min_val is not None:
        if value < min_val or (not include_min and value == min_val):
            op = ">=" if include_min else ">"
            raise ValueError(f"{name} must be {op} {min_val}, got {value}")
    if max_val is not None:
        if value > max_val or (not include_max and value == max_val):
            op = "<=" if include_max else "<"
            raise ValueError(f"{name} must be {op} {max_val}, got {value}")
    return value


def check_count(value, name, *, min_val=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < min_val:
        raise ValueError(f"{name} must be >= {min_val}, got {value}")
    return int(value)


class ScanLimitError(RuntimeError):
    """Raised when a forward scan reaches its iteration cap unresolved."""

    def __init__(self, message, **info):
        super().__init__(message)
        self.info = info
        for key, value in info.items():
            setattr(self, key, value)
