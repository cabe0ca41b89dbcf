"""Input-validation helpers used by the estimators and pipeline functions."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def as_float_vector(values, name: str = "values", min_len: int = 0) -> np.ndarray:
    """Coerce to a 1-D float64 array and require finite entries."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if arr.size < min_len:
        raise ValidationError(f"{name} needs at least {min_len} entries, got {arr.size}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def as_float_matrix(values, name: str = "X", min_rows: int = 0) -> np.ndarray:
    """Coerce to a 2-D float64 array and require finite entries."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] < min_rows:
        raise ValidationError(f"{name} needs at least {min_rows} rows, got {arr.shape[0]}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def as_bool_vector(values, name: str = "mask") -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype != np.bool_:
        arr = arr.astype(bool)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    return arr


def check_equal_length(a, b, what: str = "sequences") -> None:
    if len(a) != len(b):
        raise ValidationError(f"{what} have mismatched lengths: {len(a)} vs {len(b)}")


def check_positive(value: float, name: str) -> None:
    if not (value > 0 and np.isfinite(value)):
        raise ValidationError(f"{name} must be finite and > 0, got {value}")


def check_non_negative(value: float, name: str) -> None:
    if not (value >= 0 and np.isfinite(value)):
        raise ValidationError(f"{name} must be finite and >= 0, got {value}")


def readonly(arr: np.ndarray) -> np.ndarray:
    """Return an array flagged read-only (shared-safe across workers)."""
    arr = np.asarray(arr)
    arr.setflags(write=False)
    return arr
