"""Helpers for the float32 ndarray values that flow through the toolkit.

Tensors are plain numpy arrays: row-major, rank 3 or less, float32. These
helpers centralize the entry checks that every numeric operation relies on.
"""

from __future__ import annotations

import numpy as np

from .errors import PotqError, ShapeError

MAX_RANK = 3


def as_f32(x, name: str = "tensor") -> np.ndarray:
    """Coerce ``x`` to a C-contiguous float32 array of rank <= 3."""
    arr = np.ascontiguousarray(x, dtype=np.float32)
    if arr.ndim > MAX_RANK:
        raise ShapeError(f"{name}: rank {arr.ndim} exceeds maximum {MAX_RANK}")
    return arr


def require_finite(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    """Reject arrays containing NaN or Inf."""
    if not np.all(np.isfinite(x)):
        bad = int(np.count_nonzero(~np.isfinite(x)))
        raise PotqError(f"{name}: {bad} non-finite value(s) (NaN/Inf) in input")
    return x


def require_2d(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    if x.ndim != 2:
        raise ShapeError(f"{name}: expected a 2-d array, got shape {x.shape}")
    return x
