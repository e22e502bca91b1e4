"""Pure numpy implementations of the two hot kernels.

This is the fallback used when the compiled extension is unavailable. The
shift-accumulate kernel is expressed as an exact int64 matmul against the
expanded weight ``sign * 2**shift``; results are bit-identical to the
extension's explicit shift loop as long as the overflow audit passed.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def matmul_f64acc(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """float32 matmul with float64 accumulation."""
    return (a.astype(np.float64) @ b.astype(np.float64)).astype(np.float32)


def shift_accumulate(
    xq: np.ndarray,
    zero_point: int,
    sign: np.ndarray,
    shift: np.ndarray,
    is_zero: np.ndarray,
    out: np.ndarray,
) -> None:
    """Accumulate ``sum_j sign[j,n] * ((xq[m,j] - zp) << shift[j,n])`` into ``out``.

    ``shift`` holds non-negative per-element shift amounts; zero codes
    contribute nothing.
    """
    x = xq.astype(np.int64) - np.int64(zero_point)
    w = sign.astype(np.int64) << shift.astype(np.int64)
    w[is_zero.astype(bool)] = 0
    np.matmul(x, w, out=out)
