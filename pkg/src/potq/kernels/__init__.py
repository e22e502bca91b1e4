"""Numeric kernels with a compiled core and a numpy fallback.

Backend selection happens at import time: if the compiled extension
``potq._core`` built, it becomes the default for the shift-accumulate
kernel while float matmul stays on numpy's BLAS path (which beats a naive
compiled loop). ``set_backend`` forces one stack end to end, which the
benchmark uses to compare them. ``POTQ_BACKEND`` in the environment does
the same.
"""

from __future__ import annotations

import math
import os
from typing import Optional, Union

import numpy as np

from ..errors import AuditError, SchemeError, ShapeError
from ..quant import Affine, PoTWeight, QTensor, dequantize, pot_dequantize
from ..tensors import as_f32, require_2d, require_finite
from . import numpy_backend
from .opcount import OpCounter

try:
    from .. import _core
except ImportError:  # extension not built; numpy everywhere
    _core = None

_BACKENDS = {"numpy": numpy_backend}
if _core is not None:
    _BACKENDS["ext"] = _core

# "auto" routes each kernel to the faster implementation available.
_backend_mode = os.environ.get("POTQ_BACKEND", "auto")
if _backend_mode not in ("auto", *_BACKENDS):
    raise ImportError(f"POTQ_BACKEND={_backend_mode!r} unknown; have {sorted(_BACKENDS)}")


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend() -> str:
    return _backend_mode


def set_backend(name: str) -> None:
    global _backend_mode
    if name not in ("auto", *_BACKENDS):
        raise ValueError(f"unknown backend {name!r}; have {sorted(_BACKENDS)} or 'auto'")
    _backend_mode = name


def _matmul_impl():
    # BLAS wins for float matmul even when the extension is present.
    if _backend_mode == "auto":
        return numpy_backend
    return _BACKENDS[_backend_mode]


def _shift_impl():
    if _backend_mode == "auto":
        return _BACKENDS.get("ext", numpy_backend)
    return _BACKENDS[_backend_mode]


def matmul_f32(a, b, counter: Optional[OpCounter] = None) -> np.ndarray:
    """Row-by-column float32 product with float64 accumulation."""
    a = require_2d(as_f32(a, "a"), "a")
    b = require_2d(as_f32(b, "b"), "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    m, k = a.shape
    n = b.shape[1]
    if counter is not None:
        counter.multiplies += m * k * n
        counter.adds += m * n * max(0, k - 1)
    return _matmul_impl().matmul_f64acc(a, b)


def linear_fakequant(
    x,
    w: Union[PoTWeight, QTensor],
    bias=None,
    counter: Optional[OpCounter] = None,
) -> np.ndarray:
    """Float linear against the dequantized weight (simulated quantization)."""
    if isinstance(w, PoTWeight):
        deq = pot_dequantize(w)
    elif isinstance(w, QTensor):
        deq = dequantize(w)
    else:
        raise SchemeError(f"linear_fakequant needs PoTWeight or QTensor, got {type(w)}")
    out = matmul_f32(x, deq, counter=counter)
    return _add_bias(out, bias, counter)


def audit_shift_overflow(input_bits: int, cfg_span: int, k: int) -> None:
    """Static proof that int64 accumulation cannot overflow."""
    budget = input_bits + cfg_span + math.ceil(math.log2(max(k, 1)))
    if budget > 62:
        raise AuditError(
            f"shift accumulation may overflow: {input_bits} input bits + "
            f"{cfg_span} exponent span + log2({k}) terms exceeds 62-bit budget"
        )


def shift_linear(
    xq: QTensor,
    w: PoTWeight,
    bias=None,
    counter: Optional[OpCounter] = None,
) -> np.ndarray:
    """Integer linear layer: per-weight bit shifts, int64 accumulation, one
    final rescale per output element.

    Exponents are shifted relative to ``e_min`` so every hardware shift is a
    non-negative left shift; the ``2**e_min`` factor folds into the output
    scale.
    """
    if not isinstance(xq, QTensor) or not isinstance(xq.params.scheme, Affine):
        raise SchemeError("shift_linear needs an affine-quantized activation")
    if xq.params.scheme.bits > 16:
        raise AuditError(
            f"shift_linear activations limited to 16 bits, got {xq.params.scheme.bits}"
        )
    xv = xq.values
    if xv.ndim != 2:
        raise ShapeError(f"activations: expected 2-d, got shape {xv.shape}")
    if w.exponent.ndim != 2 or xv.shape[1] != w.exponent.shape[0]:
        raise ShapeError(f"shift_linear shape mismatch: {xv.shape} x {w.shape}")
    m, k = xv.shape
    n = w.exponent.shape[1]
    cfg = w.config
    audit_shift_overflow(xq.params.scheme.bits, cfg.e_max - cfg.e_min, k)
    nz = ~w.is_zero
    if nz.any() and (
        int(w.exponent[nz].min()) < cfg.e_min or int(w.exponent[nz].max()) > cfg.e_max
    ):
        raise AuditError("weight exponent outside the configured clip range")

    shift = (w.exponent.astype(np.int16) - np.int16(cfg.e_min))
    acc = np.empty((m, n), dtype=np.int64)
    _shift_impl().shift_accumulate(
        np.ascontiguousarray(xv, dtype=np.int64),
        int(xq.params.zero_point),
        np.ascontiguousarray(w.sign, dtype=np.int8),
        np.ascontiguousarray(shift, dtype=np.int16),
        np.ascontiguousarray(w.is_zero, dtype=np.uint8),
        acc,
    )
    nnz = w.nonzero_count
    if counter is not None:
        counter.shifts += m * nnz
        counter.adds += m * nnz
        counter.multiplies += 2 * m * n  # per-element rescale by x and w scales

    out_scale = np.float64(xq.params.scale) * np.float64(w.scale) * 2.0 ** cfg.e_min
    out = (acc.astype(np.float64) * out_scale).astype(np.float32)
    return _add_bias(out, bias, counter)


def _add_bias(out: np.ndarray, bias, counter: Optional[OpCounter]) -> np.ndarray:
    if bias is None:
        return out
    bias = as_f32(bias, "bias")
    if bias.shape != (out.shape[-1],):
        raise ShapeError(f"bias shape {bias.shape} does not match output width {out.shape[-1]}")
    if counter is not None:
        counter.adds += out.size
    return out + bias


def layernorm(x, gamma, beta, eps: float = 1e-5) -> np.ndarray:
    """Per-row normalization followed by the affine (gamma, beta) map."""
    x = as_f32(x, "layernorm input").astype(np.float64)
    gamma = as_f32(gamma, "gamma")
    beta = as_f32(beta, "beta")
    if x.shape[-1] != gamma.shape[-1] or x.shape[-1] != beta.shape[-1]:
        raise ShapeError(
            f"layernorm size mismatch: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}"
        )
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    norm = (x - mean) / np.sqrt(var + eps)
    return (norm * gamma + beta).astype(np.float32)


def softmax_rows(x) -> np.ndarray:
    """Row softmax with max subtraction for overflow safety."""
    x = as_f32(x, "softmax input")
    require_finite(x, "softmax input")
    shifted = x.astype(np.float64) - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=-1, keepdims=True)).astype(np.float32)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x) -> np.ndarray:
    """tanh-approximation GELU."""
    x = as_f32(x, "gelu input").astype(np.float64)
    y = 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x ** 3)))
    return y.astype(np.float32)


__all__ = [
    "OpCounter",
    "available_backends",
    "get_backend",
    "set_backend",
    "matmul_f32",
    "linear_fakequant",
    "shift_linear",
    "audit_shift_overflow",
    "layernorm",
    "softmax_rows",
    "gelu",
]
