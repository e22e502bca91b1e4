"""Quantization codecs and calibration observers.

Three schemes are supported:

* symmetric integers, ``q = round(x / scale)`` with zero offset (weights)
* affine integers, ``q = round(x / scale) + zero_point`` (activations)
* power-of-two (PoT), where each stored value is ``sign * 2**e * scale``
  with a small integer exponent, so multiplication by a weight reduces to
  a bit shift

All rounding is half-to-even. Codecs are pure functions on immutable
inputs; observers are value types merged pairwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import PotqError, SchemeError, UncalibratedError
from .tensors import as_f32, require_finite

# Floor applied to ranges in compute_params so degenerate (all-zero)
# calibration data still yields a positive scale.
EPSILON_FLOOR = 1e-10


@dataclass(frozen=True)
class Symmetric:
    bits: int

    def __post_init__(self):
        _check_bits(self.bits)


@dataclass(frozen=True)
class Affine:
    bits: int

    def __post_init__(self):
        _check_bits(self.bits)


@dataclass(frozen=True)
class PoTConfig:
    """Exponent clip range and stability knobs for PoT quantization.

    ``epsilon`` clamps the argument of the base-2 logarithm; values whose
    magnitude falls below ``zero_threshold_ratio * 2**e_min`` (relative to
    the scale) are stored as an explicit zero code.
    """

    e_min: int
    e_max: int
    zero_threshold_ratio: float = 0.5
    epsilon: float = 1e-12

    def __post_init__(self):
        if self.e_max < self.e_min:
            raise PotqError(f"e_max {self.e_max} < e_min {self.e_min}")
        if not (0.0 < self.zero_threshold_ratio <= 1.0):
            raise PotqError(
                f"zero_threshold_ratio must be in (0, 1], got {self.zero_threshold_ratio}"
            )
        if self.epsilon <= 0.0:
            raise PotqError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def n_levels(self) -> int:
        return self.e_max - self.e_min + 1


@dataclass(frozen=True)
class PoT:
    config: PoTConfig


QScheme = Union[Symmetric, Affine, PoT]


def _check_bits(bits: int) -> None:
    if not (2 <= bits <= 32):
        raise PotqError(f"bit width must be in 2..32, got {bits}")


def int_range(bits: int, scheme: str) -> tuple[int, int]:
    """Representable signed range: symmetric is +/-(2**(b-1)-1), affine is
    the full two's-complement range."""
    if scheme == "symmetric":
        hi = (1 << (bits - 1)) - 1
        return -hi, hi
    return -(1 << (bits - 1)), (1 << (bits - 1)) - 1


@dataclass(frozen=True)
class QuantParams:
    scheme: QScheme
    scale: float
    zero_point: int = 0

    def __post_init__(self):
        if not (self.scale > 0.0):
            raise PotqError(f"scale must be positive, got {self.scale}")
        if not isinstance(self.scheme, Affine) and self.zero_point != 0:
            raise PotqError("zero_point must be 0 for non-affine schemes")
        if isinstance(self.scheme, Affine):
            lo, hi = int_range(self.scheme.bits, "affine")
            if not (lo <= self.zero_point <= hi):
                raise PotqError(
                    f"zero_point {self.zero_point} outside {self.scheme.bits}-bit range"
                )


@dataclass(frozen=True)
class QTensor:
    """Integer-coded tensor (symmetric or affine) plus its parameters."""

    values: np.ndarray  # int64 storage; values fit the scheme's bit range
    params: QuantParams

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape


@dataclass(frozen=True)
class PoTWeight:
    """Per-tensor scale plus per-element (zero flag, sign, exponent) codes."""

    scale: float
    exponent: np.ndarray  # int16
    sign: np.ndarray  # int8, +1 or -1 (unspecified where is_zero)
    is_zero: np.ndarray  # bool
    config: PoTConfig

    @property
    def shape(self) -> tuple[int, ...]:
        return self.exponent.shape

    @property
    def nonzero_count(self) -> int:
        return int(self.is_zero.size - np.count_nonzero(self.is_zero))


@dataclass(frozen=True)
class Observer:
    """Running min/max statistic for one tensor site."""

    seen_min: float = np.inf
    seen_max: float = -np.inf
    count: int = 0


def observe(obs: Observer, x) -> Observer:
    """Fold the min/max of ``x`` into ``obs`` and bump the element count."""
    arr = as_f32(x, "observe input")
    require_finite(arr, "observe input")
    if arr.size == 0:
        return obs
    return Observer(
        seen_min=min(obs.seen_min, float(arr.min())),
        seen_max=max(obs.seen_max, float(arr.max())),
        count=obs.count + arr.size,
    )


def merge_observers(a: Observer, b: Observer) -> Observer:
    """Pairwise merge; associative and commutative."""
    return Observer(
        seen_min=min(a.seen_min, b.seen_min),
        seen_max=max(a.seen_max, b.seen_max),
        count=a.count + b.count,
    )


def compute_params(obs: Observer, scheme: QScheme) -> QuantParams:
    """Turn observed min/max into scale/zero-point for the given scheme."""
    if obs.count == 0:
        raise UncalibratedError("uncalibrated observer: no values seen")
    if isinstance(scheme, Symmetric):
        absmax = max(abs(obs.seen_min), abs(obs.seen_max), EPSILON_FLOOR)
        qmax = (1 << (scheme.bits - 1)) - 1
        return QuantParams(scheme=scheme, scale=absmax / qmax, zero_point=0)
    if isinstance(scheme, Affine):
        # Extend the range to cover 0.0 so the zero code is always
        # representable and real zero dequantizes exactly.
        lo = min(obs.seen_min, 0.0)
        hi = max(obs.seen_max, 0.0)
        span = max(hi - lo, EPSILON_FLOOR)
        scale = span / ((1 << scheme.bits) - 1)
        qmin, qmax = int_range(scheme.bits, "affine")
        zp = int(np.rint(-lo / scale)) + qmin
        zp = max(qmin, min(qmax, zp))
        return QuantParams(scheme=scheme, scale=scale, zero_point=zp)
    if isinstance(scheme, PoT):
        absmax = max(abs(obs.seen_min), abs(obs.seen_max), EPSILON_FLOOR)
        # Anchor the largest observed magnitude on the top power level.
        scale = absmax / float(2.0 ** scheme.config.e_max)
        return QuantParams(scheme=scheme, scale=scale, zero_point=0)
    raise SchemeError(f"unknown scheme {scheme!r}")


def quantize_symmetric(x, p: QuantParams) -> QTensor:
    if not isinstance(p.scheme, Symmetric):
        raise SchemeError(f"quantize_symmetric needs Symmetric params, got {p.scheme!r}")
    arr = as_f32(x, "quantize input")
    require_finite(arr, "quantize input")
    qmin, qmax = int_range(p.scheme.bits, "symmetric")
    q = np.rint(arr.astype(np.float64) / p.scale)
    q = np.clip(q, qmin, qmax).astype(np.int64)
    return QTensor(values=q, params=p)


def quantize_affine(x, p: QuantParams) -> QTensor:
    if not isinstance(p.scheme, Affine):
        raise SchemeError(f"quantize_affine needs Affine params, got {p.scheme!r}")
    arr = as_f32(x, "quantize input")
    require_finite(arr, "quantize input")
    qmin, qmax = int_range(p.scheme.bits, "affine")
    q = np.rint(arr.astype(np.float64) / p.scale) + p.zero_point
    q = np.clip(q, qmin, qmax).astype(np.int64)
    return QTensor(values=q, params=p)


def dequantize(q: QTensor, dtype=np.float32) -> np.ndarray:
    """Invert integer coding: ``(q - zero_point) * scale``."""
    return ((q.values - q.params.zero_point) * np.float64(q.params.scale)).astype(dtype)


def pot_quantize(x, scale: float, cfg: PoTConfig) -> PoTWeight:
    """Round ``|x| / scale`` to the nearest power of two in the log domain.

    Magnitudes below ``zero_threshold_ratio * 2**e_min`` map to the explicit
    zero code; everything else gets ``clip(rint(log2(max(r, epsilon))))``.
    """
    if not (scale > 0.0):
        raise PotqError(f"scale must be positive, got {scale}")
    arr = as_f32(x, "pot input")
    require_finite(arr, "pot input")
    r = np.abs(arr.astype(np.float64)) / scale
    is_zero = r < cfg.zero_threshold_ratio * (2.0 ** cfg.e_min)
    e = np.rint(np.log2(np.maximum(r, cfg.epsilon)))
    e = np.clip(e, cfg.e_min, cfg.e_max).astype(np.int16)
    sign = np.where(arr < 0, -1, 1).astype(np.int8)
    return PoTWeight(scale=float(scale), exponent=e, sign=sign, is_zero=is_zero, config=cfg)


def pot_dequantize(w: PoTWeight, dtype=np.float32) -> np.ndarray:
    """Expand codes back to ``sign * 2**e * scale`` (0 for zero codes)."""
    vals = w.sign.astype(np.float64) * np.exp2(w.exponent.astype(np.float64)) * w.scale
    vals[w.is_zero] = 0.0
    return vals.astype(dtype)


def pot_storage_bits(cfg: PoTConfig, fold_zero: bool = False) -> int:
    """Per-weight storage cost in bits: one sign bit plus the exponent field.

    By default the zero code is a reserved extra code point; with
    ``fold_zero`` it shares the saturated low exponent, which is the
    accounting that makes an 8-level exponent range cost 4 bits total.
    """
    codes = cfg.n_levels if fold_zero else cfg.n_levels + 1
    return 1 + (codes - 1).bit_length()


def scheme_storage_bits(scheme: QScheme, fold_zero: bool = False) -> int:
    """Stored bits per element for any scheme (32 means unquantized float)."""
    if isinstance(scheme, (Symmetric, Affine)):
        return scheme.bits
    if isinstance(scheme, PoT):
        return pot_storage_bits(scheme.config, fold_zero=fold_zero)
    raise SchemeError(f"unknown scheme {scheme!r}")
