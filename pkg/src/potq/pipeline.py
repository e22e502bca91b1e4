"""Prepare/calibrate/convert pipeline around a float GPT.

``prepare`` attaches observer-carrying sites to every weight tensor,
embedding table, and (optionally) linear input named by the quantization
spec. ``calibrate`` feeds weight observers from the tensors themselves and
activation observers from forward passes over real batches. ``convert``
turns every observer into quantization parameters and swaps payloads in.

Simulated mode runs float matmuls against dequantized weights; integer
mode runs power-of-two sites through the shift-accumulate kernel on
affine-quantized activations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from typing import Iterable, Optional, Union

import numpy as np

from .errors import PotqError, SchemeError, UncalibratedError
from .kernels import OpCounter, matmul_f32, shift_linear
from .model import (
    GPTWeights,
    LAYER_LINEAR_SITES,
    TABLE_SITES,
    forward,
    linear_shape,
    linear_site_names,
)
from .checkpoint import GPTConfig
from .quant import (
    Affine,
    Observer,
    PoT,
    PoTConfig,
    PoTWeight,
    QScheme,
    QTensor,
    QuantParams,
    Symmetric,
    compute_params,
    dequantize,
    observe,
    pot_dequantize,
    pot_quantize,
    quantize_affine,
    quantize_symmetric,
    scheme_storage_bits,
)

SIMULATED = "simulated"
INTEGER = "integer"

ACT_SUFFIX = ".act_in"


@dataclass(frozen=True)
class QuantSpec:
    """Per-site scheme selection.

    ``rules`` are (site-name glob, scheme) pairs; the first matching rule
    wins and ``None`` means leave the site in float. ``activations``
    optionally quantizes every linear input with one affine scheme.
    """

    rules: tuple = ()
    activations: Optional[Affine] = None

    def scheme_for(self, site: str) -> Optional[QScheme]:
        for pattern, scheme in self.rules:
            if fnmatchcase(site, pattern):
                return scheme
        return None

    @staticmethod
    def uniform(scheme: Optional[QScheme], activations: Optional[Affine] = None) -> "QuantSpec":
        rules = () if scheme is None else (("*", scheme),)
        return QuantSpec(rules=rules, activations=activations)


@dataclass
class Site:
    """One quantizable location: a weight matrix, a table, or a linear input."""

    name: str
    kind: str  # "weight" | "table" | "activation"
    scheme: QScheme
    numel: int = 0
    observer: Observer = field(default_factory=Observer)
    params: Optional[QuantParams] = None
    payload: Optional[Union[QTensor, PoTWeight]] = None
    deq_cache: Optional[np.ndarray] = None


def _fresh_counters() -> dict:
    return {"linear": OpCounter(), "attn": OpCounter()}


@dataclass
class QuantizedModel:
    weights: GPTWeights
    spec: QuantSpec
    sites: dict[str, Site] = field(default_factory=dict)
    mode: str = SIMULATED
    converted: bool = False
    counters: dict = field(default_factory=_fresh_counters)
    tokens_processed: int = 0

    @property
    def config(self) -> GPTConfig:
        return self.weights.config

    def reset_counters(self) -> None:
        self.counters = _fresh_counters()
        self.tokens_processed = 0

    def ln(self, name: str):
        return self.weights.ln(name)

    def table(self, name: str) -> np.ndarray:
        site = self.sites.get(name)
        if site is not None and self.converted:
            return site.deq_cache
        return self.weights.table(name)

    def _weight_site(self, name: str) -> Optional[Site]:
        site = self.sites.get(name)
        if site is None and name == "lm_head" and self.weights.tied_lm_head:
            return self.sites.get("tok_emb")
        return site

    def _fakequant_activation(self, name: str, x: np.ndarray) -> np.ndarray:
        act = self.sites.get(name + ACT_SUFFIX)
        if act is None:
            return x
        if not self.converted:
            act.observer = observe(act.observer, x)
            return x
        return dequantize(quantize_affine(x, act.params))

    def site_linear(self, name: str, x: np.ndarray, counter: Optional[OpCounter]) -> np.ndarray:
        bias = self.weights.bias(name)
        wsite = self._weight_site(name)
        if wsite is None or not self.converted:
            x = self._fakequant_activation(name, x)
            out = matmul_f32(x, self.weights.linear_weight(name), counter=counter)
            return out if bias is None else out + bias
        if self.mode == INTEGER and isinstance(wsite.payload, PoTWeight):
            act = self.sites.get(name + ACT_SUFFIX)
            if act is None or act.params is None:
                raise UncalibratedError(
                    f"integer mode requires a calibrated activation site for {name!r}"
                )
            xq = quantize_affine(x, act.params)
            w = wsite.payload
            if name == "lm_head" and wsite.name == "tok_emb":
                w = _transpose_pot(w)
            return shift_linear(xq, w, bias=bias, counter=counter)
        x = self._fakequant_activation(name, x)
        deq = wsite.deq_cache
        if name == "lm_head" and wsite.name == "tok_emb":
            deq = deq.T
        out = matmul_f32(x, deq, counter=counter)
        return out if bias is None else out + bias


def _transpose_pot(w: PoTWeight) -> PoTWeight:
    return PoTWeight(
        scale=w.scale,
        exponent=w.exponent.T,
        sign=w.sign.T,
        is_zero=w.is_zero.T,
        config=w.config,
    )


def prepare(config: GPTConfig, weights: GPTWeights, spec: QuantSpec) -> QuantizedModel:
    """Attach empty-observer sites for everything the spec quantizes."""
    model = QuantizedModel(weights=weights, spec=spec)
    table_names = list(TABLE_SITES)
    linear_names = linear_site_names(config)
    if weights.tied_lm_head:
        linear_names.remove("lm_head")  # shares the tok_emb site
    for name in table_names:
        scheme = spec.scheme_for(name)
        if scheme is not None:
            model.sites[name] = Site(
                name=name, kind="table", scheme=scheme,
                numel=weights.table(name).size,
            )
    for name in linear_names:
        scheme = spec.scheme_for(name)
        if scheme is not None:
            model.sites[name] = Site(
                name=name, kind="weight", scheme=scheme,
                numel=weights.linear_weight(name).size,
            )
    if spec.activations is not None:
        for name in linear_site_names(config):
            model.sites[name + ACT_SUFFIX] = Site(
                name=name + ACT_SUFFIX, kind="activation", scheme=spec.activations,
            )
    return model


def calibrate(model: QuantizedModel, batches: Iterable = ()) -> QuantizedModel:
    """Feed every observer: weights from their tensors, activations from
    forward passes over the given token batches."""
    if model.converted:
        raise PotqError("model already converted; calibrate before convert")
    for site in model.sites.values():
        if site.kind == "table":
            site.observer = observe(Observer(), model.weights.table(site.name))
        elif site.kind == "weight":
            site.observer = observe(Observer(), model.weights.linear_weight(site.name))
    for batch in batches:
        rows = np.atleast_2d(np.asarray(batch, dtype=np.int64))
        for row in rows:
            forward(model, row)
    stale = [s.name for s in model.sites.values() if s.observer.count == 0]
    if stale:
        raise UncalibratedError(
            f"uncalibrated site(s) after calibration: {', '.join(sorted(stale))}"
            " (activation sites need at least one batch)"
        )
    model.reset_counters()  # calibration passes do not count toward reports
    return model


def convert(model: QuantizedModel, mode: str = SIMULATED) -> QuantizedModel:
    """Compute parameters for every site and swap quantized payloads in."""
    if mode not in (SIMULATED, INTEGER):
        raise PotqError(f"unknown mode {mode!r}")
    for site in model.sites.values():
        try:
            site.params = compute_params(site.observer, site.scheme)
        except UncalibratedError as exc:
            raise UncalibratedError(f"site {site.name!r}: {exc}") from exc
        if site.kind == "activation":
            continue
        tensor = (
            model.weights.table(site.name)
            if site.kind == "table"
            else model.weights.linear_weight(site.name)
        )
        if isinstance(site.scheme, PoT):
            site.payload = pot_quantize(tensor, site.params.scale, site.scheme.config)
            site.deq_cache = pot_dequantize(site.payload)
        elif isinstance(site.scheme, Symmetric):
            site.payload = quantize_symmetric(tensor, site.params)
            site.deq_cache = dequantize(site.payload)
        elif isinstance(site.scheme, Affine):
            site.payload = quantize_affine(tensor, site.params)
            site.deq_cache = dequantize(site.payload)
        else:
            raise SchemeError(f"site {site.name!r}: unknown scheme {site.scheme!r}")
    if mode == INTEGER:
        for site in model.sites.values():
            if site.kind == "weight" and isinstance(site.payload, PoTWeight):
                act = model.sites.get(site.name + ACT_SUFFIX)
                if act is None:
                    raise UncalibratedError(
                        f"integer mode needs activation quantization for site {site.name!r}"
                    )
                if act.scheme.bits > 16:
                    raise PotqError(
                        f"integer mode caps activations at 16 bits, got {act.scheme.bits}"
                    )
    model.mode = mode
    model.converted = True
    return model


def quantize_model(
    weights: GPTWeights,
    spec: QuantSpec,
    calib_batches: Iterable = (),
    mode: str = SIMULATED,
) -> QuantizedModel:
    """prepare + calibrate + convert in one call."""
    model = prepare(weights.config, weights, spec)
    calibrate(model, calib_batches)
    return convert(model, mode=mode)


def op_report(model: QuantizedModel, tokens_processed: Optional[int] = None) -> dict:
    """Operation and storage accounting for the forwards run so far.

    Memory is reported under both zero-code conventions (reserved code
    point vs. zero folded into the low exponent); the cycle model weighs
    multiplies at 5 cycles and shifts at 1.
    """
    toks = model.tokens_processed if tokens_processed is None else tokens_processed
    if toks <= 0:
        raise PotqError("op_report needs at least one recorded forward pass")
    cfg = model.config

    total_numel = 0
    bits_reserved = 0
    bits_folded = 0
    per_site = {}
    zero_codes = 0
    pot_codes = 0
    acct_names = list(TABLE_SITES) + linear_site_names(cfg)
    if model.weights.tied_lm_head:
        acct_names.remove("lm_head")
    for name in acct_names:
        site = model.sites.get(name)
        if name in TABLE_SITES:
            numel = model.weights.table(name).size
        else:
            numel = model.weights.linear_weight(name).size
        if site is None:
            b_res = b_fold = 32
        else:
            b_res = scheme_storage_bits(site.scheme, fold_zero=False)
            b_fold = scheme_storage_bits(site.scheme, fold_zero=True)
            if isinstance(site.payload, PoTWeight):
                zero_codes += int(np.count_nonzero(site.payload.is_zero))
                pot_codes += site.payload.is_zero.size
        total_numel += numel
        bits_reserved += b_res * numel
        bits_folded += b_fold * numel
        per_site[name] = {
            "numel": int(numel),
            "bits_reserved": int(b_res),
            "bits_folded": int(b_fold),
        }

    lin = model.counters["linear"]
    attn = model.counters["attn"]
    mult_float = toks * sum(
        linear_shape(cfg, n)[0] * linear_shape(cfg, n)[1] for n in linear_site_names(cfg)
    )
    quant_cost = 5 * lin.multiplies + lin.shifts
    float_cost = 5 * mult_float
    report = {
        "tokens_processed": int(toks),
        "weight_numel": int(total_numel),
        "weight_bytes_float": int(total_numel * 4),
        "weight_bits_reserved": int(bits_reserved),
        "weight_bits_folded": int(bits_folded),
        "memory_factor_reserved": 32 * total_numel / bits_reserved,
        "memory_factor_folded": 32 * total_numel / bits_folded,
        "linear_multiplies": int(lin.multiplies),
        "linear_shifts": int(lin.shifts),
        "linear_adds": int(lin.adds),
        "attn_multiplies": int(attn.multiplies),
        "attn_adds": int(attn.adds),
        "float_linear_multiplies": int(mult_float),
        "cycle_cost_ratio": quant_cost / float_cost if float_cost else 0.0,
        "cycle_speedup": float_cost / quant_cost if quant_cost else 0.0,
        "pot_zero_fraction": (zero_codes / pot_codes) if pot_codes else 0.0,
        "sites": per_site,
    }
    return report


def site_summary(model: QuantizedModel) -> list[dict]:
    """Compact per-site record of scheme and parameters, for reports."""
    out = []
    for name in sorted(model.sites):
        site = model.sites[name]
        entry = {"site": name, "kind": site.kind, "scheme": describe_scheme(site.scheme)}
        if site.params is not None:
            entry["scale"] = float(site.params.scale)
            entry["zero_point"] = int(site.params.zero_point)
        if isinstance(site.payload, PoTWeight):
            entry["zero_fraction"] = float(
                np.count_nonzero(site.payload.is_zero) / site.payload.is_zero.size
            )
        out.append(entry)
    return out


_POT_DEFAULTS = PoTConfig(e_min=0, e_max=0)


def describe_scheme(scheme: Optional[QScheme]) -> str:
    if scheme is None:
        return "float"
    if isinstance(scheme, Symmetric):
        return f"sym:{scheme.bits}"
    if isinstance(scheme, Affine):
        return f"affine:{scheme.bits}"
    if isinstance(scheme, PoT):
        cfg = scheme.config
        s = f"pot:e{cfg.e_min}..{cfg.e_max}"
        if cfg.epsilon != _POT_DEFAULTS.epsilon:
            s += f",eps={cfg.epsilon:g}"
        if cfg.zero_threshold_ratio != _POT_DEFAULTS.zero_threshold_ratio:
            s += f",ztr={cfg.zero_threshold_ratio:g}"
        return s
    raise SchemeError(f"unknown scheme {scheme!r}")
