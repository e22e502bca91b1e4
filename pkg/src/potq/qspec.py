"""Parser for the compact quantization-spec language.

Grammar (sites default to ``*`` when no scope is given)::

    spec     := entry (";" entry)*
    entry    := [glob "="] scheme
    scheme   := "float" | "sym:" bits | "affine:" bits
              | "pot:e" min ".." max ["," opt]*
    opt      := "eps=" float | "ztr=" float

Examples: ``sym:8``, ``pot:e0..4``, ``lm_head=float;*=pot:e0..7,eps=1e-10``.
"""

from __future__ import annotations

import re
from typing import Optional

from .errors import PotqError
from .pipeline import QuantSpec
from .quant import Affine, PoT, PoTConfig, QScheme, Symmetric

_POT_RE = re.compile(r"^pot:e(-?\d+)\.\.(-?\d+)((?:,[a-z]+=[^,]+)*)$")


def parse_scheme(text: str) -> Optional[QScheme]:
    """One scheme term; None means float passthrough."""
    text = text.strip()
    if text == "float":
        return None
    if text.startswith("sym:"):
        return Symmetric(bits=_parse_bits(text[4:]))
    if text.startswith("affine:"):
        return Affine(bits=_parse_bits(text[7:]))
    m = _POT_RE.match(text)
    if m:
        e_min, e_max = int(m.group(1)), int(m.group(2))
        kwargs = {}
        for opt in filter(None, m.group(3).split(",")):
            key, _, val = opt.partition("=")
            if key == "eps":
                kwargs["epsilon"] = float(val)
            elif key == "ztr":
                kwargs["zero_threshold_ratio"] = float(val)
            else:
                raise PotqError(f"unknown PoT option {key!r} in {text!r}")
        return PoT(config=PoTConfig(e_min=e_min, e_max=e_max, **kwargs))
    raise PotqError(
        f"cannot parse scheme {text!r}; expected float, sym:<bits>, "
        "affine:<bits>, or pot:e<min>..<max>[,eps=..][,ztr=..]"
    )


def _parse_bits(text: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise PotqError(f"bad bit width {text!r}") from exc


def parse_quant_spec(text: str, activations: Optional[str] = None) -> QuantSpec:
    """Full spec string, optionally with per-site glob scoping."""
    rules = []
    for entry in filter(None, (e.strip() for e in text.split(";"))):
        if "=" in entry and not entry.startswith("pot:"):
            glob, _, scheme_text = entry.partition("=")
            rules.append((glob.strip(), parse_scheme(scheme_text)))
        else:
            rules.append(("*", parse_scheme(entry)))
    act_scheme = None
    if activations:
        parsed = parse_scheme(activations)
        if parsed is not None and not isinstance(parsed, Affine):
            raise PotqError(f"activation scheme must be affine or float, got {activations!r}")
        act_scheme = parsed
    return QuantSpec(rules=tuple(rules), activations=act_scheme)
