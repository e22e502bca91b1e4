"""GPT weight container, forward pass, and sampling.

The forward pass works for both the float weight container and a quantized
model; the latter supplies its own linear/table lookups (duck-typed via
``site_linear``). Attention score matmuls and the normalization kernels
always run in float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .checkpoint import GPTConfig, read_checkpoint
from .errors import PotqError, ShapeError
from .kernels import OpCounter, gelu, layernorm, matmul_f32
from .tensors import as_f32

LAYER_LINEAR_SITES = ("attn_qkv", "attn_proj", "mlp_up", "mlp_down")
TABLE_SITES = ("tok_emb", "pos_emb")


def linear_shape(config: GPTConfig, site: str) -> tuple[int, int]:
    """Input/output width of a named linear site ([in x out] layout)."""
    n = config.n_embd
    kind = site.rsplit(".", 1)[-1]
    if kind == "attn_qkv":
        return n, 3 * n
    if kind == "attn_proj":
        return n, n
    if kind == "mlp_up":
        return n, 4 * n
    if kind == "mlp_down":
        return 4 * n, n
    if site == "lm_head":
        return n, config.vocab_size
    raise PotqError(f"unknown linear site {site!r}")


def linear_site_names(config: GPTConfig) -> list[str]:
    names = []
    for i in range(config.n_layer):
        names.extend(f"layer{i}.{s}" for s in LAYER_LINEAR_SITES)
    names.append("lm_head")
    return names


def parameter_census(config: GPTConfig) -> dict[str, int]:
    """Closed-form weight counts per architecture component."""
    n = config.n_embd
    census = {
        "token_embedding": config.vocab_size * n,
        "position_embedding": config.block_size * n,
        "attention_per_layer": 4 * n * n,
        "mlp_per_layer": 2 * (n * 4 * n),
        "layernorm_per_layer": 2 * n,
        "output_linear": n * config.vocab_size,
    }
    census["total"] = (
        census["token_embedding"]
        + census["position_embedding"]
        + config.n_layer * (census["attention_per_layer"] + census["mlp_per_layer"])
        + census["output_linear"]
    )
    return census


@dataclass
class GPTWeights:
    """Named float tensors of one transformer, validated against the config."""

    config: GPTConfig
    tensors: dict[str, np.ndarray]
    tied_lm_head: bool = False

    def __post_init__(self):
        cfg = self.config
        n = cfg.n_embd
        expected: dict[str, tuple[int, ...]] = {
            "tok_emb": (cfg.vocab_size, n),
            "pos_emb": (cfg.block_size, n),
            "ln_f.gamma": (n,),
            "ln_f.beta": (n,),
        }
        for i in range(cfg.n_layer):
            expected[f"layer{i}.ln1.gamma"] = (n,)
            expected[f"layer{i}.ln1.beta"] = (n,)
            expected[f"layer{i}.ln2.gamma"] = (n,)
            expected[f"layer{i}.ln2.beta"] = (n,)
            for s in LAYER_LINEAR_SITES:
                expected[f"layer{i}.{s}.weight"] = linear_shape(cfg, s)
        if not self.tied_lm_head:
            expected["lm_head.weight"] = (n, cfg.vocab_size)
        for name, shape in expected.items():
            if name not in self.tensors:
                raise ShapeError(f"missing tensor {name!r}")
            got = self.tensors[name].shape
            if tuple(got) != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {tuple(got)}")

    @classmethod
    def load(cls, path) -> "GPTWeights":
        config, tensors, tied = read_checkpoint(path)
        return cls(config=config, tensors=tensors, tied_lm_head=tied)

    def table(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def linear_weight(self, name: str) -> np.ndarray:
        if name == "lm_head" and self.tied_lm_head:
            return np.ascontiguousarray(self.tensors["tok_emb"].T)
        return self.tensors[name + ".weight"]

    def bias(self, name: str) -> Optional[np.ndarray]:
        return self.tensors.get(name + ".bias")

    def ln(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        return self.tensors[name + ".gamma"], self.tensors[name + ".beta"]

    def site_linear(self, name: str, x: np.ndarray, counter: Optional[OpCounter]) -> np.ndarray:
        out = matmul_f32(x, self.linear_weight(name), counter=counter)
        b = self.bias(name)
        return out if b is None else out + b


def load_checkpoint(path) -> tuple[GPTConfig, GPTWeights]:
    weights = GPTWeights.load(path)
    return weights.config, weights


def _validate_tokens(config: GPTConfig, tokens) -> np.ndarray:
    t = np.asarray(tokens, dtype=np.int64)
    if t.ndim != 1 or t.size == 0:
        raise ShapeError(f"tokens must be a non-empty 1-d sequence, got shape {t.shape}")
    if t.size > config.block_size:
        raise ShapeError(f"sequence length {t.size} exceeds block size {config.block_size}")
    if t.min() < 0 or t.max() >= config.vocab_size:
        raise PotqError(
            f"token id out of range: valid ids are 0..{config.vocab_size - 1}"
        )
    return t


def _attention(q, k, v, n_head: int, counter: Optional[OpCounter]) -> np.ndarray:
    T, C = q.shape
    hd = C // n_head
    qh = q.reshape(T, n_head, hd).transpose(1, 0, 2).astype(np.float64)
    kh = k.reshape(T, n_head, hd).transpose(1, 0, 2).astype(np.float64)
    vh = v.reshape(T, n_head, hd).transpose(1, 0, 2).astype(np.float64)

    scores = qh @ kh.transpose(0, 2, 1) / math.sqrt(hd)
    mask = np.tril(np.ones((T, T), dtype=bool))
    scores = np.where(mask, scores, -np.inf)
    # row-wise stable softmax; exp(-inf) is exactly 0, preserving causality
    scores -= scores.max(axis=-1, keepdims=True)
    att = np.exp(scores)
    att /= att.sum(axis=-1, keepdims=True)
    y = att @ vh
    if counter is not None:
        counter.multiplies += n_head * T * T * (2 * hd + 1)
        counter.adds += 2 * n_head * T * T * max(0, hd - 1)
    return y.transpose(1, 0, 2).reshape(T, C).astype(np.float32)


def forward(model, tokens, counters: Optional[dict] = None) -> np.ndarray:
    """Logits for every position of ``tokens``; causal, deterministic.

    ``model`` is a GPTWeights or a converted QuantizedModel. Counters
    default to the quantized model's own accumulators.
    """
    cfg = model.config
    t = _validate_tokens(cfg, tokens)
    T = t.size
    if counters is None:
        counters = getattr(model, "counters", None)
    c_lin = counters["linear"] if counters else None
    c_attn = counters["attn"] if counters else None

    x = model.table("tok_emb")[t] + model.table("pos_emb")[:T]
    x = as_f32(x, "embeddings")
    for i in range(cfg.n_layer):
        g, b = model.ln(f"layer{i}.ln1")
        h = layernorm(x, g, b)
        qkv = model.site_linear(f"layer{i}.attn_qkv", h, c_lin)
        q, k, v = np.split(qkv, 3, axis=1)
        y = _attention(q, k, v, cfg.n_head, c_attn)
        x = x + model.site_linear(f"layer{i}.attn_proj", y, c_lin)
        g, b = model.ln(f"layer{i}.ln2")
        h = layernorm(x, g, b)
        h = gelu(model.site_linear(f"layer{i}.mlp_up", h, c_lin))
        x = x + model.site_linear(f"layer{i}.mlp_down", h, c_lin)
    g, b = model.ln("ln_f")
    x = layernorm(x, g, b)
    logits = model.site_linear("lm_head", x, c_lin)
    if hasattr(model, "tokens_processed"):
        model.tokens_processed += T
    return logits


def generate(
    model,
    prompt,
    steps: int,
    temperature: float = 1.0,
    top_k: int = 40,
    seed: int = 0,
) -> list[int]:
    """Append ``steps`` sampled tokens to ``prompt``.

    Top-k sampling over softmax(logits / temperature); the context window
    slides once the prompt outgrows the block size. ``top_k == 1`` is
    greedy decoding.
    """
    if temperature <= 0.0:
        raise PotqError(f"temperature must be positive, got {temperature}")
    if top_k < 1:
        raise PotqError(f"top_k must be at least 1, got {top_k}")
    cfg = model.config
    out = list(np.asarray(prompt, dtype=np.int64))
    if not out:
        raise PotqError("prompt must be non-empty")
    rng = np.random.default_rng(seed)
    for _ in range(steps):
        ctx = out[-cfg.block_size:]
        logits = forward(model, ctx)[-1].astype(np.float64)
        if top_k == 1:
            out.append(int(np.argmax(logits)))
            continue
        logits /= temperature
        kth = min(top_k, logits.size)
        keep = np.argpartition(logits, -kth)[-kth:]
        sub = logits[keep] - logits[keep].max()
        probs = np.exp(sub)
        probs /= probs.sum()
        out.append(int(keep[rng.choice(kth, p=probs)]))
    return [int(v) for v in out]
