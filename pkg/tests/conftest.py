import numpy as np
import pytest

from potq.checkpoint import GPTConfig
from potq.model import GPTWeights


def make_weights(cfg: GPTConfig, seed: int = 0, sigma: float = 0.5,
                 tied: bool = False, with_bias: bool = False) -> GPTWeights:
    """Random gaussian weights with the standard tensor layout."""
    rng = np.random.default_rng(seed)
    n = cfg.n_embd

    def norm(*shape):
        return rng.normal(0.0, sigma, shape).astype(np.float32)

    t = {
        "tok_emb": norm(cfg.vocab_size, n),
        "pos_emb": norm(cfg.block_size, n),
        "ln_f.gamma": np.ones(n, np.float32),
        "ln_f.beta": np.zeros(n, np.float32),
    }
    if not tied:
        t["lm_head.weight"] = norm(n, cfg.vocab_size)
    for i in range(cfg.n_layer):
        t[f"layer{i}.ln1.gamma"] = np.ones(n, np.float32)
        t[f"layer{i}.ln1.beta"] = np.zeros(n, np.float32)
        t[f"layer{i}.ln2.gamma"] = np.ones(n, np.float32)
        t[f"layer{i}.ln2.beta"] = np.zeros(n, np.float32)
        t[f"layer{i}.attn_qkv.weight"] = norm(n, 3 * n)
        t[f"layer{i}.attn_proj.weight"] = norm(n, n)
        t[f"layer{i}.mlp_up.weight"] = norm(n, 4 * n)
        t[f"layer{i}.mlp_down.weight"] = norm(4 * n, n)
        if with_bias:
            t[f"layer{i}.attn_qkv.bias"] = norm(3 * n)
            t[f"layer{i}.attn_proj.bias"] = norm(n)
            t[f"layer{i}.mlp_up.bias"] = norm(4 * n)
            t[f"layer{i}.mlp_down.bias"] = norm(n)
    return GPTWeights(config=cfg, tensors=t, tied_lm_head=tied)


@pytest.fixture
def tiny_cfg() -> GPTConfig:
    return GPTConfig(vocab_size=11, block_size=8, n_layer=2, n_head=2, n_embd=16)


@pytest.fixture
def tiny_weights(tiny_cfg) -> GPTWeights:
    return make_weights(tiny_cfg, seed=1)
