"""Reference transformer in torch, used for training and fixture logits.

The forward semantics (tanh GELU, layernorm eps 1e-5, causal attention,
learned position table, tied output head) match the inference toolkit; the
exporter transposes linear weights into the row-major [in x out] layout
when writing checkpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .formats import ModelShape


@dataclass
class TrainConfig:
    vocab_size: int
    block_size: int = 64
    n_layer: int = 4
    n_head: int = 4
    n_embd: int = 128
    dropout: float = 0.1

    @property
    def shape(self) -> ModelShape:
        return ModelShape(self.vocab_size, self.block_size, self.n_layer,
                          self.n_head, self.n_embd)


class Block(nn.Module):
    def __init__(self, cfg: TrainConfig):
        super().__init__()
        n = cfg.n_embd
        self.ln1 = nn.LayerNorm(n)
        self.attn_qkv = nn.Linear(n, 3 * n)
        self.attn_proj = nn.Linear(n, n)
        self.ln2 = nn.LayerNorm(n)
        self.mlp_up = nn.Linear(n, 4 * n)
        self.mlp_down = nn.Linear(4 * n, n)
        self.drop = nn.Dropout(cfg.dropout)
        self.n_head = cfg.n_head

    def forward(self, x):
        b, t, n = x.shape
        h = self.ln1(x)
        q, k, v = self.attn_qkv(h).split(n, dim=2)
        hd = n // self.n_head
        q = q.view(b, t, self.n_head, hd).transpose(1, 2)
        k = k.view(b, t, self.n_head, hd).transpose(1, 2)
        v = v.view(b, t, self.n_head, hd).transpose(1, 2)
        att = (q @ k.transpose(-2, -1)) / math.sqrt(hd)
        mask = torch.tril(torch.ones(t, t, dtype=torch.bool, device=x.device))
        att = att.masked_fill(~mask, float("-inf"))
        att = F.softmax(att, dim=-1)
        y = (att @ v).transpose(1, 2).contiguous().view(b, t, n)
        x = x + self.drop(self.attn_proj(y))
        h = self.ln2(x)
        h = F.gelu(self.mlp_up(h), approximate="tanh")
        x = x + self.drop(self.mlp_down(h))
        return x


class CharGPT(nn.Module):
    def __init__(self, cfg: TrainConfig):
        super().__init__()
        self.cfg = cfg
        self.wte = nn.Embedding(cfg.vocab_size, cfg.n_embd)
        self.wpe = nn.Embedding(cfg.block_size, cfg.n_embd)
        self.drop = nn.Dropout(cfg.dropout)
        self.blocks = nn.ModuleList(Block(cfg) for _ in range(cfg.n_layer))
        self.ln_f = nn.LayerNorm(cfg.n_embd)
        self.apply(self._init)
        for name, p in self.named_parameters():
            if name.endswith("attn_proj.weight") or name.endswith("mlp_down.weight"):
                nn.init.normal_(p, 0.0, 0.02 / math.sqrt(2 * cfg.n_layer))

    @staticmethod
    def _init(module):
        if isinstance(module, nn.Linear):
            nn.init.normal_(module.weight, 0.0, 0.02)
            if module.bias is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, nn.Embedding):
            nn.init.normal_(module.weight, 0.0, 0.02)

    def forward(self, idx, targets=None):
        b, t = idx.shape
        pos = torch.arange(t, device=idx.device)
        x = self.drop(self.wte(idx) + self.wpe(pos))
        for block in self.blocks:
            x = block(x)
        x = self.ln_f(x)
        logits = x @ self.wte.weight.t()  # tied output head
        if targets is None:
            return logits, None
        loss = F.cross_entropy(logits.view(-1, logits.size(-1)), targets.reshape(-1))
        return logits, loss

    def export_tensors(self) -> dict:
        """Named float32 arrays in the checkpoint's [in x out] layout."""
        t = {
            "tok_emb": self.wte.weight,
            "pos_emb": self.wpe.weight,
            "ln_f.gamma": self.ln_f.weight,
            "ln_f.beta": self.ln_f.bias,
        }
        for i, blk in enumerate(self.blocks):
            t[f"layer{i}.ln1.gamma"] = blk.ln1.weight
            t[f"layer{i}.ln1.beta"] = blk.ln1.bias
            t[f"layer{i}.ln2.gamma"] = blk.ln2.weight
            t[f"layer{i}.ln2.beta"] = blk.ln2.bias
            for site in ("attn_qkv", "attn_proj", "mlp_up", "mlp_down"):
                lin = getattr(blk, site)
                t[f"layer{i}.{site}.weight"] = lin.weight.t()
                t[f"layer{i}.{site}.bias"] = lin.bias
        return {
            name: v.detach().cpu().to(torch.float32).contiguous().numpy()
            for name, v in t.items()
        }
