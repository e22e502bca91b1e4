"""Char-level training loop that ends in a PQCK checkpoint."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import torch

from .formats import read_pqtk, write_pqck
from .model import CharGPT, TrainConfig


def _batch(ids: np.ndarray, block: int, batch: int, rng: np.random.Generator,
           device) -> tuple[torch.Tensor, torch.Tensor]:
    starts = rng.integers(0, ids.size - block - 1, size=batch)
    x = np.stack([ids[s:s + block] for s in starts]).astype(np.int64)
    y = np.stack([ids[s + 1:s + block + 1] for s in starts]).astype(np.int64)
    return torch.from_numpy(x).to(device), torch.from_numpy(y).to(device)


@torch.no_grad()
def estimate_loss(model: CharGPT, ids: np.ndarray, block: int, batch: int,
                  iters: int, rng: np.random.Generator, device) -> float:
    model.eval()
    losses = []
    for _ in range(iters):
        x, y = _batch(ids, block, batch, rng, device)
        _, loss = model(x, y)
        losses.append(loss.item())
    model.train()
    return float(np.mean(losses))


def train_char_model(
    data_dir,
    out_path,
    iters: int = 15000,
    lr: float = 1e-3,
    seed: int = 0,
    n_layer: int = 4,
    n_head: int = 4,
    n_embd: int = 128,
    block_size: int = 64,
    batch_size: int = 16,
    dropout: float = 0.1,
    eval_every: int = 500,
    eval_iters: int = 40,
    log=print,
) -> Path:
    """Train on train.bin under ``data_dir`` and write a PQCK checkpoint.

    Aborts (recording the seed) if the loss diverges to NaN.
    """
    data_dir = Path(data_dir)
    vocab_size, train_ids = read_pqtk(data_dir / "train.bin")
    _, val_ids = read_pqtk(data_dir / "val.bin")

    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    device = "cpu"
    cfg = TrainConfig(vocab_size=vocab_size, block_size=block_size,
                      n_layer=n_layer, n_head=n_head, n_embd=n_embd,
                      dropout=dropout)
    model = CharGPT(cfg).to(device)
    opt = torch.optim.AdamW(model.parameters(), lr=lr, betas=(0.9, 0.99),
                            weight_decay=0.1)

    model.train()
    for step in range(iters):
        x, y = _batch(train_ids, block_size, batch_size, rng, device)
        _, loss = model(x, y)
        if not math.isfinite(loss.item()):
            raise RuntimeError(
                f"training diverged (loss={loss.item()}) at step {step}, seed={seed}"
            )
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        if eval_every and (step % eval_every == 0 or step == iters - 1):
            val = estimate_loss(model, val_ids, block_size, batch_size,
                                eval_iters, np.random.default_rng(seed + 1), device)
            log(f"step {step}: train loss {loss.item():.4f}, val loss {val:.4f}")

    train_loss = estimate_loss(model, train_ids, block_size, batch_size,
                               eval_iters, np.random.default_rng(seed + 2), device)
    val_loss = estimate_loss(model, val_ids, block_size, batch_size,
                             eval_iters, np.random.default_rng(seed + 3), device)
    log(f"final: train loss {train_loss:.4f}, val loss {val_loss:.4f}")

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_pqck(out_path, cfg.shape, model.export_tensors(), tied_lm_head=True)
    return out_path
