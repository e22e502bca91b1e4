"""Reference-logit fixtures for cross-implementation checking."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .formats import ModelShape, read_pqck_header, write_fixtures
from .model import CharGPT, TrainConfig


def load_torch_model(ckpt_path) -> CharGPT:
    """Rebuild the torch model from a tied-head PQCK checkpoint."""
    import struct
    import zlib

    with open(ckpt_path, "rb") as f:
        buf = f.read()
    if zlib.crc32(buf[:-4]) & 0xFFFFFFFF != struct.unpack("<I", buf[-4:])[0]:
        raise ValueError("checkpoint checksum failure")
    shape, tied = read_pqck_header(ckpt_path)
    if not tied:
        raise ValueError("fixture emission expects a tied-head checkpoint")

    tensors: dict[str, np.ndarray] = {}
    pos = 32
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<B", buf, pos)
        pos += 1
        dims = struct.unpack_from(f"<{rank}Q", buf, pos)
        pos += 8 * rank
        pos += 1  # dtype code, always float32 here
        n = int(np.prod(dims)) if rank else 1
        tensors[name] = np.frombuffer(buf, dtype="<f4", count=n, offset=pos).reshape(dims).copy()
        pos += 4 * n

    cfg = TrainConfig(vocab_size=shape.vocab_size, block_size=shape.block_size,
                      n_layer=shape.n_layer, n_head=shape.n_head,
                      n_embd=shape.n_embd, dropout=0.0)
    model = CharGPT(cfg)
    state = {
        "wte.weight": tensors["tok_emb"],
        "wpe.weight": tensors["pos_emb"],
        "ln_f.weight": tensors["ln_f.gamma"],
        "ln_f.bias": tensors["ln_f.beta"],
    }
    for i in range(shape.n_layer):
        state[f"blocks.{i}.ln1.weight"] = tensors[f"layer{i}.ln1.gamma"]
        state[f"blocks.{i}.ln1.bias"] = tensors[f"layer{i}.ln1.beta"]
        state[f"blocks.{i}.ln2.weight"] = tensors[f"layer{i}.ln2.gamma"]
        state[f"blocks.{i}.ln2.bias"] = tensors[f"layer{i}.ln2.beta"]
        for site in ("attn_qkv", "attn_proj", "mlp_up", "mlp_down"):
            state[f"blocks.{i}.{site}.weight"] = tensors[f"layer{i}.{site}.weight"].T
            state[f"blocks.{i}.{site}.bias"] = tensors[f"layer{i}.{site}.bias"]
    model.load_state_dict({k: torch.from_numpy(np.ascontiguousarray(v)) for k, v in state.items()})
    model.eval()
    return model


def emit_fixtures(ckpt_path, out_path, n: int = 4, length: int = 16,
                  seed: int = 0) -> Path:
    """Run ``n`` random token sequences through the torch model and store
    the float logits."""
    if length < 1:
        raise ValueError("fixture sequences must be non-empty")
    model = load_torch_model(ckpt_path)
    shape, _ = read_pqck_header(ckpt_path)
    if length > shape.block_size:
        raise ValueError(f"length {length} exceeds block size {shape.block_size}")
    rng = np.random.default_rng(seed)
    fixtures = []
    with torch.no_grad():
        for _ in range(n):
            ids = rng.integers(0, shape.vocab_size, length)
            x = torch.from_numpy(ids.astype(np.int64)).unsqueeze(0)
            logits, _ = model(x)
            fixtures.append((ids.astype(np.uint16), logits[0].numpy()))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_fixtures(out_path, fixtures)
    return out_path
