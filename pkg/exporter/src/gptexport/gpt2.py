"""Convert a pretrained GPT-2 checkpoint and evaluation tokens into the
toolkit's formats. Needs the ``transformers`` extra and either network
access to the model hub or a local cache."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .formats import ModelShape, write_pqck, write_pqtk
from .manifest import ExportManifest

GPT2_SHAPE = ModelShape(vocab_size=50257, block_size=1024, n_layer=12,
                        n_head=12, n_embd=768)


def convert_state_dict(state: dict) -> dict[str, np.ndarray]:
    """Map HF GPT-2 parameter names onto the checkpoint layout.

    HF's Conv1D already stores weights as [in x out], so projection
    matrices copy through without transposition.
    """
    def grab(name):
        return state[name].detach().cpu().to_dense().float().numpy()

    tensors = {
        "tok_emb": grab("transformer.wte.weight"),
        "pos_emb": grab("transformer.wpe.weight"),
        "ln_f.gamma": grab("transformer.ln_f.weight"),
        "ln_f.beta": grab("transformer.ln_f.bias"),
    }
    i = 0
    while f"transformer.h.{i}.ln_1.weight" in state:
        prefix = f"transformer.h.{i}"
        tensors[f"layer{i}.ln1.gamma"] = grab(f"{prefix}.ln_1.weight")
        tensors[f"layer{i}.ln1.beta"] = grab(f"{prefix}.ln_1.bias")
        tensors[f"layer{i}.ln2.gamma"] = grab(f"{prefix}.ln_2.weight")
        tensors[f"layer{i}.ln2.beta"] = grab(f"{prefix}.ln_2.bias")
        tensors[f"layer{i}.attn_qkv.weight"] = grab(f"{prefix}.attn.c_attn.weight")
        tensors[f"layer{i}.attn_qkv.bias"] = grab(f"{prefix}.attn.c_attn.bias")
        tensors[f"layer{i}.attn_proj.weight"] = grab(f"{prefix}.attn.c_proj.weight")
        tensors[f"layer{i}.attn_proj.bias"] = grab(f"{prefix}.attn.c_proj.bias")
        tensors[f"layer{i}.mlp_up.weight"] = grab(f"{prefix}.mlp.c_fc.weight")
        tensors[f"layer{i}.mlp_up.bias"] = grab(f"{prefix}.mlp.c_fc.bias")
        tensors[f"layer{i}.mlp_down.weight"] = grab(f"{prefix}.mlp.c_proj.weight")
        tensors[f"layer{i}.mlp_down.bias"] = grab(f"{prefix}.mlp.c_proj.bias")
        i += 1
    return tensors


def export_gpt2(
    dest_dir,
    corpus_dir=None,
    model_name: str = "gpt2",
    subset_fraction: float = 0.0005,
    subset_seed: int = 0,
    log=print,
) -> Path:
    """Write gpt2.pqck plus an evaluation token file and the manifest.

    ``corpus_dir`` holds UTF-8 ``.txt`` documents; a seeded uniform sample
    of roughly ``subset_fraction`` of them is tokenized into test.bin.
    Model/tokenizer download failures surface as RuntimeError.
    """
    try:
        from transformers import AutoModelForCausalLM, AutoTokenizer
    except ImportError as exc:
        raise RuntimeError(
            "GPT-2 export needs the 'transformers' package (pip install gptexport[gpt2])"
        ) from exc

    dest_dir = Path(dest_dir)
    dest_dir.mkdir(parents=True, exist_ok=True)
    try:
        model = AutoModelForCausalLM.from_pretrained(model_name)
        tokenizer = AutoTokenizer.from_pretrained(model_name)
    except Exception as exc:
        raise RuntimeError(f"failed to fetch {model_name!r}: {exc}") from exc

    state = dict(model.state_dict())
    tensors = convert_state_dict(state)
    shape = ModelShape(
        vocab_size=model.config.vocab_size,
        block_size=model.config.n_positions,
        n_layer=model.config.n_layer,
        n_head=model.config.n_head,
        n_embd=model.config.n_embd,
    )
    ckpt = dest_dir / "gpt2.pqck"
    write_pqck(ckpt, shape, tensors, tied_lm_head=True)
    log(f"wrote {ckpt} ({shape})")

    manifest = ExportManifest(
        source_model=model_name,
        tokenizer=model_name,
        seeds={"subset": subset_seed},
        subset_seed=subset_seed,
        subset_fraction=subset_fraction,
        notes="documents sampled uniformly with the recorded seed",
    )
    manifest.add_file(ckpt)

    if corpus_dir is not None:
        docs = sorted(Path(corpus_dir).glob("*.txt"))
        if not docs:
            raise RuntimeError(f"no .txt documents under {corpus_dir}")
        rng = np.random.default_rng(subset_seed)
        take = max(1, round(len(docs) * subset_fraction))
        picked = sorted(rng.choice(len(docs), size=take, replace=False))
        ids: list[int] = []
        for idx in picked:
            text = docs[int(idx)].read_text(encoding="utf-8")
            ids.extend(tokenizer.encode(text))
        tokens = dest_dir / "test.bin"
        write_pqtk(tokens, np.asarray(ids, dtype=np.uint16), shape.vocab_size)
        manifest.add_file(tokens)
        log(f"wrote {tokens} ({len(ids)} tokens from {take}/{len(docs)} documents)")

    manifest_path = dest_dir / "manifest.json"
    manifest.write(manifest_path)
    log(f"wrote {manifest_path}")
    return ckpt
