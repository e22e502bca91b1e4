"""Command-line entry point for the exporter."""

from __future__ import annotations

import argparse
import sys

from .fixtures import emit_fixtures
from .gpt2 import export_gpt2
from .manifest import ExportManifest, verify_manifest
from .train import train_char_model


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gptexport", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-char", help="train the char-level model and export it")
    p.add_argument("--data", required=True, help="directory with train.bin/val.bin")
    p.add_argument("--out", required=True, help="checkpoint path (.pqck)")
    p.add_argument("--iters", type=int, default=15000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-layer", type=int, default=4)
    p.add_argument("--n-head", type=int, default=4)
    p.add_argument("--n-embd", type=int, default=128)
    p.add_argument("--block-size", type=int, default=64)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--dropout", type=float, default=0.1)

    p = sub.add_parser("export-gpt2", help="convert a pretrained GPT-2 to PQCK")
    p.add_argument("--dest", required=True)
    p.add_argument("--corpus", default=None, help="directory of .txt documents to sample")
    p.add_argument("--model", default="gpt2")
    p.add_argument("--fraction", type=float, default=0.0005)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("emit-fixtures", help="store reference logits for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--length", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--manifest", default=None, help="manifest to append the fixture CRC to")

    p = sub.add_parser("verify-manifest", help="recheck CRCs of exported files")
    p.add_argument("--manifest", required=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train-char":
            train_char_model(
                args.data, args.out, iters=args.iters, lr=args.lr, seed=args.seed,
                n_layer=args.n_layer, n_head=args.n_head, n_embd=args.n_embd,
                block_size=args.block_size, batch_size=args.batch_size,
                dropout=args.dropout,
            )
        elif args.command == "export-gpt2":
            export_gpt2(args.dest, corpus_dir=args.corpus, model_name=args.model,
                        subset_fraction=args.fraction, subset_seed=args.seed)
        elif args.command == "emit-fixtures":
            path = emit_fixtures(args.checkpoint, args.out, n=args.n,
                                 length=args.length, seed=args.seed)
            print(f"wrote {path}")
            if args.manifest:
                manifest = ExportManifest.load(args.manifest)
                manifest.add_file(path)
                manifest.write(args.manifest)
        elif args.command == "verify-manifest":
            problems = verify_manifest(args.manifest)
            for p in problems:
                print(p, file=sys.stderr)
            return 1 if problems else 0
    except (RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
