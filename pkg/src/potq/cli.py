"""Command-line interface.

Subcommands: prepare-data, quantize, eval, sweep, generate, report.
Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numeric
audit failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import CharVocab, TokenFile, prepare_dataset, sample_batch
from .errors import AuditError, DataError, FormatError, PotqError
from .evaluate import evaluate, format_sweep_table, sweep
from .model import GPTWeights, forward, generate
from .pipeline import INTEGER, SIMULATED, op_report, quantize_model, site_summary
from .qspec import parse_quant_spec

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_AUDIT = 4


def _add_eval_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--checkpoint", required=True, help="PQCK checkpoint path")
    p.add_argument("--split", required=True, help="PQTK token file to evaluate on")
    p.add_argument("--n-batches", type=int, default=100)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--block", type=int, default=None, help="window length (default: model block size)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--calib-batches", type=int, default=4,
                   help="batches used to calibrate activation observers")
    p.add_argument("--mode", choices=[SIMULATED, INTEGER], default=SIMULATED)
    p.add_argument("--act", default=None, help="activation scheme, e.g. affine:16")
    p.add_argument("--out", default=None, help="write machine-readable JSONL here")


def _quant_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--quant", default="float",
                   help="quant spec, e.g. 'sym:8' or 'lm_head=float;*=pot:e0..7'")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="potq", description=__doc__)
    ap.add_argument("--version", action="version", version=f"potq {__version__}")
    ap.add_argument("--threads", type=int, default=None,
                    help="cap worker threads used by the numeric kernels")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-data", help="tokenize a text corpus into .bin splits")
    p.add_argument("--input", required=True, help="UTF-8 text corpus")
    p.add_argument("--ratios", default="0.8,0.1,0.1", help="train,val,test fractions")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("quantize", help="run prepare/calibrate/convert and report site params")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default=None, help="token file for activation calibration")
    p.add_argument("--calib-batches", type=int, default=4)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=[SIMULATED, INTEGER], default=SIMULATED)
    p.add_argument("--act", default=None)
    p.add_argument("--out", default=None, help="write site summary JSONL here")
    _quant_args(p)

    p = sub.add_parser("eval", help="cross-entropy/perplexity of one quantization spec")
    _add_eval_args(p)
    _quant_args(p)

    p = sub.add_parser("sweep", help="paired-seed comparison of several specs")
    _add_eval_args(p)
    p.add_argument("--specs", required=True,
                   help="semicolon-separated list of quant specs, e.g. 'float;sym:8;pot:e0..7'")

    p = sub.add_parser("generate", help="sample text from a (quantized) checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", default=None, help="vocab.txt for text prompts/output")
    p.add_argument("--prompt", required=True)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--top-k", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default=None, help="token file for activation calibration")
    p.add_argument("--calib-batches", type=int, default=4)
    p.add_argument("--mode", choices=[SIMULATED, INTEGER], default=SIMULATED)
    p.add_argument("--act", default=None)
    p.add_argument("--out", default=None, help="write the sample here instead of stdout")
    _quant_args(p)

    p = sub.add_parser("report", help="op-count and memory accounting for one spec")
    _add_eval_args(p)
    _quant_args(p)
    return ap


def _calibration_batches(args, block: int):
    if args.split is None or args.calib_batches <= 0:
        return []
    tf = TokenFile.load(args.split)
    batch = getattr(args, "batch", 8)
    return [
        sample_batch(tf, block, batch, args.seed + 10_000 + i)[0]
        for i in range(args.calib_batches)
    ]


def _quantized(args, weights: GPTWeights, calib):
    spec = parse_quant_spec(args.quant, activations=args.act)
    return quantize_model(weights, spec, calib_batches=calib, mode=args.mode)


def _write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def cmd_prepare_data(args) -> int:
    ratios = tuple(float(r) for r in args.ratios.split(","))
    paths = prepare_dataset(args.input, args.out, ratios=ratios)
    for name in ("train", "val", "test"):
        tf = TokenFile.load(paths[name])
        print(f"{paths[name]}: {len(tf)} tokens, vocab {tf.vocab_size}")
    print(f"{paths['vocab']}: vocabulary file")
    return EXIT_OK


def cmd_quantize(args) -> int:
    weights = GPTWeights.load(args.checkpoint)
    calib = _calibration_batches(args, weights.config.block_size)
    model = _quantized(args, weights, calib)
    records = site_summary(model)
    for rec in records:
        extras = "".join(
            f" {k}={rec[k]:g}" for k in ("scale", "zero_point", "zero_fraction") if k in rec
        )
        print(f"{rec['site']:<28} {rec['kind']:<10} {rec['scheme']}{extras}")
    if args.out:
        _write_jsonl(args.out, records)
    return EXIT_OK


def cmd_eval(args) -> int:
    weights = GPTWeights.load(args.checkpoint)
    tf = TokenFile.load(args.split)
    block = args.block or weights.config.block_size
    calib = _calibration_batches(args, block)
    model = _quantized(args, weights, calib)
    report = evaluate(
        model, tf, n_batches=args.n_batches, batch=args.batch,
        block=block, seed=args.seed, spec_text=args.quant,
    )
    print(f"quant: {args.quant}")
    print(f"ce_mean: {report.ce_mean:.6f}  ce_std: {report.ce_std:.6f}")
    print(f"perplexity: {report.perplexity:.4f}")
    if args.out:
        _write_jsonl(args.out, [report.to_dict()])
    return EXIT_OK


def cmd_sweep(args) -> int:
    weights = GPTWeights.load(args.checkpoint)
    tf = TokenFile.load(args.split)
    spec_texts = [s.strip() for s in args.specs.split(";") if s.strip()]
    specs = [(t, parse_quant_spec(t, activations=args.act)) for t in spec_texts]
    results = sweep(
        weights, specs, tf, n_batches=args.n_batches, batch=args.batch,
        block=args.block, seed=args.seed, calib_batches=args.calib_batches,
        mode=args.mode,
    )
    print(format_sweep_table(results))
    if args.out:
        _write_jsonl(
            args.out,
            [
                (r.to_dict() if r is not None else {"quant_spec": t, "error": e})
                for t, r, e in results
            ],
        )
    return EXIT_OK


def cmd_generate(args) -> int:
    weights = GPTWeights.load(args.checkpoint)
    calib = _calibration_batches(args, weights.config.block_size)
    model = weights if args.quant == "float" and args.act is None \
        else _quantized(args, weights, calib)
    vocab = CharVocab.load(args.vocab) if args.vocab else None
    if vocab is not None:
        prompt = vocab.encode(args.prompt)
    else:
        prompt = np.array([int(t) for t in args.prompt.split(",")], dtype=np.int64)
    tokens = generate(
        model, prompt, steps=args.steps, temperature=args.temperature,
        top_k=args.top_k, seed=args.seed,
    )
    text = vocab.decode(tokens) if vocab is not None else ",".join(str(t) for t in tokens)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {len(tokens)} tokens to {args.out}")
    else:
        print(text)
    return EXIT_OK


def cmd_report(args) -> int:
    weights = GPTWeights.load(args.checkpoint)
    tf = TokenFile.load(args.split)
    block = args.block or weights.config.block_size
    calib = _calibration_batches(args, block)
    model = _quantized(args, weights, calib)
    inputs, _ = sample_batch(tf, block, args.batch, args.seed)
    for r in range(inputs.shape[0]):
        forward(model, inputs[r])
    rep = op_report(model)
    print(f"quant: {args.quant}")
    print(f"tokens processed: {rep['tokens_processed']}")
    print(f"weight storage: {rep['weight_bytes_float']} float bytes; "
          f"memory factor {rep['memory_factor_folded']:.3f} (folded zero) / "
          f"{rep['memory_factor_reserved']:.3f} (reserved zero)")
    print(f"linear ops: {rep['linear_multiplies']} mult, {rep['linear_shifts']} shift, "
          f"{rep['linear_adds']} add")
    print(f"float-equivalent linear multiplies: {rep['float_linear_multiplies']}")
    print(f"cycle model: cost ratio {rep['cycle_cost_ratio']:.4f}, "
          f"speedup {rep['cycle_speedup']:.3f}")
    print(f"PoT zero-code fraction: {rep['pot_zero_fraction']:.4f}")
    if args.out:
        _write_jsonl(args.out, [rep])
    return EXIT_OK


_COMMANDS = {
    "prepare-data": cmd_prepare_data,
    "quantize": cmd_quantize,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "generate": cmd_generate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise PotqError(f"--threads must be positive, got {args.threads}")
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                return _COMMANDS[args.command](args)
        return _COMMANDS[args.command](args)
    except AuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    except (DataError, FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PotqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
