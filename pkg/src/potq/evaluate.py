"""Cross-entropy / perplexity measurement and scheme-comparison sweeps."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import TokenFile, sample_batch
from .errors import PotqError
from .model import forward
from .pipeline import QuantizedModel, QuantSpec, op_report, quantize_model, site_summary
from .tensors import as_f32, require_finite


def cross_entropy(logits, targets) -> float:
    """Mean negative log-likelihood in nats, via stable log-sum-exp."""
    logits = as_f32(logits, "logits")
    require_finite(logits, "logits")
    if logits.ndim != 2:
        raise PotqError(f"logits must be [positions x classes], got shape {logits.shape}")
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (logits.shape[0],):
        raise PotqError(
            f"targets shape {targets.shape} does not match {logits.shape[0]} positions"
        )
    k = logits.shape[1]
    if targets.size and (targets.min() < 0 or targets.max() >= k):
        raise PotqError(f"target id out of range: valid ids are 0..{k - 1}")
    z = logits.astype(np.float64)
    zmax = z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z - zmax).sum(axis=1)) + zmax[:, 0]
    picked = z[np.arange(targets.size), targets]
    return float(math.fsum(lse - picked) / targets.size)


def perplexity(ce: float) -> float:
    if not math.isfinite(ce):
        raise PotqError(f"cross entropy must be finite, got {ce}")
    return math.exp(ce)


@dataclass
class EvalReport:
    ce_mean: float
    ce_std: float
    perplexity: float
    n_batches: int
    batch_size: int
    block_size: int
    seed: int
    quant_spec: str = "float"
    sites: list = field(default_factory=list)
    ops: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "ce_mean": self.ce_mean,
            "ce_std": self.ce_std,
            "perplexity": self.perplexity,
            "n_batches": self.n_batches,
            "batch_size": self.batch_size,
            "block_size": self.block_size,
            "seed": self.seed,
            "quant_spec": self.quant_spec,
            "sites": self.sites,
            "ops": self.ops,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def evaluate(
    model,
    split: TokenFile,
    n_batches: int = 100,
    batch: int = 8,
    block: Optional[int] = None,
    seed: int = 0,
    spec_text: str = "float",
) -> EvalReport:
    """Mean cross-entropy over seeded random batches from ``split``.

    Batch ``i`` uses seed ``seed + i`` so runs are reproducible and sweeps
    over schemes stay paired on identical data.
    """
    if n_batches < 1 or batch < 1:
        raise PotqError("n_batches and batch must be positive")
    block = model.config.block_size if block is None else block
    if block > model.config.block_size:
        raise PotqError(
            f"block {block} exceeds model block size {model.config.block_size}"
        )
    if isinstance(model, QuantizedModel):
        model.reset_counters()
    per_batch: list[float] = []
    for i in range(n_batches):
        inputs, targets = sample_batch(split, block, batch, seed + i)
        row_ce = [
            cross_entropy(forward(model, inputs[r]), targets[r])
            for r in range(inputs.shape[0])
        ]
        per_batch.append(math.fsum(row_ce) / len(row_ce))
    ce_mean = math.fsum(per_batch) / n_batches
    ce_std = float(np.std(np.asarray(per_batch)))
    report = EvalReport(
        ce_mean=ce_mean,
        ce_std=ce_std,
        perplexity=perplexity(ce_mean),
        n_batches=n_batches,
        batch_size=batch,
        block_size=block,
        seed=seed,
        quant_spec=spec_text,
    )
    if isinstance(model, QuantizedModel):
        report.sites = site_summary(model)
        report.ops = op_report(model)
    return report


def sweep(
    weights,
    specs: list[tuple[str, "QuantSpec"]],
    split: TokenFile,
    n_batches: int = 100,
    batch: int = 8,
    block: Optional[int] = None,
    seed: int = 0,
    calib_batches: int = 4,
    mode: str = "simulated",
) -> list[tuple[str, EvalReport | None, Optional[str]]]:
    """Evaluate one spec after another on identical seeded batches.

    Returns (spec text, report, error) triples; a failing spec records its
    error and the sweep continues.
    """
    if not specs:
        raise PotqError("sweep needs at least one quantization spec")
    blk = weights.config.block_size if block is None else block
    calib = [
        sample_batch(split, blk, batch, seed + 10_000 + i)[0]
        for i in range(calib_batches)
    ]
    results: list[tuple[str, EvalReport | None, Optional[str]]] = []
    for spec_text, spec in specs:
        try:
            model = quantize_model(weights, spec, calib_batches=calib, mode=mode)
            report = evaluate(
                model, split, n_batches=n_batches, batch=batch, block=blk,
                seed=seed, spec_text=spec_text,
            )
            results.append((spec_text, report, None))
        except PotqError as exc:
            results.append((spec_text, None, str(exc)))
    return results


def format_sweep_table(results) -> str:
    """Human-readable comparison table."""
    header = f"{'spec':<32} {'ce':>10} {'ppl':>12} {'mem x':>7} {'speedup':>8}"
    lines = [header, "-" * len(header)]
    for spec_text, report, err in results:
        if report is None:
            lines.append(f"{spec_text:<32} failed: {err}")
            continue
        ops = report.ops or {}
        lines.append(
            f"{spec_text:<32} {report.ce_mean:>10.4f} {report.perplexity:>12.3f} "
            f"{ops.get('memory_factor_folded', 1.0):>7.2f} "
            f"{ops.get('cycle_speedup', 1.0):>8.3f}"
        )
    return "\n".join(lines)
