#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the pure numpy fallback.

Times matmul_f32 and shift_linear on transformer-shaped operands under
each backend and prints the per-call medians. Run from the repo root:

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import statistics
import time

import numpy as np

from potq.kernels import (
    available_backends,
    matmul_f32,
    set_backend,
    shift_linear,
)
from potq.quant import Affine, PoTConfig, PoTWeight, QTensor, QuantParams


def _time(fn, repeats):
    samples = []
    fn()  # warm up
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def bench_matmul(rng, m, k, n, repeats):
    a = rng.normal(0, 1, (m, k)).astype(np.float32)
    b = rng.normal(0, 1, (k, n)).astype(np.float32)
    times = {}
    for backend in available_backends():
        set_backend(backend)
        times[backend] = _time(lambda: matmul_f32(a, b), repeats)
    return times


def bench_shift(rng, m, k, n, repeats):
    cfg = PoTConfig(0, 7)
    xq = QTensor(
        values=rng.integers(-(1 << 15), 1 << 15, (m, k)).astype(np.int64),
        params=QuantParams(scheme=Affine(16), scale=0.01, zero_point=3),
    )
    w = PoTWeight(
        scale=0.02,
        exponent=rng.integers(0, 8, (k, n)).astype(np.int16),
        sign=rng.choice(np.array([-1, 1], np.int8), (k, n)),
        is_zero=rng.random((k, n)) < 0.05,
        config=cfg,
    )
    times = {}
    for backend in available_backends():
        set_backend(backend)
        times[backend] = _time(lambda: shift_linear(xq, w), repeats)
    return times


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=7)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    shapes = [(64, 128, 128), (64, 128, 512), (256, 768, 768)]
    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    header = f"{'kernel':<14} {'m x k x n':<16}" + "".join(f"{b:>12}" for b in backends)
    print(header)
    print("-" * len(header))
    for m, k, n in shapes:
        times = bench_matmul(rng, m, k, n, args.repeats)
        row = "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
        print(f"{'matmul_f32':<14} {f'{m}x{k}x{n}':<16}{row}")
    for m, k, n in shapes:
        times = bench_shift(rng, m, k, n, args.repeats)
        row = "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
        print(f"{'shift_linear':<14} {f'{m}x{k}x{n}':<16}{row}")
    set_backend("auto")
    print("\nthe 'auto' default routes matmul to numpy (BLAS) and the shift "
          "kernel to the compiled core when it is available")


if __name__ == "__main__":
    main()
