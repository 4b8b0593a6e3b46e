"""Benchmark the compiled scan kernel against the pure-NumPy fallback.

Runs forward and forward+backward at desk scale and at the full-model
scale (batch 40, 10 tokens, 768 channels, 16 states) and prints a table.

    python benchmarks/bench_scan.py [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from retrocap.kernels import available_backends

SHAPES = [
    ("desk", 1, 4, 64, 16),
    ("desk-batch", 8, 4, 64, 16),
    ("paper", 40, 10, 768, 16),
]


def inputs(rng, B, L, D, N, dtype=np.float32):
    return (
        rng.normal(size=(B, L, D)).astype(dtype),
        (np.abs(rng.normal(size=(B, L, D))) * 0.1 + 0.01).astype(dtype),
        rng.normal(size=(B, L, N)).astype(dtype),
        rng.normal(size=(B, L, N)).astype(dtype),
        (-np.abs(rng.normal(size=(D, N))) - 0.1).astype(dtype),
        rng.normal(size=D).astype(dtype),
    )


def bench(fn, repeats):
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    header = f"{'shape':<12} {'B':>3} {'L':>3} {'D':>4} {'N':>3}  " + "".join(
        f"{name + ' fwd':>14}{name + ' f+b':>14}" for name in backends
    )
    print(header)
    print("-" * len(header))

    rng = np.random.default_rng(0)
    for label, B, L, D, N in SHAPES:
        args_fwd = inputs(rng, B, L, D, N)
        row = f"{label:<12} {B:>3} {L:>3} {D:>4} {N:>3}  "
        for name, mod in backends.items():
            y, h = mod.scan_forward(*args_fwd)
            gy = np.ones_like(y)
            t_fwd = bench(lambda m=mod: m.scan_forward(*args_fwd), args.repeats)
            t_both = bench(
                lambda m=mod: m.scan_backward(gy, *args_fwd, h), args.repeats
            ) + t_fwd
            row += f"{t_fwd * 1e3:>11.2f} ms{t_both * 1e3:>11.2f} ms"
        print(row)

    if len(backends) == 2:
        mods = list(backends.values())
        args_fwd = inputs(rng, 8, 4, 64, 16)
        y0, _ = mods[0].scan_forward(*args_fwd)
        y1, _ = mods[1].scan_forward(*args_fwd)
        print(f"\nmax |cython - numpy| on common input: {np.abs(y0 - y1).max():.3e}")


if __name__ == "__main__":
    main()
