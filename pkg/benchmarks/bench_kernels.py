#!/usr/bin/env python3
"""Benchmark the compiled convolution kernels against the numpy reference.

Times forward and backward passes at the shapes that dominate training and
inference, plus one full training step of the two-stream model under each
backend.  Run after `python setup.py build_ext --inplace` (or a regular
install); without the extension only the reference rows appear.

    python benchmarks/bench_kernels.py [--repeats 30]
"""

import argparse
import time

import numpy as np

from weaktal import kernels
from weaktal import model as M
from weaktal.train import TrainConfig, loss_and_grads

KERNEL_CASES = [
    # (label, batch, length, c_in, c_out, kernel)
    ("train conv1 (batch 16, T=60)", 16, 60, 32, 64, 3),
    ("train conv2 (batch 16, T=60)", 16, 60, 64, 64, 3),
    ("train head  (batch 16, T=60)", 16, 60, 64, 5, 1),
    ("post stream (160 aggregates)", 160, 3, 32, 64, 3),
    ("long video  (T=750)", 1, 750, 64, 64, 3),
]


def time_call(fn, repeats):
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats * 1e3


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    backends = kernels.available_backends()
    print(f"kernel micro-benchmarks ({', '.join(backends)}), times in ms")
    header = f"{'case':<32s}" + "".join(f"{name + ' fwd':>16s}{name + ' bwd':>16s}" for name in backends)
    print(header)
    for label, n, t, ci, co, k in KERNEL_CASES:
        x = rng.standard_normal((n, t, ci))
        w = rng.standard_normal((k, ci, co))
        b = rng.standard_normal(co)
        gy = rng.standard_normal((n, t, co))
        row = f"{label:<32s}"
        for impl in backends.values():
            fwd = time_call(lambda: kernels.conv1d_forward(x, w, b, impl=impl), repeats)
            bwd = time_call(lambda: kernels.conv1d_backward(x, w, gy, impl=impl), repeats)
            row += f"{fwd:16.3f}{bwd:16.3f}"
        print(row)


def bench_training_step(repeats):
    rng = np.random.default_rng(1)
    n, t, d, c, h = 16, 60, 32, 5, 64
    x = rng.standard_normal((n, t, d))
    labels = np.zeros((n, c))
    labels[np.arange(n), rng.integers(0, c, n)] = 1.0
    cfg = TrainConfig(batch_size=n, epochs=1, hidden=h, seed=0)
    params = M.init_model(d, h, c, rng)

    print("\nfull forward+backward step (batch 16, T=60, D=32, H=64, C=5), ms")
    saved_impl, saved_name = kernels._IMPL, kernels._BACKEND
    try:
        for name, impl in kernels.available_backends().items():
            kernels._IMPL, kernels._BACKEND = impl, name
            ms = time_call(lambda: loss_and_grads(x, labels, params, cfg), repeats)
            print(f"  {name:<10s} {ms:8.2f}")
    finally:
        kernels._IMPL, kernels._BACKEND = saved_impl, saved_name


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=30)
    args = parser.parse_args()
    print(f"active backend at import: {kernels.backend()}")
    bench_kernels(args.repeats)
    bench_training_step(max(5, args.repeats // 3))


if __name__ == "__main__":
    main()
