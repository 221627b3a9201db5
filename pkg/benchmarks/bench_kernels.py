#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the NumPy fallback.

Times the hot operations (matmul at training shapes, valid conv2d) and a
short end-to-end training burst under each backend, and checks that the two
agree numerically. Run after building the extension:

    python benchmarks/bench_kernels.py
"""

from __future__ import annotations

import time

import numpy as np

from motifhead import kernels


def _time(fn, *args, repeats: int = 5, warmup: int = 1) -> float:
    for _ in range(warmup):
        fn(*args)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_matmul(impls: dict[str, object]) -> None:
    rng = np.random.default_rng(0)
    shapes = [(256, 64, 256), (256, 1024, 256), (256, 256, 20)]
    print("\nmatmul (best of 5, seconds; GFLOP/s in parens)")
    for m, k, n in shapes:
        a = rng.standard_normal((m, k))
        b = rng.standard_normal((k, n))
        flops = 2.0 * m * k * n
        row = [f"  {m}x{k} @ {k}x{n}:"]
        results = {}
        for name, impl in impls.items():
            dt = _time(impl.matmul, a, b)
            results[name] = impl.matmul(a, b)
            row.append(f"{name} {dt * 1e3:8.3f} ms ({flops / dt / 1e9:6.2f})")
        print(" ".join(row))
        names = list(results)
        if len(names) == 2:
            diff = np.max(np.abs(results[names[0]] - results[names[1]]))
            print(f"    max abs cross-backend diff: {diff:.3e}")


def bench_conv(impls: dict[str, object]) -> None:
    rng = np.random.default_rng(1)
    cases = [((256, 13, 20), (16, 256, 3, 3)), ((64, 13, 20), (32, 64, 5, 5))]
    print("\nconv2d_valid (best of 5, seconds)")
    for grid_shape, bank_shape in cases:
        x = rng.standard_normal(grid_shape)
        w = rng.standard_normal(bank_shape)
        row = [f"  grid {grid_shape} bank {bank_shape}:"]
        results = {}
        for name, impl in impls.items():
            dt = _time(impl.conv2d_valid, x, w)
            results[name] = impl.conv2d_valid(x, w)
            row.append(f"{name} {dt * 1e3:8.3f} ms")
        print(" ".join(row))
        names = list(results)
        if len(names) == 2:
            diff = np.max(np.abs(results[names[0]] - results[names[1]]))
            print(f"    max abs cross-backend diff: {diff:.3e}")


def bench_training_burst() -> None:
    """Forward+backward+Adam on the reference head shape, per backend."""
    import subprocess
    import sys

    code = r"""
import time
import numpy as np
from motifhead import kernels
from motifhead.adam import AdamState, adam_step
from motifhead.heads import HeadConfig, forward_batch, backward, init_params
from motifhead.losses import LossConfig, batch_loss_and_grad
from motifhead.manifest import AnnotationRecord

rng = np.random.default_rng(7)
config = HeadConfig(input_dim=1024, hidden_dims=(256,), output_dim=20)
params = init_params(config, seed=0)
state = AdamState.for_params(params.tensors())
x = rng.standard_normal((256, 1024))
anns = [AnnotationRecord(f"i{i}", frozenset({int(rng.integers(20))})) for i in range(256)]
loss_cfg = LossConfig()
t0 = time.perf_counter()
steps = 30
for _ in range(steps):
    logits, trace = forward_batch(params, x)
    loss, dlogits = batch_loss_and_grad(logits, anns, loss_cfg)
    grads = backward(params, trace, dlogits)
    adam_step(params.tensors(), grads.tensors(), state)
dt = (time.perf_counter() - t0) / steps
print(f"  {kernels.BACKEND}: {dt * 1e3:.2f} ms per 256-image step "
      f"(final loss {loss:.4f})")
"""
    print("\ntraining step, 1024 -> 256 -> 20 head, batch 256", flush=True)
    for backend in ("cython", "numpy"):
        subprocess.run([sys.executable, "-c", code],
                       env={**__import__("os").environ,
                            "MOTIFHEAD_KERNELS": backend},
                       check=False)


def main() -> None:
    impls = kernels.backends()
    print(f"available backends: {', '.join(impls)} (selected: {kernels.BACKEND})")
    if "cython" not in impls:
        print("compiled extension not built; benchmarking the fallback only")
    bench_matmul(impls)
    bench_conv(impls)
    if "cython" in impls:
        bench_training_burst()


if __name__ == "__main__":
    main()
