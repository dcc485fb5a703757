#!/usr/bin/env python3
"""Benchmark the compiled LSTM kernels against the pure-numpy fallback.

The per-layer loops are timed directly on both paths in one process (the
numpy flavors stay importable even when the compiled bindings are active).
The Monte Carlo ensemble workload goes through the model-level forward,
which uses whichever path was bound at import, so a subprocess with
STORMPRED_NO_NUMBA=1 supplies the fallback number.

Usage: python3 benchmarks/bench_kernels.py
"""

import os
import subprocess
import sys
import time

import numpy as np

from stormpred import kernels
from stormpred.lstm import forward, init_params, sample_masks


def time_op(fn, n_iters):
    fn()  # warm up (JIT compile on the compiled path)
    start = time.time()
    for _ in range(n_iters):
        fn()
    return (time.time() - start) / n_iters


def layer_args(rng, steps=20, n_in=6, nh=32):
    xs = rng.standard_normal((steps, n_in))
    u = rng.standard_normal((4 * nh, n_in)) * 0.1
    w = rng.standard_normal((4 * nh, nh)) * 0.1
    b = rng.standard_normal(4 * nh) * 0.1
    sm_in = np.ones(n_in)
    sm_rec = np.ones(nh)
    return xs, u, w, b, sm_in, sm_rec


def bench_layer_forward(n_iters=2000):
    rng = np.random.default_rng(0)
    args = layer_args(rng)
    fast = time_op(lambda: kernels.lstm_layer_forward(*args), n_iters)
    slow = time_op(lambda: kernels.lstm_layer_forward_numpy(*args), n_iters)
    return fast, slow


def bench_layer_roundtrip(n_iters=1000):
    rng = np.random.default_rng(1)
    xs, u, w, b, sm_in, sm_rec = layer_args(rng)
    dhs = rng.standard_normal((xs.shape[0], w.shape[1]))

    def run(fwd, bwd):
        hs, cs, acts, xms, hms = fwd(xs, u, w, b, sm_in, sm_rec)
        bwd(dhs, u, w, acts, cs, xms, hms, sm_in, sm_rec)

    fast = time_op(
        lambda: run(kernels.lstm_layer_forward, kernels.lstm_layer_backward),
        n_iters)
    slow = time_op(
        lambda: run(kernels.lstm_layer_forward_numpy,
                    kernels.lstm_layer_backward_numpy), n_iters)
    return fast, slow


def bench_mc_ensemble(n_iters=20, n_passes=100, steps=20):
    params = init_params(0)
    rng = np.random.default_rng(2)
    xs = rng.standard_normal((steps, 6))

    def run():
        mask_rng = np.random.default_rng(3)
        for _ in range(n_passes):
            masks = sample_masks(mask_rng, 0.2, 0.1, params)
            forward(xs, params, masks)

    return time_op(run, n_iters)


def main():
    if "--ensemble-only" in sys.argv:
        print(f"{bench_mc_ensemble():.6f}")
        return

    print(f"compiled kernels active: {kernels.USING_NUMBA}")
    print()

    fast, slow = bench_layer_forward()
    print("layer forward (T=20, 6 -> 32):")
    print(f"  bound path : {fast * 1e3:.3f} ms")
    print(f"  numpy path : {slow * 1e3:.3f} ms")
    print(f"  speedup    : {slow / fast:.1f}x")
    print()

    fast, slow = bench_layer_roundtrip()
    print("layer forward+backward (T=20, 6 -> 32):")
    print(f"  bound path : {fast * 1e3:.3f} ms")
    print(f"  numpy path : {slow * 1e3:.3f} ms")
    print(f"  speedup    : {slow / fast:.1f}x")
    print()

    here = time.time()
    ens = bench_mc_ensemble()
    print("MC ensemble, model-level (100 passes, T=20, 6 -> 32 -> 16 -> 2):")
    print(f"  this process ({'numba' if kernels.USING_NUMBA else 'numpy'}): "
          f"{ens * 1e3:.1f} ms")
    if kernels.USING_NUMBA:
        env = dict(os.environ, STORMPRED_NO_NUMBA="1")
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--ensemble-only"],
            capture_output=True, text=True, env=env, check=True)
        other = float(out.stdout.strip())
        print(f"  numpy subprocess: {other * 1e3:.1f} ms")
        print(f"  speedup: {other / ens:.1f}x")
    print(f"\n(ensemble section took {time.time() - here:.0f}s wall)")


if __name__ == "__main__":
    main()
