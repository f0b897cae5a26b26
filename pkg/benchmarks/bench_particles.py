#!/usr/bin/env python3
"""Benchmark the particle hot kernels: numba JIT vs pure numpy.

These are the only non-FFT hot loops in the package (drift interpolation at
particle positions and cloud-in-cell deposits); the PDE path is FFT-bound
and identical on both backends.

Usage:
    python benchmarks/bench_particles.py
    python benchmarks/bench_particles.py --sizes 1000 10000 100000 --output results.json
"""

import argparse
import json
import time

import numpy as np

from mfgflow import _kernels
from mfgflow.spectral import Grid


def time_call(func, *args, repeats=5):
    func(*args)  # warm-up / JIT compile
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        func(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench(n_particles, J=256, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for dim in (1, 2):
        g = Grid(dim, 10.0, J if dim == 1 else 64)
        pos = rng.uniform(-g.L, g.L, (n_particles, dim))
        field = rng.standard_normal(g.shape)
        if dim == 1:
            pairs = [
                ("interp", _kernels.interp_1d, _kernels.interp_1d_numpy, (field, pos[:, 0], g.L, g.h)),
                ("deposit", _kernels.deposit_1d, _kernels.deposit_1d_numpy, (pos[:, 0], g.L, g.h, g.J)),
            ]
        else:
            pairs = [
                ("interp", _kernels.interp_2d, _kernels.interp_2d_numpy, (field, pos, g.L, g.h)),
                ("deposit", _kernels.deposit_2d, _kernels.deposit_2d_numpy, (pos, g.L, g.h, g.J)),
            ]
        for name, active, fallback, args in pairs:
            t_active = time_call(active, *args)
            t_numpy = time_call(fallback, *args)
            rows.append(
                {
                    "kernel": f"{name}_{dim}d",
                    "n": n_particles,
                    "active_backend": "numba" if _kernels.NUMBA_ACTIVE else "numpy",
                    "active_s": t_active,
                    "numpy_s": t_numpy,
                    "speedup": t_numpy / t_active if t_active > 0 else float("nan"),
                }
            )
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[1000, 10000, 100000])
    ap.add_argument("--output", default=None, help="write results as JSON")
    args = ap.parse_args()

    print(f"numba active: {_kernels.NUMBA_ACTIVE} (MFGFLOW_NUMBA=0 forces the numpy path)")
    all_rows = []
    for n in args.sizes:
        all_rows.extend(bench(n))
    header = f"{'kernel':<12} {'N':>8} {'active':>10} {'numpy':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for r in all_rows:
        print(
            f"{r['kernel']:<12} {r['n']:>8} {r['active_s'] * 1e3:>9.3f}ms "
            f"{r['numpy_s'] * 1e3:>9.3f}ms {r['speedup']:>7.1f}x"
        )
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(all_rows, fh, indent=1)
        print(f"written: {args.output}")


if __name__ == "__main__":
    main()
