"""Compiled kernel vs numpy fallback on the lattice head.

    python3 benchmarks/bench_pole_sums.py [--points N] [--repeat R]
"""
import argparse
import time

import numpy as np

from escapedim._backend import get_backend
from escapedim.polefield import lattice_power
from escapedim.polefield.evaluation import _classes


def run(kernel, z, classes, repeat, threads):
    zr, zi = np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag)
    skip = np.full(z.size, -1, dtype=np.int64)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        for m, ar, ai, br, bi, _ in classes:
            f, df = kernel.pole_sums(zr, zi, ar, ai, br, bi, m, skip, threads)
        best = min(best, time.perf_counter() - t0)
    return best, f, df


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--points", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    field = lattice_power(3.0, 1)
    classes = _classes(field)
    rng = np.random.default_rng(0)
    z = 150 * (rng.standard_normal(args.points) + 1j * rng.standard_normal(args.points))
    terms = args.points * len(field)
    print(f"{args.points} points x {len(field)} poles = {terms:.3g} terms")
    results = {}
    for name in ("python", "compiled"):
        try:
            kernel = get_backend(name)
        except ImportError:
            print(f"{name:9s} unavailable")
            continue
        t, f, df = run(kernel, z, classes, args.repeat, args.threads)
        results[name] = (f, df)
        print(f"{name:9s} {t:8.3f} s  {1e9 * t / terms:7.2f} ns/term")
    if len(results) == 2:
        (f0, d0), (f1, d1) = results["python"], results["compiled"]
        err = max(np.max(np.abs(f0 - f1) / np.abs(f0)), np.max(np.abs(d0 - d1) / np.abs(d0)))
        print(f"max relative difference {err:.2e}")


if __name__ == "__main__":
    main()
