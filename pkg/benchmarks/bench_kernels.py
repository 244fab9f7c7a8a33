"""Wall time of the Euler sweeps: compiled extension against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--paths 20000] [--steps 400] [--repeat 5]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from sddcontrol import kernels


def affine_case(P, N, m, rng):
    X = np.zeros((P, m + N + 1))
    X[:, : m + 1] = 1.0
    u = rng.standard_normal((P, N))
    dW = rng.standard_normal((P, N)) * np.sqrt(1.0 / N)
    drift, diff = (0.0, 0.1, 0.5, 0.3), (0.1, 0.2, 0.0, 1.0)

    def run(backend, threads):
        kernels.affine_sdde_sweep(X, u, dW, 1.0 / N, m, drift, diff, backend=backend, threads=threads)
    return run


def linear_case(P, N, rng):
    y = np.zeros((P, N + 1))
    y[:, 0] = 1.0
    a, adv, c, e, g = (rng.standard_normal((P, N)) * 0.1 for _ in range(5))
    dW = rng.standard_normal((P, N)) * np.sqrt(1.0 / N)

    def run(backend, threads):
        kernels.linear_sweep(y, a, adv, c, e, g, dW, 1.0 / N, backend=backend, threads=threads)
    return run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--steps", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    cases = {"affine_sdde_sweep": affine_case(args.paths, args.steps, args.steps // 4, rng),
             "linear_sweep": linear_case(args.paths, args.steps, rng)}
    print(f"paths={args.paths} steps={args.steps} threads={args.threads} "
          f"backends={sorted(kernels.BACKENDS)}")
    for name, run in cases.items():
        times = {}
        for backend in sorted(kernels.BACKENDS):
            times[backend] = min(timeit.repeat(lambda: run(backend, args.threads),
                                               number=1, repeat=args.repeat))
            print(f"{name:18s} {backend:9s} {times[backend] * 1e3:9.2f} ms")
        if "compiled" in times:
            print(f"{name:18s} speedup   {times['python'] / times['compiled']:9.2f} x")


if __name__ == "__main__":
    main()
