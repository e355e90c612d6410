#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Microbenchmarks time the two hot kernels in-process (both implementations
are importable side by side); the end-to-end comparison reruns a short
polarised-AVF integration in subprocesses with POLINT_BACKEND set.

Usage: python benchmarks/bench_kernels.py [--repeats 5] [--skip-e2e]
"""

import argparse
import os
import subprocess
import sys
import time
import timeit

import numpy as np


def bench_circulant(repeats: int):
    from polint import _kernels

    print(f"active backend: {_kernels.BACKEND}")
    print()
    print(f"{'circulant apply':<24}{'n':>8}{'numba-path':>14}{'numpy':>14}{'speedup':>10}")
    rng = np.random.default_rng(0)
    offsets = np.array([-2, -1, 0, 1, 2], dtype=np.int64)
    coeffs = rng.normal(size=5)
    for n in (64, 512, 4096, 32768):
        f = rng.normal(size=n)
        _kernels.circulant_apply(offsets, coeffs, f)  # trigger compilation
        loops = max(1, 200_000 // n)
        t_fast = min(
            timeit.repeat(
                lambda: _kernels.circulant_apply(offsets, coeffs, f),
                number=loops,
                repeat=repeats,
            )
        ) / loops
        t_ref = min(
            timeit.repeat(
                lambda: _kernels.numpy_circulant_apply(offsets, coeffs, f),
                number=loops,
                repeat=repeats,
            )
        ) / loops
        print(
            f"{'':<24}{n:>8}{t_fast * 1e6:>12.2f}us{t_ref * 1e6:>12.2f}us"
            f"{t_ref / t_fast:>9.2f}x"
        )


def bench_power_product(repeats: int):
    from polint import _kernels

    print()
    print(f"{'power product':<24}{'n':>8}{'numba-path':>14}{'numpy':>14}{'speedup':>10}")
    rng = np.random.default_rng(1)
    rows = np.array([0, 1, 2], dtype=np.int64)
    exps = np.array([2, 1, 2], dtype=np.int64)
    for n in (64, 512, 4096, 32768):
        stack = rng.normal(size=(3, n))
        out = np.zeros(n)
        _kernels.power_product_accum(out, stack, rows, exps, 1.0)
        loops = max(1, 200_000 // n)
        t_fast = min(
            timeit.repeat(
                lambda: _kernels.power_product_accum(np.zeros(n), stack, rows, exps, 1.0),
                number=loops,
                repeat=repeats,
            )
        ) / loops
        t_ref = min(
            timeit.repeat(
                lambda: _kernels.numpy_power_product_accum(
                    np.zeros(n), stack, rows, exps, 1.0
                ),
                number=loops,
                repeat=repeats,
            )
        ) / loops
        print(
            f"{'':<24}{n:>8}{t_fast * 1e6:>12.2f}us{t_ref * 1e6:>12.2f}us"
            f"{t_ref / t_fast:>9.2f}x"
        )


E2E_SNIPPET = """
import time
import numpy as np
from polint.analysis import GkdvSetup, run_scheme_to
from polint import _kernels
setup = GkdvSetup.make(n={n})
run_scheme_to(setup, "li_cons", 0.1, 1.0)  # warm-up: JIT load outside timing
t0 = time.perf_counter()
run_scheme_to(setup, "li_cons", 0.1, 100.0)
print(f"{{_kernels.BACKEND}}: {{time.perf_counter() - t0:.3f}}s")
"""


def bench_end_to_end(n: int):
    print()
    print(f"end-to-end: 1000 polarised-AVF steps on the soliton (n = {n})")
    for backend in ("numba", "numpy"):
        env = dict(os.environ, POLINT_BACKEND=backend)
        out = subprocess.run(
            [sys.executable, "-c", E2E_SNIPPET.format(n=n)],
            env=env,
            capture_output=True,
            text=True,
        )
        if out.returncode != 0:
            print(f"{backend}: failed\n{out.stderr}")
        else:
            print(" ", out.stdout.strip())


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--e2e-n", type=int, default=64)
    parser.add_argument("--skip-e2e", action="store_true")
    args = parser.parse_args()
    bench_circulant(args.repeats)
    bench_power_product(args.repeats)
    if not args.skip_e2e:
        bench_end_to_end(args.e2e_n)


if __name__ == "__main__":
    main()
