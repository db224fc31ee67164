"""Benchmark the numba detection kernels against their pure-NumPy twins.

Runs each whole-stream kernel on a representative workload and prints a
table of per-run times and speedups. The numba column is skipped when numba
is unavailable or disabled via PRIVCUSUM_NO_NUMBA=1.

Usage: python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import math
import time

import numpy as np

from privcusum import _kernels


def _time(fn, args, repeats):
    best = math.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def _dummy_trace():
    return False, np.empty(1), np.empty(1)


def build_cases(rng):
    cases = []

    T = 100_000
    zs = np.concatenate([rng.normal(0, 1.5, T // 2), rng.normal(0.5, 1.5, T // 2)])
    b1 = 2 ** 1.5 * math.sqrt(1 + 4)
    for scan in ("full", "dyadic"):
        # full scan over 100k steps is quadratic; trim it to keep the run short
        zz = zs[:20_000] if scan == "full" else zs
        cases.append((f"univariate/{scan}",
                      (_kernels.run_univariate, _kernels.run_univariate_numpy),
                      (zz, b1, math.log(1 / 0.05), scan == "dyadic", True)
                      + _dummy_trace()))

    T, nb = 200_000, 4
    w = rng.normal(0.25, 4.0, size=(T, nb))
    z = rng.normal(0.0, 8.0, size=(T, nb))
    cases.append(("private/dyadic",
                  (_kernels.run_private, _kernels.run_private_numpy),
                  (w, z, 0.3, 9.5, 5000.0, 1024.0, True, True) + _dummy_trace()))

    bins = rng.integers(0, nb, size=T)
    y = np.concatenate([rng.normal(0, 1, T // 2), rng.normal(2, 1, T - T // 2)])
    cases.append(("nonprivate/dyadic",
                  (_kernels.run_nonprivate, _kernels.run_nonprivate_numpy),
                  (bins, y, nb, 0.12, 2.5, math.log(32 / 0.05), True, True)
                  + _dummy_trace()))
    return cases


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    rng = np.random.Generator(np.random.Philox(7))
    cases = build_cases(rng)

    print(f"numba active: {_kernels.USING_NUMBA}")
    header = f"{'kernel':<22}{'numba (ms)':>12}{'numpy (ms)':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, (fast, twin), call_args in cases:
        if _kernels.USING_NUMBA:
            fast(*call_args)  # compile outside the timed region
            t_fast, out_fast = _time(fast, call_args, args.repeats)
        else:
            t_fast, out_fast = math.nan, None
        t_twin, out_twin = _time(twin, call_args, args.repeats)
        if out_fast is not None and tuple(out_fast) != tuple(out_twin):
            raise SystemExit(f"{name}: kernel and twin disagree: "
                             f"{tuple(out_fast)} vs {tuple(out_twin)}")
        speed = t_twin / t_fast if t_fast == t_fast else math.nan
        print(f"{name:<22}{1e3 * t_fast:>12.1f}{1e3 * t_twin:>12.1f}{speed:>10.1f}")


if __name__ == "__main__":
    main()
