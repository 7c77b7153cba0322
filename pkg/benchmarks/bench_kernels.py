"""Timing of the box-mass kernel: compiled extension vs NumPy fallback.

    python benchmarks/bench_kernels.py [--n 2000] [--repeat 5]
"""

import argparse
import time

import numpy as np

from dabsp import kernels


def random_cases(n, rng):
    means = rng.normal(0.0, 2.0, (n, 2))
    a = rng.normal(size=(n, 2, 2))
    covs = a @ a.transpose(0, 2, 1) + 0.05 * np.eye(2)
    lo = rng.uniform(-4, 0, (n, 2))
    hi = lo + rng.uniform(0.5, 6, (n, 2))
    return means, covs, lo, hi


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    cases = random_cases(args.n, np.random.default_rng(0))
    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    results = {}
    for b in backends:
        t, out = best_of(lambda: kernels.box_masses(*cases, backend=b), args.repeat)
        results[b] = (t, out)
        print(f"{b:>7}: {t * 1e3:9.2f} ms for {args.n} boxes ({t / args.n * 1e6:.2f} us/box)")
    if len(results) == 2:
        diff = np.max(np.abs(results["python"][1] - results["cython"][1]))
        print(f"speedup {results['python'][0] / results['cython'][0]:.1f}x, max |difference| {diff:.2e}")
    else:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
