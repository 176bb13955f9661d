"""Time the compiled lattice sums against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 1024 4096 16384] [--repeat 3]

Both backends get the same padded inputs; the script also reports the
largest difference between their outputs.
"""
import argparse
import time

import numpy as np

from artifact import _kernels_py

try:
    from artifact import _kernels
except ImportError:  # extension not built
    _kernels = None


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[1024, 4096, 16384])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _kernels is None:
        raise SystemExit("compiled extension missing; run `pip install -e . --no-build-isolation`")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'N':>8}{'compiled s':>13}{'numpy s':>11}{'speedup':>9}{'max diff':>11}")
    for n in args.sizes:
        h = 1.0 / n
        fpad = rng.standard_normal(3 * n - 2)
        apad = np.ascontiguousarray(rng.standard_normal((2, 3 * n - 2)))
        bpad = np.ascontiguousarray(rng.standard_normal((2, 3 * n - 2)))
        cases = {
            "pv_linear_sum": ((fpad, n, h), _kernels.pv_linear_sum, _kernels_py.pv_linear_sum),
            "pv_bilinear_sum": ((apad, bpad, n, h), _kernels.pv_bilinear_sum, _kernels_py.pv_bilinear_sum),
        }
        for name, (a, fast, slow) in cases.items():
            tc, oc = best_time(lambda: fast(*a), args.repeat)
            tp, op = best_time(lambda: slow(*a), args.repeat)
            diff = float(np.max(np.abs(oc - op)) / max(1.0, np.max(np.abs(op))))
            print(f"{name:<16}{n:>8}{tc:>13.4f}{tp:>11.4f}{tp / tc:>9.1f}{diff:>11.1e}")


if __name__ == "__main__":
    main()
