"""Compare the numba and numpy paths of the distance-covariance kernel.

    python3 benchmarks/bench_kernels.py --n 500 1000 2000 --q 25 --p 10

The cross sum over all sample pairs is the O(n^2 q p) step behind the
independence matrices, so it dominates discovery time. Each size is timed
with the best of ``--repeat`` runs after one warm-up call (which also
triggers JIT compilation).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from placid import _accel, _kernels


def best_time(fn, *args, repeat: int) -> float:
    fn(*args)
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - start)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, nargs="+", default=[250, 500, 1000])
    parser.add_argument("--q", type=int, default=25)
    parser.add_argument("--p", type=int, default=10)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if not _accel.HAVE_NUMBA:
        print("numba is not installed; only the numpy path can be timed")
    rng = np.random.default_rng(args.seed)
    print(f"{'n':>6} {'numpy s':>10} {'numba s':>10} {'speedup':>8} {'max rel diff':>13}")
    for n in args.n:
        X = rng.standard_normal((n, args.q))
        Y = rng.standard_normal((n, args.p))
        t_np = best_time(_kernels.cross_abs_sums_numpy, X, Y, repeat=args.repeat)
        if _accel.HAVE_NUMBA:
            t_nb = best_time(_kernels.cross_abs_sums_numba, X, Y, repeat=args.repeat)
            a = _kernels.cross_abs_sums_numpy(X, Y)
            b = _kernels.cross_abs_sums_numba(X, Y)
            diff = float(np.max(np.abs(a - b) / np.abs(a)))
            print(f"{n:6d} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.2f} {diff:13.2e}")
        else:
            print(f"{n:6d} {t_np:10.4f} {'-':>10} {'-':>8} {'-':>13}")


if __name__ == "__main__":
    main()
