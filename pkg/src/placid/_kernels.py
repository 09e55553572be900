"""Hot loops for the distance-covariance computations.

Each kernel has a numba implementation and a numpy implementation with the
same signature. The module-level names dispatch to one of them according to
:mod:`placid._accel`; both variants stay importable (``*_numpy`` and
``*_numba``) so tests and the benchmark script can compare them directly.
"""

from __future__ import annotations

import numpy as np

from . import _accel

# Rows per block in the numpy fallback; bounds memory at roughly
# _BLOCK * n * (q + p) doubles.
_BLOCK = 64


def abs_dev_row_sums(x: np.ndarray) -> np.ndarray:
    """Return ``s[i] = sum_j |x[i] - x[j]|`` for a 1-d array in O(n log n)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    csum = np.cumsum(xs)
    total = csum[-1]
    rank = np.arange(n, dtype=np.float64)
    below = np.concatenate(([0.0], csum[:-1]))
    sums_sorted = xs * rank - below + (total - csum) - xs * (n - 1 - rank)
    out = np.empty(n)
    out[order] = sums_sorted
    return out


def cross_abs_sums_numpy(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """``M[a, b] = sum_{i,j} |X[i,a]-X[j,a]| * |Y[i,b]-Y[j,b]|`` (q x p)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    n, q = X.shape
    p = Y.shape[1]
    out = np.zeros((q, p))
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        dx = np.abs(X[start:stop, None, :] - X[None, :, :])
        dy = np.abs(Y[start:stop, None, :] - Y[None, :, :])
        out += np.tensordot(dx, dy, axes=([0, 1], [0, 1]))
    return out


if _accel.HAVE_NUMBA:
    from numba import njit, prange

    @njit(parallel=True, cache=True)
    def _cross_abs_sums_jit(X, Y):  # pragma: no cover - compiled
        n, q = X.shape
        p = Y.shape[1]
        out = np.zeros((q, p))
        for a in prange(q):
            acc = np.zeros(p)
            for i in range(n - 1):
                xi = X[i, a]
                for j in range(i + 1, n):
                    dx = abs(xi - X[j, a])
                    for b in range(p):
                        acc[b] += dx * abs(Y[i, b] - Y[j, b])
            for b in range(p):
                out[a, b] = 2.0 * acc[b]
        return out

    def cross_abs_sums_numba(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        Y = np.ascontiguousarray(Y, dtype=np.float64)
        return _cross_abs_sums_jit(X, Y)

else:  # pragma: no cover
    cross_abs_sums_numba = None


if _accel.USE_NUMBA:
    cross_abs_sums = cross_abs_sums_numba
else:  # pragma: no cover
    cross_abs_sums = cross_abs_sums_numpy
