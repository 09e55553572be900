"""Empirical distance covariance / correlation and the asymptotic DC test.

Only scalar samples are supported. The squared distance covariance is
computed from the three-term decomposition ``S1 + S2 - 2*S3`` with the
triple sum ``S3`` collapsed to row means of the distance matrices, so one
pair costs O(n^2) and the pairwise sums are the only hot loop
(:func:`placid._kernels.cross_abs_sums`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _kernels


def normal_cdf(z):
    return special.ndtr(z)


def normal_quantile(prob):
    prob_arr = np.asarray(prob, dtype=np.float64)
    if np.any(~((prob_arr > 0.0) & (prob_arr < 1.0))):
        raise ValueError(f"probability must lie in (0, 1), got {prob!r}")
    out = special.ndtri(prob_arr)
    return float(out) if out.ndim == 0 else out


def default_alpha(n: int) -> float:
    """Level ``1/n^2``, the rate under which ancestral recovery is consistent."""
    return 1.0 / float(n) ** 2


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    return alpha


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"{name} must be 1-d or 2-d")
    if a.shape[0] < 2:
        raise ValueError(f"{name} needs at least 2 observations")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise ValueError("x and y must be 1-d")
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    return _as_matrix(x, "x")[:, 0], _as_matrix(y, "y")[:, 0]


@dataclass(frozen=True)
class DcorStats:
    """Distance-covariance statistics for one pair.

    ``r`` is the distance correlation ``V(x,y) / sqrt(V(x,x) V(y,y))`` with
    ``V`` the (unsquared) distance covariance; ``r2`` is its square
    ``v2_xy / sqrt(v2_xx v2_yy)``. ``t = n * v2_xy / s2``.
    """

    n: int
    v2_xy: float
    v2_xx: float
    v2_yy: float
    r: float
    r2: float
    s2: float
    t: float


@dataclass(frozen=True)
class DcorMatrices:
    """Pairwise DC between columns of X (rows) and Y (columns)."""

    c: np.ndarray
    rejections: np.ndarray
    alpha: float
    t: np.ndarray
    n: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.c.shape

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "n": self.n,
            "C": self.c.tolist(),
            "R": self.rejections.astype(int).tolist(),
            "T": self.t.tolist(),
        }


def _self_terms(a: np.ndarray, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Squared distance variance and mean pairwise distance per column."""
    n = a.shape[0]
    centered = a - a.mean(axis=0)
    s1 = 2.0 * n * np.sum(centered**2, axis=0) / n**2
    mean_dist = rows.sum(axis=0) / n**2
    s3 = np.sum((rows / n) ** 2, axis=0) / n
    return s1 + mean_dist**2 - 2.0 * s3, mean_dist


def _row_sums(a: np.ndarray) -> np.ndarray:
    return np.column_stack([_kernels.abs_dev_row_sums(a[:, k]) for k in range(a.shape[1])])


def _cross_terms(X: np.ndarray, Y: np.ndarray):
    n = X.shape[0]
    rx, ry = _row_sums(X), _row_sums(Y)
    s1 = _kernels.cross_abs_sums(X, Y) / n**2
    v2_xx, mx = _self_terms(X, rx)
    v2_yy, my = _self_terms(Y, ry)
    s2 = np.outer(mx, my)
    s3 = (rx / n).T @ (ry / n) / n
    v2 = s1 + s2 - 2.0 * s3
    return v2, v2_xx, v2_yy, s2


def dcov_sq_direct(x, y) -> float:
    """Squared empirical distance covariance via ``S1 + S2 - 2*S3``."""
    x, y = _pair(x, y)
    v2, *_ = _cross_terms(x[:, None], y[:, None])
    return max(float(v2[0, 0]), 0.0)


def _double_centered(v: np.ndarray) -> np.ndarray:
    d = np.abs(v[:, None] - v[None, :])
    return d - d.mean(axis=1, keepdims=True) - d.mean(axis=0, keepdims=True) + d.mean()


def dcov_sq_centered(x, y) -> float:
    """Squared empirical distance covariance from double-centred distance
    matrices, ``n^-2 * sum(A * B)``."""
    x, y = _pair(x, y)
    n = x.shape[0]
    v = float(np.sum(_double_centered(x) * _double_centered(y))) / n**2
    return max(v, 0.0)


def _statistics(v2, v2_xx, v2_yy, s2, n):
    v2 = np.maximum(v2, 0.0)
    v2_xx = np.maximum(v2_xx, 0.0)
    v2_yy = np.maximum(v2_yy, 0.0)
    denom = np.sqrt(np.outer(v2_xx, v2_yy))
    ok = denom > 0.0
    r2 = np.divide(v2, denom, out=np.zeros_like(v2), where=ok)
    r = np.sqrt(r2)
    t = np.divide(n * v2, s2, out=np.zeros_like(v2), where=ok & (s2 > 0.0))
    return v2, v2_xx, v2_yy, r, r2, t


def dcor_test(x, y, alpha: float = 0.05) -> tuple[DcorStats, bool]:
    """Asymptotic DC test of independence at level ``alpha``.

    Rejects when ``sqrt(T_n) > Phi^{-1}(1 - alpha/2)``. A constant sample
    gives ``r = 0`` and no rejection.
    """
    alpha = _check_alpha(alpha)
    x, y = _pair(x, y)
    n = x.shape[0]
    v2, v2_xx, v2_yy, s2 = _cross_terms(x[:, None], y[:, None])
    v2, v2_xx, v2_yy, r, r2, t = _statistics(v2, v2_xx, v2_yy, s2, n)
    stats = DcorStats(
        n=n,
        v2_xy=float(v2[0, 0]),
        v2_xx=float(v2_xx[0]),
        v2_yy=float(v2_yy[0]),
        r=float(r[0, 0]),
        r2=float(r2[0, 0]),
        s2=float(s2[0, 0]),
        t=float(t[0, 0]),
    )
    reject = bool(np.sqrt(stats.t) > normal_quantile(1.0 - alpha / 2.0))
    return stats, reject


def independence_matrices(X, Y, alpha: float | None = None) -> DcorMatrices:
    """DC and test decisions for every (X column, Y column) pair.

    ``alpha`` defaults to ``1/n^2``. Distance row sums of every column are
    computed once and shared across all pairs.
    """
    X = _as_matrix(X, "X")
    Y = _as_matrix(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"row count mismatch: X has {X.shape[0]}, Y has {Y.shape[0]}")
    n = X.shape[0]
    alpha = _check_alpha(default_alpha(n) if alpha is None else alpha)
    v2, v2_xx, v2_yy, s2 = _cross_terms(X, Y)
    _, _, _, r, _, t = _statistics(v2, v2_xx, v2_yy, s2, n)
    crit = normal_quantile(1.0 - alpha / 2.0)
    reject = (np.sqrt(t) > crit).astype(np.int8)
    return DcorMatrices(c=r, rejections=reject, alpha=alpha, t=t, n=n)
