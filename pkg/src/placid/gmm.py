"""Causal-effect estimation over the ancestral edges with surrogate IVs.

For every ancestral edge ``(k, j)`` the surrogate basis of ``Yk`` must be
orthogonal to ``Yj`` once the direct effect of ``Yk`` and the effects of
every mediator ``i`` on ``Yj`` are removed. Stacking these conditions over
all edges gives moments that are affine in the coefficient vector, so the
GMM problem has a closed-form solution. Standard errors come from a
sandwich that also accounts for the estimated centering constants of the
bases, and edges are selected with the Benjamini-Yekutieli procedure.
"""

from __future__ import annotations

import json
import logging
import warnings as _warnings
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

from .dcor import normal_cdf
from .errors import DegeneracyError, SingularSystemError
from .graph import AncestralGraph, Edge, to_dot
from .peeling import PeelingResult
from .surrogate import DEFAULT_MAX_COLUMNS, EvaluatedBasis, FactorKey, fit_basis

log = logging.getLogger(__name__)

COND_LIMIT = 1e12
OMEGA_MODES = ("identity", "two-step")


@dataclass(frozen=True)
class BasisConfig:
    """How surrogate bases are built.

    ``kinds`` is a single kind for every secondary variable, a sequence over
    the columns of X, or a mapping from 1-based index to kind.
    """

    kinds: str | Sequence[str] | Mapping[int, str] = "binary"
    degree: int = 2
    standardize: bool = True
    max_columns: int = DEFAULT_MAX_COLUMNS

    def to_dict(self) -> dict:
        kinds = self.kinds
        if isinstance(kinds, Mapping):
            kinds = {str(k): v for k, v in sorted(kinds.items())}
        elif not isinstance(kinds, str):
            kinds = list(kinds)
        return {
            "kinds": kinds,
            "degree": self.degree,
            "standardize": self.standardize,
            "max_columns": self.max_columns,
        }


@dataclass(eq=False)
class MomentSystem:
    """Stacked moment conditions ``m(beta) = h - Gmat @ beta`` per sample.

    ``coefficients[i]`` lists the positions in ``edge_order`` whose
    coefficient enters the moment block of edge ``i``: the edge itself plus
    every ``(m, j)`` with ``m`` a mediator of the edge.
    """

    edge_order: tuple[Edge, ...]
    bases: dict[int, EvaluatedBasis]
    mediator_sets: dict[Edge, frozenset[int]]
    Y: np.ndarray
    coefficients: tuple[tuple[int, ...], ...]
    warnings: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def n_edges(self) -> int:
        return len(self.edge_order)

    @cached_property
    def blocks(self) -> tuple[slice, ...]:
        out, start = [], 0
        for k, _ in self.edge_order:
            t = self.bases[k].n_columns
            out.append(slice(start, start + t))
            start += t
        return tuple(out)

    @property
    def n_moments(self) -> int:
        return self.blocks[-1].stop if self.blocks else 0

    @cached_property
    def factor_keys(self) -> tuple[tuple[int, FactorKey], ...]:
        """Centering constants in use, as ``(node, (index, factor))``."""
        keys = []
        for k in sorted({k for k, _ in self.edge_order}):
            keys.extend((k, key) for key in self.bases[k].spec.factor_keys)
        return tuple(keys)

    @cached_property
    def h_bar(self) -> np.ndarray:
        out = np.empty(self.n_moments)
        for (k, j), rows in zip(self.edge_order, self.blocks):
            out[rows] = self.bases[k].values.T @ self.Y[:, j - 1] / self.n
        return out

    @cached_property
    def g_bar(self) -> np.ndarray:
        """Sample mean of ``Gmat``, shape ``(t, N)``."""
        out = np.zeros((self.n_moments, self.n_edges))
        for i, ((k, _), rows) in enumerate(zip(self.edge_order, self.blocks)):
            z = self.bases[k].values
            for col in self.coefficients[i]:
                src = self.edge_order[col][0]
                out[rows, col] = z.T @ self.Y[:, src - 1] / self.n
        return out

    def residuals(self, beta) -> np.ndarray:
        """n x N matrix of ``Yj - sum(beta * Y)`` for each edge block."""
        beta = np.asarray(beta, dtype=np.float64)
        out = np.empty((self.n, self.n_edges))
        for i, (_, j) in enumerate(self.edge_order):
            r = self.Y[:, j - 1].copy()
            for col in self.coefficients[i]:
                r -= beta[col] * self.Y[:, self.edge_order[col][0] - 1]
            out[:, i] = r
        return out

    def moments(self, beta) -> np.ndarray:
        """Per-sample stacked moments, shape ``(n, t)``."""
        res = self.residuals(beta)
        out = np.empty((self.n, self.n_moments))
        for i, ((k, _), rows) in enumerate(zip(self.edge_order, self.blocks)):
            out[:, rows] = self.bases[k].values * res[:, i : i + 1]
        return out

    def jacobian(self) -> np.ndarray:
        """Per-sample ``Gmat``, shape ``(n, t, N)``. Memory heavy; for checks."""
        out = np.zeros((self.n, self.n_moments, self.n_edges))
        for i, ((k, _), rows) in enumerate(zip(self.edge_order, self.blocks)):
            z = self.bases[k].values
            for col in self.coefficients[i]:
                src = self.edge_order[col][0]
                out[:, rows, col] = z * self.Y[:, src - 1 : src]
        return out


def _arg_of(arg) -> AncestralGraph:
    if isinstance(arg, PeelingResult):
        return arg.arg
    if isinstance(arg, AncestralGraph):
        return arg
    raise TypeError(f"expected AncestralGraph or PeelingResult, got {type(arg).__name__}")


def build_moment_system(
    X,
    Y,
    arg,
    gamma: int = 1,
    basis: BasisConfig | None = None,
) -> MomentSystem:
    """Assemble the stacked moments for every ancestral edge of ``arg``.

    When a candidate set is smaller than ``gamma`` the basis of that node is
    built with ``gamma = |ca|`` and a warning is recorded.
    """
    basis = basis or BasisConfig()
    graph = _arg_of(arg)
    X = np.asarray(X)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y must be matrices with the same number of rows")
    if Y.shape[1] != graph.p or X.shape[1] != graph.q:
        raise ValueError(
            f"data has {X.shape[1]} secondary and {Y.shape[1]} primary columns, "
            f"graph expects {graph.q} and {graph.p}"
        )
    if gamma < 1:
        raise ValueError(f"gamma must be >= 1, got {gamma}")

    edge_order = tuple(sorted(graph.ancestral_edges))
    position = {e: i for i, e in enumerate(edge_order)}
    mediators = {(k, j): graph.mediators(k, j) for k, j in edge_order}
    coefficients = tuple(
        (position[(k, j)],) + tuple(position[(m, j)] for m in sorted(mediators[(k, j)]))
        for k, j in edge_order
    )

    notes: list[str] = []
    bases: dict[int, EvaluatedBasis] = {}
    for k in sorted({k for k, _ in edge_order}):
        ca = graph.candidate_ivs[k]
        if not ca:
            raise DegeneracyError(
                f"Y{k} has descendants but no candidate instruments, its effects are not identifiable"
            )
        g = gamma
        if len(ca) < gamma:
            g = len(ca)
            msg = f"Y{k}: only {len(ca)} candidate instrument(s), basis built with gamma={g}"
            notes.append(msg)
            log.warning(msg)
        spec = fit_basis(
            X,
            ca,
            g,
            basis.kinds,
            node=k,
            degree=basis.degree,
            standardize=basis.standardize,
            max_columns=basis.max_columns,
        )
        bases[k] = spec.evaluate(X)
    return MomentSystem(
        edge_order=edge_order,
        bases=bases,
        mediator_sets=mediators,
        Y=Y,
        coefficients=coefficients,
        warnings=tuple(notes),
    )


def _weight(omega, t: int) -> np.ndarray:
    if omega is None:
        return np.eye(t)
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape != (t, t):
        raise ValueError(f"weighting matrix must be {t} x {t}, got {omega.shape}")
    return omega


def _solve_normal(g_bar, h_bar, omega):
    """Minimize ``(h - G b)' W (h - G b)``; returns (beta, flagged, cond)."""
    normal = g_bar.T @ omega @ g_bar
    rhs = g_bar.T @ omega @ h_bar
    normal = (normal + normal.T) / 2.0
    evals, evecs = np.linalg.eigh(normal)
    top = evals[-1] if evals.size else 0.0
    tol = max(normal.shape) * np.finfo(float).eps * max(top, 0.0)
    if not top > 0.0 or evals[0] <= tol:
        null = evecs[:, evals <= tol]
        weak = np.flatnonzero(np.abs(null).max(axis=1) > 1e-6) if null.size else np.arange(len(rhs))
        raise SingularSystemError(
            "GMM normal matrix is singular: the surrogate instruments of some source "
            "node carry no signal about it (relevance E[Z Yk] != 0 fails); "
            f"affected coefficients at positions {list(map(int, weak))}"
        )
    cond = float(top / evals[0])
    if cond <= COND_LIMIT:
        beta = linalg.cho_solve(linalg.cho_factor(normal), rhs)
        return beta, (), cond
    small = evals < top / COND_LIMIT
    flagged = tuple(int(i) for i in np.flatnonzero(np.abs(evecs[:, small]).max(axis=1) > 1e-3))
    _warnings.warn(
        f"GMM normal matrix is ill-conditioned (condition number {cond:.3g}); "
        "using a pseudo-inverse",
        RuntimeWarning,
        stacklevel=3,
    )
    beta = np.linalg.pinv(normal, hermitian=True) @ rhs
    return beta, flagged, cond


def solve_gmm(system: MomentSystem, omega=None) -> np.ndarray:
    """Closed-form GMM estimate ``(G'WG)^-1 G'W h`` (W = identity by default)."""
    if system.n_edges == 0:
        return np.zeros(0)
    w = _weight(omega, system.n_moments)
    beta, _, _ = _solve_normal(system.g_bar, system.h_bar, w)
    return beta


@dataclass(frozen=True, eq=False)
class VarianceComponents:
    """Blocks of the sandwich ``(G'WG)^-1 G'WFWG (G'WG)^-1``.

    Rows and columns of ``g_block``, ``w_block`` and ``f_block`` are ordered
    centering constants first, then moments (rows) or coefficients (columns).
    ``covariance`` is the coefficient block of the sandwich (not divided by n).
    """

    g_block: np.ndarray
    c_block: np.ndarray
    d_block: np.ndarray
    f_block: np.ndarray
    w_block: np.ndarray
    covariance: np.ndarray
    factor_keys: tuple = ()

    def to_dict(self) -> dict:
        return {
            "covariance": self.covariance.tolist(),
            "n_centering": int(self.c_block.shape[1]),
            "n_moments": int(self.d_block.shape[0]),
        }


def _centering_block(system: MomentSystem, beta) -> tuple[np.ndarray, np.ndarray]:
    """Derivative of the mean moments w.r.t. centering constants, plus the
    per-sample centering moments ``mu - raw``."""
    keys = system.factor_keys
    index = {key: f for f, key in enumerate(keys)}
    c = np.zeros((system.n_moments, len(keys)))
    res = system.residuals(beta)
    for i, ((k, _), rows) in enumerate(zip(system.edge_order, system.blocks)):
        ev = system.bases[k]
        for col in range(ev.n_columns):
            for key, prod in ev.partial_products(col).items():
                c[rows.start + col, index[(k, key)]] = -np.mean(prod * res[:, i])
    mu_moments = np.zeros((system.n, len(keys)))
    for f, (k, key) in enumerate(keys):
        mu_moments[:, f] = system.bases[k].spec.centering_of(key) - system.bases[k].raw[key]
    return c, mu_moments


def sandwich_variance(
    system: MomentSystem, beta, omega=None, *, augment: bool = True
) -> tuple[VarianceComponents, np.ndarray]:
    """Sandwich covariance of the coefficient estimates and their standard
    errors ``sqrt(V_ii / n)``.

    With ``augment=False`` the centering constants are treated as known
    (their derivative block is zeroed).
    """
    beta = np.asarray(beta, dtype=np.float64)
    t, n_edges = system.n_moments, system.n_edges
    omega = _weight(omega, t)
    d = -system.g_bar
    c, mu_moments = _centering_block(system, beta)
    if not augment:
        c = np.zeros_like(c)
    n_mu = c.shape[1]

    g = np.zeros((n_mu + t, n_mu + n_edges))
    g[:n_mu, :n_mu] = np.eye(n_mu)
    g[n_mu:, :n_mu] = c
    g[n_mu:, n_mu:] = d
    w = np.zeros((n_mu + t, n_mu + t))
    w[:n_mu, :n_mu] = np.eye(n_mu)
    w[n_mu:, n_mu:] = omega @ d @ d.T @ omega

    stacked = np.hstack([mu_moments, system.moments(beta)])
    f = np.cov(stacked, rowvar=False, bias=True).reshape(n_mu + t, n_mu + t)

    gwg = g.T @ w @ g
    try:
        bread = linalg.solve(gwg, g.T @ w, assume_a="sym")
    except linalg.LinAlgError as exc:
        raise SingularSystemError(f"sandwich bread matrix is singular: {exc}") from None
    full = bread @ f @ bread.T
    cov = full[n_mu:, n_mu:]
    cov = (cov + cov.T) / 2.0
    scale = max(1.0, float(np.max(np.abs(np.diag(cov)))) if n_edges else 1.0)
    if n_edges and np.linalg.eigvalsh(cov)[0] < -1e-8 * scale:
        raise DegeneracyError("sandwich covariance is not positive semidefinite")
    sigma = np.sqrt(np.clip(np.diag(cov), 0.0, None) / system.n)
    comps = VarianceComponents(
        g_block=g,
        c_block=c,
        d_block=d,
        f_block=f,
        w_block=w,
        covariance=cov,
        factor_keys=system.factor_keys,
    )
    return comps, sigma


def pvalues(beta, sigma) -> np.ndarray:
    """Two-sided normal p-values ``2 * (1 - Phi(|beta| / sigma))``."""
    beta = np.asarray(beta, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if beta.shape != sigma.shape:
        raise ValueError("beta and sigma must have the same shape")
    if np.any(~(sigma > 0.0)) or not np.all(np.isfinite(sigma)):
        raise ValueError("standard errors must be positive and finite")
    # 2 * Phi(-|z|) equals 2 * (1 - Phi(|z|)) without cancellation for large |z|.
    return 2.0 * normal_cdf(-np.abs(beta) / sigma)


def by_select(pvals, edge_order: Sequence[Edge], q_star: float = 0.05) -> tuple[Edge, ...]:
    """Benjamini-Yekutieli step-up selection at FDR level ``q_star``."""
    if not 0.0 < q_star < 1.0:
        raise ValueError(f"q_star must lie in (0, 1), got {q_star!r}")
    pvals = np.asarray(pvals, dtype=np.float64)
    n = pvals.size
    if n != len(edge_order):
        raise ValueError("one p-value per edge is required")
    if n == 0:
        return ()
    order = np.argsort(pvals, kind="stable")
    harmonic = np.sum(1.0 / np.arange(1, n + 1))
    thresholds = np.arange(1, n + 1) * q_star / (n * harmonic)
    passing = np.flatnonzero(pvals[order] <= thresholds)
    if passing.size == 0:
        return ()
    cut = passing[-1] + 1
    return tuple(sorted(tuple(edge_order[i]) for i in order[:cut]))


@dataclass(frozen=True, eq=False)
class EstimationResult:
    """Per-edge estimates over the ancestral edges, in ``edge_order``."""

    edge_order: tuple[Edge, ...]
    beta_hat: np.ndarray
    sigma_hat: np.ndarray
    pvalues: np.ndarray
    selected_edges: tuple[Edge, ...]
    q_star: float
    variance: VarianceComponents | None = None
    flagged_edges: tuple[Edge, ...] = ()
    warnings: tuple[str, ...] = ()
    omega_mode: str = "identity"
    augment: bool = True
    p: int = 0
    q: int = 0
    condition_number: float = float("nan")
    bases: dict = field(default_factory=dict, repr=False)

    def coefficient_matrix(self, selected_only: bool = True) -> np.ndarray:
        """p x p matrix with estimates at ``[k-1, j-1]``; zero elsewhere."""
        out = np.zeros((self.p, self.p))
        keep = set(self.selected_edges) if selected_only else set(self.edge_order)
        for (k, j), b in zip(self.edge_order, self.beta_hat):
            if (k, j) in keep:
                out[k - 1, j - 1] = b
        return out

    def records(self) -> list[dict]:
        chosen = set(self.selected_edges)
        flagged = set(self.flagged_edges)
        return [
            {
                "k": k,
                "j": j,
                "beta": float(b),
                "se": float(s),
                "pvalue": float(pv),
                "selected": (k, j) in chosen,
                "flagged": (k, j) in flagged,
            }
            for (k, j), b, s, pv in zip(self.edge_order, self.beta_hat, self.sigma_hat, self.pvalues)
        ]

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "q": self.q,
            "q_star": self.q_star,
            "omega": self.omega_mode,
            "augment": self.augment,
            "condition_number": self.condition_number,
            "edges": self.records(),
            "selected_edges": [list(e) for e in self.selected_edges],
            "warnings": list(self.warnings),
            "bases": {str(k): spec.to_dict() for k, spec in sorted(self.bases.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_dot(self, name: str = "estimate") -> str:
        labels = {
            (k, j): f"{b:.3g}" for (k, j), b in zip(self.edge_order, self.beta_hat)
        }
        return to_dot(self.p, 0, self.selected_edges, (), name=name, edge_labels=labels)


def _moment_weight(system: MomentSystem, beta) -> np.ndarray:
    m = system.moments(beta)
    cov = np.cov(m, rowvar=False, bias=True).reshape(system.n_moments, system.n_moments)
    return np.linalg.pinv((cov + cov.T) / 2.0, hermitian=True)


def estimate(
    X,
    Y,
    arg,
    gamma: int = 1,
    omega: str = "identity",
    q_star: float = 0.05,
    basis: BasisConfig | None = None,
    *,
    augment: bool = True,
) -> EstimationResult:
    """Build the moment system, solve, compute standard errors and select
    edges. ``omega`` is ``"identity"`` or ``"two-step"``."""
    if omega not in OMEGA_MODES:
        raise ValueError(f"omega must be one of {OMEGA_MODES}, got {omega!r}")
    if not 0.0 < q_star < 1.0:
        raise ValueError(f"q_star must lie in (0, 1), got {q_star!r}")
    graph = _arg_of(arg)
    system = build_moment_system(X, Y, graph, gamma, basis)
    common = dict(q_star=q_star, omega_mode=omega, augment=augment, p=graph.p, q=graph.q)
    if system.n_edges == 0:
        empty = np.zeros(0)
        return EstimationResult(
            edge_order=(), beta_hat=empty, sigma_hat=empty, pvalues=empty,
            selected_edges=(), warnings=system.warnings, **common,
        )
    weight = np.eye(system.n_moments)
    beta, flagged, cond = _solve_normal(system.g_bar, system.h_bar, weight)
    if omega == "two-step":
        weight = _moment_weight(system, beta)
        beta, flagged, cond = _solve_normal(system.g_bar, system.h_bar, weight)
    notes = list(system.warnings)
    if flagged:
        notes.append(f"ill-conditioned normal matrix (condition number {cond:.3g})")
    comps, sigma = sandwich_variance(system, beta, weight, augment=augment)
    if np.any(sigma <= 0.0):
        raise DegeneracyError("zero standard error, the residuals are degenerate")
    pv = pvalues(beta, sigma)
    selected = by_select(pv, system.edge_order, q_star)
    return EstimationResult(
        edge_order=system.edge_order,
        beta_hat=beta,
        sigma_hat=sigma,
        pvalues=pv,
        selected_edges=selected,
        variance=comps,
        flagged_edges=tuple(system.edge_order[i] for i in flagged),
        warnings=tuple(notes),
        condition_number=cond,
        bases={k: ev.spec for k, ev in system.bases.items()},
        **common,
    )
