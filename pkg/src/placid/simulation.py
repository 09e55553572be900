"""Simulated structural equation models and benchmark scoring.

Designs
-------
``random``
    Upper-triangular adjacency with edge probability ``1/(2p)``.
``hub``
    ``Y1`` points to every other node.
``chain``
    Three nodes ``Y1 -> Y2 -> Y3`` and four instruments where ``X4`` hits
    both ``Y2`` and ``Y3``; ``Y1`` depends on ``X1`` only through
    ``X1**2`` so ``X1`` is uncorrelated with every primary variable.
``two-node``
    ``Y1 -> Y2`` with binary instruments; ``X3`` hits both nodes.

In the ``random`` and ``hub`` designs node ``j`` is hit by ``Xj``,
``X(p+j)`` and ``X(2p+ceil(j/2))``, so the last block of instruments is
shared by the node pairs ``(Y1, Y2), (Y3, Y4), ...``. Confounder ``Uk``
loads on ``Y(2k-1)`` and ``Y(2k)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from multiprocessing import get_context

import numpy as np

from .errors import PlacidError
from .gmm import BasisConfig
from .graph import CausalGraph, Edge
from .pipeline import run_pipeline

FORMAT_VERSION = 1
GRAPH_KINDS = ("random", "hub", "chain", "two-node")
SECONDARY_KINDS = ("continuous", "discrete")
CONFOUNDER_LAYOUTS = ("pairs", "shifted")

COEF_BAND = (0.8, 1.2)
SIGMA_BAND = (0.3, 0.4)
PHI_BAND = (0.3, 0.4)
WEIGHT_BAND = (2.8, 3.2)


@dataclass(frozen=True)
class SimConfig:
    """One benchmark configuration.

    ``q`` and ``r`` default to ``2p + p//2`` and ``p//2`` for the ``random``
    and ``hub`` designs; the small designs fix their own dimensions.
    ``weight_band`` is the magnitude range of the instrument-effect scale
    ``w_j`` for continuous instruments.
    """

    graph_kind: str = "random"
    p: int = 10
    q: int | None = None
    r: int | None = None
    n: int = 1000
    secondary_kind: str = "continuous"
    n_reps: int = 50
    seed: int = 0
    alpha: float | None = None
    gamma: int = 2
    q_star: float = 0.05
    omega: str = "identity"
    degree: int = 2
    augment: bool = True
    confounder_layout: str = "pairs"
    weight_band: tuple[float, float] = WEIGHT_BAND

    def __post_init__(self):
        if self.graph_kind not in GRAPH_KINDS:
            raise ValueError(f"graph_kind must be one of {GRAPH_KINDS}, got {self.graph_kind!r}")
        if self.secondary_kind not in SECONDARY_KINDS:
            raise ValueError(f"secondary_kind must be one of {SECONDARY_KINDS}")
        if self.confounder_layout not in CONFOUNDER_LAYOUTS:
            raise ValueError(f"confounder_layout must be one of {CONFOUNDER_LAYOUTS}")
        object.__setattr__(self, "weight_band", tuple(float(v) for v in self.weight_band))
        if self.graph_kind == "chain":
            object.__setattr__(self, "p", 3)
            object.__setattr__(self, "q", 4)
            object.__setattr__(self, "secondary_kind", "continuous")
        elif self.graph_kind == "two-node":
            object.__setattr__(self, "p", 2)
            object.__setattr__(self, "q", 3)
            object.__setattr__(self, "secondary_kind", "discrete")
        elif self.q is None:
            object.__setattr__(self, "q", 2 * self.p + self.p // 2)
        if self.r is None:
            object.__setattr__(self, "r", max(1, math.ceil(self.p / 2)))
        if self.p < 1 or self.n < 2 or self.n_reps < 1 or self.gamma < 1:
            raise ValueError("p >= 1, n >= 2, n_reps >= 1 and gamma >= 1 are required")
        if self.graph_kind in ("random", "hub") and self.q < 2 * self.p + math.ceil(self.p / 2):
            raise ValueError(f"q must be at least {2 * self.p + math.ceil(self.p / 2)} for p={self.p}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["weight_band"] = list(self.weight_band)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> SimConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown simulation settings: {sorted(unknown)}")
        return cls(**data)

    @property
    def basis(self) -> BasisConfig:
        kind = "continuous" if self.secondary_kind == "continuous" else "binary"
        return BasisConfig(kinds=kind, degree=self.degree)


PRESETS: dict[str, SimConfig] = {
    "table1-hub-p10": SimConfig("hub", 10, secondary_kind="continuous"),
    "table1-random-p10": SimConfig("random", 10, secondary_kind="continuous"),
    "table1-hub-p20": SimConfig("hub", 20, secondary_kind="continuous"),
    "table1-random-p20": SimConfig("random", 20, secondary_kind="continuous"),
    "table2-hub-p10": SimConfig("hub", 10, secondary_kind="discrete"),
    "table2-random-p10": SimConfig("random", 10, secondary_kind="discrete"),
    "table2-hub-p20": SimConfig("hub", 20, secondary_kind="discrete"),
    "table2-random-p20": SimConfig("random", 20, secondary_kind="discrete"),
    "chain-quadratic-iv": SimConfig("chain", n=2000, gamma=1, weight_band=(0.8, 1.2)),
    "coverage-two-node": SimConfig("two-node", n=1000, n_reps=500, gamma=1),
}


def _band(rng, band, size=None):
    lo, hi = band
    mag = rng.uniform(lo, hi, size)
    return mag * rng.choice((-1.0, 1.0), size)


def interventions_for(p: int) -> set[Edge]:
    """``Xj, X(p+j), X(2p+ceil(j/2)) -> Yj`` for every node."""
    out = set()
    for j in range(1, p + 1):
        out.update({(j, j), (p + j, j), (2 * p + (j + 1) // 2, j)})
    return out


SHARED_IV_CHAIN = CausalGraph(3, 4, {(1, 2), (2, 3)}, {(1, 1), (2, 2), (4, 2), (4, 3), (3, 3)})
TWO_NODE = CausalGraph(2, 3, {(1, 2)}, {(1, 1), (3, 1), (2, 2), (3, 2)})


def gen_graph(cfg: SimConfig, rng: np.random.Generator) -> tuple[CausalGraph, np.ndarray]:
    """True graph and its p x p coefficient matrix (``B[k-1, j-1]`` for
    ``Yk -> Yj``)."""
    p = cfg.p
    if cfg.graph_kind == "chain":
        graph = SHARED_IV_CHAIN
    elif cfg.graph_kind == "two-node":
        graph = TWO_NODE
    else:
        if cfg.graph_kind == "hub":
            edges = {(1, j) for j in range(2, p + 1)}
        else:
            mask = np.triu(rng.random((p, p)) < 1.0 / (2 * p), k=1)
            edges = {(int(i) + 1, int(j) + 1) for i, j in zip(*np.nonzero(mask))}
        graph = CausalGraph(p, cfg.q, edges, interventions_for(p))
    coef = np.zeros((p, p))
    for k, j in sorted(graph.edges):
        coef[k - 1, j - 1] = _band(rng, COEF_BAND)
    return graph, coef


@dataclass(frozen=True, eq=False)
class SimDataset:
    """Simulated sample plus everything needed to regenerate ``Y``."""

    X: np.ndarray
    Y: np.ndarray
    truth: CausalGraph
    B_true: np.ndarray
    U: np.ndarray
    phi: np.ndarray
    noise: np.ndarray
    noise_scales: np.ndarray
    instrument_effects: np.ndarray

    def regenerate(self) -> np.ndarray:
        return generate_primary(self.truth, self.B_true, self.instrument_effects, self.U, self.phi, self.noise)


def generate_primary(graph: CausalGraph, coef, effects, U, phi, noise) -> np.ndarray:
    """Solve the recursive system ``Yj = sum_k B[k,j] Yk + g_j + U phi_j + e_j``
    in topological order."""
    n = effects.shape[0]
    Y = np.zeros((n, graph.p))
    confounding = U @ phi
    for j in graph.order:
        col = effects[:, j - 1] + confounding[:, j - 1] + noise[:, j - 1]
        for k in sorted(graph.parents(j)):
            col = col + coef[k - 1, j - 1] * Y[:, k - 1]
        Y[:, j - 1] = col
    return Y


def confounder_loadings(p: int, r: int, layout: str, rng) -> np.ndarray:
    """r x p loading matrix. ``pairs``: ``Uk`` on ``Y(2k-1), Y(2k)``.
    ``shifted``: ``U1`` on ``Y1`` plus ``Uk`` on ``Y(2k), Y(2k+1)``."""
    phi = np.zeros((r, p))
    for k in range(1, r + 1):
        cols = (2 * k - 1, 2 * k) if layout == "pairs" else (2 * k, 2 * k + 1)
        for j in cols:
            if j <= p:
                phi[k - 1, j - 1] = _band(rng, PHI_BAND)
    if layout == "shifted":
        phi[0, 0] = _band(rng, PHI_BAND)
    return phi


def pairwise_products(cols: list[np.ndarray]) -> np.ndarray:
    """``sum over ordered pairs k != l of X_k X_l``."""
    total = sum(cols)
    return total**2 - sum(c**2 for c in cols)


def continuous_effect(cols: list[np.ndarray], weight: float) -> np.ndarray:
    main = sum(c**2 + (c > 0) for c in cols)
    return weight * main + weight / 2.0 * pairwise_products(cols)


def gen_data(cfg: SimConfig, graph: CausalGraph, coef, rng: np.random.Generator) -> SimDataset:
    n, p, q = cfg.n, graph.p, graph.q
    if cfg.secondary_kind == "continuous":
        X = rng.standard_normal((n, q))
    else:
        X = rng.binomial(1, 0.5, (n, q)).astype(np.float64)
    U = rng.standard_normal((n, cfg.r))
    phi = confounder_loadings(p, cfg.r, cfg.confounder_layout, rng)
    scales = rng.uniform(*SIGMA_BAND, p)
    noise = rng.standard_normal((n, p)) * scales
    effects = np.zeros((n, p))
    weights = _band(rng, cfg.weight_band, p)
    if cfg.graph_kind == "chain":
        # X4 reaches Y3 directly and through Y2; aligning the signs keeps the
        # two contributions from cancelling.
        weights[1] = abs(weights[1])
        weights[2] = np.sign(coef[1, 2]) * abs(weights[2])
    for j in range(1, p + 1):
        cols = [X[:, ell - 1] for ell in sorted(graph.intervention_set(j))]
        if cfg.graph_kind == "chain":
            if j == 1:
                effects[:, 0] = X[:, 0] ** 2
            else:
                effects[:, j - 1] = weights[j - 1] * (sum(cols) + np.prod(cols, axis=0))
        elif cfg.graph_kind == "two-node":
            effects[:, j - 1] = sum(cols) + 2.0 * np.prod(cols, axis=0)
        elif cfg.secondary_kind == "continuous":
            effects[:, j - 1] = continuous_effect(cols, weights[j - 1])
        else:
            effects[:, j - 1] = pairwise_products(cols)
    Y = generate_primary(graph, coef, effects, U, phi, noise)
    return SimDataset(
        X=X, Y=Y, truth=graph, B_true=coef, U=U, phi=phi, noise=noise,
        noise_scales=scales, instrument_effects=effects,
    )


@dataclass(frozen=True)
class Metrics:
    tp: int
    re: int
    fp: int
    fn: int
    fdp: float
    tpr: float
    shd: int
    ji: float
    l_inf: float = float("nan")
    l_1: float = float("nan")
    l_2: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


def score_structure(estimated, truth) -> Metrics:
    """Compare an estimated edge set against the true directed edges.

    A reversed edge counts as RE and, since the true edge is missed, as FN.
    Empty ratios count as perfect: ``fdp = 0``, ``tpr = 1``, ``ji = 1``.
    """
    true_edges = set(truth.edges) if isinstance(truth, CausalGraph) else {tuple(e) for e in truth}
    est = {tuple(e) for e in estimated}
    tp = len(est & true_edges)
    re = sum(1 for k, j in est if (k, j) not in true_edges and (j, k) in true_edges)
    fp = len(est) - tp - re
    fn = len(true_edges - est)
    shd = fp + fn + re
    called = tp + re + fp
    fdp = (re + fp) / called if called else 0.0
    tpr = tp / (tp + fn) if tp + fn else 1.0
    ji = tp / (tp + shd) if tp + shd else 1.0
    return Metrics(tp=tp, re=re, fp=fp, fn=fn, fdp=fdp, tpr=tpr, shd=shd, ji=ji)


def score_parameters(B_hat, B_true) -> tuple[float, float, float]:
    """Entrywise L-infinity, L1 and L2 losses."""
    B_hat = np.asarray(B_hat, dtype=np.float64)
    B_true = np.asarray(B_true, dtype=np.float64)
    if B_hat.shape != B_true.shape:
        raise ValueError(f"shape mismatch: {B_hat.shape} vs {B_true.shape}")
    diff = np.abs(B_hat - B_true).ravel()
    if diff.size == 0:
        return 0.0, 0.0, 0.0
    return float(diff.max()), float(diff.sum()), float(np.sqrt(np.sum(diff**2)))


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep,)))


def simulate(cfg: SimConfig, rep: int = 0) -> SimDataset:
    rng = replication_rng(cfg.seed, rep)
    graph, coef = gen_graph(cfg, rng)
    return gen_data(cfg, graph, coef, rng)


def run_replication(cfg: SimConfig, rep: int) -> dict:
    """Simulate, discover, estimate and score one replication."""
    data = simulate(cfg, rep)
    record = {"rep": rep, "n_true_edges": len(data.truth.edges)}
    try:
        res = run_pipeline(
            data.X,
            data.Y,
            alpha=cfg.alpha,
            gamma=cfg.gamma,
            q_star=cfg.q_star,
            omega=cfg.omega,
            basis=cfg.basis,
            augment=cfg.augment,
        )
    except (PlacidError, np.linalg.LinAlgError) as exc:
        record.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        return record
    est = res.estimate
    metrics = score_structure(est.selected_edges, data.truth)
    losses = score_parameters(est.coefficient_matrix(), data.B_true)
    metrics = replace(metrics, l_inf=losses[0], l_1=losses[1], l_2=losses[2])
    covered = [
        abs(b - data.B_true[k - 1, j - 1]) <= 1.959963984540054 * s
        for (k, j), b, s in zip(est.edge_order, est.beta_hat, est.sigma_hat)
    ]
    record.update(
        status="ok",
        metrics=metrics.to_dict(),
        coverage=float(np.mean(covered)) if covered else None,
        arg_exact=res.peeling.arg.ancestral_edges == data.truth.closure,
        selected=[list(e) for e in est.selected_edges],
        estimates=est.records(),
        stalled=res.peeling.stalled,
        warnings=list(res.peeling.warnings) + list(est.warnings),
    )
    return record


SUMMARY_METRICS = ("fdp", "tpr", "shd", "ji", "l_inf", "l_1", "l_2")


@dataclass(frozen=True)
class BenchmarkSummary:
    config: SimConfig
    stats: dict[str, tuple[float, float]]
    n_ok: int
    n_failed: int
    failures: list[dict] = field(default_factory=list)
    records: list[dict] = field(default_factory=list, repr=False)

    def mean(self, metric: str) -> float:
        return self.stats[metric][0]

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "n_ok": self.n_ok,
            "n_failed": self.n_failed,
            "failures": self.failures,
            "metrics": {m: {"mean": mu, "sd": sd} for m, (mu, sd) in self.stats.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "mean", "sd"])
        for m, (mu, sd) in self.stats.items():
            writer.writerow([m, repr(mu), repr(sd)])
        return buf.getvalue()

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


def _mean_sd(values: list[float]) -> tuple[float, float]:
    if not values:
        return float("nan"), float("nan")
    arr = np.asarray(values, dtype=np.float64)
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), sd


def summarize(cfg: SimConfig, records: list[dict]) -> BenchmarkSummary:
    ok = [r for r in records if r["status"] == "ok"]
    stats = {m: _mean_sd([r["metrics"][m] for r in ok]) for m in SUMMARY_METRICS}
    cov = [r["coverage"] for r in ok if r["coverage"] is not None]
    if cov:
        stats["coverage"] = _mean_sd(cov)
    stats["arg_exact"] = _mean_sd([float(r["arg_exact"]) for r in ok])
    failures = [{"rep": r["rep"], "error": r["error"]} for r in records if r["status"] != "ok"]
    return BenchmarkSummary(
        config=cfg,
        stats=stats,
        n_ok=len(ok),
        n_failed=len(failures),
        failures=failures,
        records=records,
    )


def _replication_job(args):
    cfg, rep = args
    return run_replication(cfg, rep)


def run_benchmark(
    cfg: SimConfig,
    *,
    workers: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> BenchmarkSummary:
    """Run every replication and aggregate means and sds.

    With ``workers > 1`` replications run in separate processes; records are
    still collected in replication order so the summary does not depend on
    scheduling.
    """
    jobs = [(cfg, rep) for rep in range(cfg.n_reps)]
    records: list[dict] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers, mp_context=get_context("spawn")) as pool:
            for rec in pool.map(_replication_job, jobs):
                records.append(rec)
                if progress:
                    progress(len(records), cfg.n_reps)
    else:
        for job in jobs:
            records.append(_replication_job(job))
            if progress:
                progress(len(records), cfg.n_reps)
    return summarize(cfg, records)


def timed_benchmark(cfg: SimConfig, **kwargs) -> tuple[BenchmarkSummary, float]:
    start = time.perf_counter()
    summary = run_benchmark(cfg, **kwargs)
    return summary, time.perf_counter() - start
