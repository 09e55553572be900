"""Discovery followed by estimation on one dataset."""

from __future__ import annotations

from dataclasses import dataclass

from .dcor import DcorMatrices, independence_matrices
from .gmm import BasisConfig, EstimationResult, estimate
from .peeling import PeelingResult, estimate_arg


@dataclass(frozen=True, eq=False)
class PipelineResult:
    dcor: DcorMatrices
    peeling: PeelingResult
    estimate: EstimationResult


def run_pipeline(
    X,
    Y,
    *,
    alpha: float | None = None,
    gamma: int = 1,
    q_star: float = 0.05,
    omega: str = "identity",
    basis: BasisConfig | None = None,
    augment: bool = True,
) -> PipelineResult:
    """DC tests, ARG peeling and GMM estimation with BY selection."""
    dc = independence_matrices(X, Y, alpha)
    peel = estimate_arg(dc)
    est = estimate(X, Y, peel, gamma=gamma, omega=omega, q_star=q_star, basis=basis, augment=augment)
    return PipelineResult(dcor=dc, peeling=peel, estimate=est)
