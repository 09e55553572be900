"""Instrument-based causal graph discovery and effect estimation.

Distance-correlation tests between instruments and primary variables feed a
leaf-peeling search for the ancestral relation graph. Effects along its
edges are then estimated by GMM with surrogate instruments, and edges are
selected under FDR control.
"""

from ._accel import backend
from .dcor import DcorMatrices, DcorStats, dcor_test, independence_matrices
from .errors import (
    BasisError,
    CycleError,
    DataError,
    DegeneracyError,
    PlacidError,
    SingularSystemError,
)
from .gmm import BasisConfig, EstimationResult, by_select, estimate
from .graph import AncestralGraph, CausalGraph
from .peeling import PeelingResult, estimate_arg

__version__ = "0.1.0"

__all__ = [
    "AncestralGraph",
    "BasisConfig",
    "BasisError",
    "CausalGraph",
    "CycleError",
    "DataError",
    "DcorMatrices",
    "DcorStats",
    "DegeneracyError",
    "EstimationResult",
    "PeelingResult",
    "PlacidError",
    "SingularSystemError",
    "backend",
    "by_select",
    "dcor_test",
    "estimate",
    "estimate_arg",
    "independence_matrices",
]
