"""Exception types shared across the package."""

from __future__ import annotations


class PlacidError(Exception):
    """Base class for all errors raised by placid."""


class CycleError(PlacidError, ValueError):
    """A set of directed edges that was required to be acyclic is not.

    ``cycle`` lists the node indices along one offending cycle, first node
    repeated at the end.
    """

    def __init__(self, cycle, message: str | None = None):
        self.cycle = list(cycle)
        path = " -> ".join(f"Y{k}" for k in self.cycle)
        super().__init__(message or f"directed cycle detected: {path}")


class DataError(PlacidError, ValueError):
    """Input data is malformed or inconsistent with its declared roles."""


class BasisError(PlacidError, ValueError):
    """The surrogate basis cannot be built (degenerate column, size cap, ...)."""


class DegeneracyError(PlacidError):
    """The estimation problem is ill-posed for the given inputs."""


class SingularSystemError(DegeneracyError):
    """The GMM normal matrix is singular (instrument relevance failure)."""
