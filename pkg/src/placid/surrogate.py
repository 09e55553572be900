"""Surrogate-instrument bases built from candidate instruments of one node.

Every candidate ``X_s`` contributes a short list of *centered factors*:

* ``binary``: ``X_s - mean``
* ``polytomous``: one centered indicator per non-reference level, the
  reference being the most frequent level
* ``continuous``: ``Xt_s**d - mean(Xt_s**d)`` for ``d = 1..degree`` where
  ``Xt_s`` is ``X_s`` standardized to mean 0 and sd 1

A basis column is a product of one factor from each coordinate of a
subset ``alpha`` of the candidate set. The subsets kept are those with
``|alpha| >= |ca| - gamma + 1``: each of them meets every possible set of
at least ``gamma`` valid instruments, so under independent instruments
every column has conditional mean zero given the invalid ones.

Centering constants are estimated from the sample and recorded in the
:class:`BasisSpec`, so the same basis can be re-evaluated on new data and
the GMM variance can account for their estimation error.
"""

from __future__ import annotations

import itertools
import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import BasisError

KINDS = ("binary", "polytomous", "continuous")
DEFAULT_MAX_COLUMNS = 256

FactorKey = tuple[int, int]  # (secondary index, factor number)


def enumerate_subsets(ca: Iterable[int], gamma: int) -> list[tuple[int, ...]]:
    """Subsets of ``ca`` with at least ``|ca| - gamma + 1`` elements, ordered
    by size and then lexicographically."""
    items = sorted({int(s) for s in ca})
    m = len(items)
    if not 1 <= gamma <= m:
        raise BasisError(f"gamma must lie in 1..{m} for a candidate set of size {m}, got {gamma}")
    out: list[tuple[int, ...]] = []
    for size in range(m - gamma + 1, m + 1):
        out.extend(itertools.combinations(items, size))
    return out


def subset_count(m: int, gamma: int) -> int:
    return sum(comb(m, s) for s in range(m - gamma + 1, m + 1))


def dummy_encode(column) -> tuple[np.ndarray, list, object]:
    """Indicator columns for every level except the most frequent one.

    Returns ``(matrix, levels, reference)``. A two-level ``{0, 1}`` column is
    passed through unchanged as a single column. Ties for most frequent go
    to the smallest level.
    """
    column = np.asarray(column)
    levels, counts = np.unique(column, return_counts=True)
    if levels.size < 2:
        raise BasisError("dummy encoding needs at least 2 observed levels")
    if levels.size == 2 and set(levels.tolist()) == {0, 1}:
        return (column == 1).astype(np.float64)[:, None], [levels[1].item()], levels[0].item()
    reference = levels[int(np.argmax(counts))]
    kept = [lev for lev in levels if lev != reference]
    mat = np.column_stack([(column == lev).astype(np.float64) for lev in kept])
    return mat, [lev.item() for lev in kept], reference.item()


@dataclass(frozen=True)
class FactorSpec:
    """Centered factors of one secondary variable.

    For ``continuous`` factors ``loc``/``scale`` are the standardization
    constants and factor ``d`` (0-based) is the power ``d + 1``. For
    ``polytomous`` (and two-level binary dummies) ``levels`` names the level
    each indicator factor tests for.
    """

    index: int
    kind: str
    centering: tuple[float, ...]
    levels: tuple = ()
    loc: float = 0.0
    scale: float = 1.0

    @property
    def size(self) -> int:
        return len(self.centering)

    def raw(self, x: np.ndarray) -> np.ndarray:
        """Uncentered factor values, shape ``(n, size)``."""
        x = np.asarray(x)
        if self.kind == "binary":
            return np.asarray(x, dtype=np.float64)[:, None]
        if self.kind == "polytomous":
            return np.column_stack([(x == lev).astype(np.float64) for lev in self.levels])
        z = (np.asarray(x, dtype=np.float64) - self.loc) / self.scale
        return np.column_stack([z ** (d + 1) for d in range(self.size)])

    def to_dict(self) -> dict:
        out = {"index": self.index, "kind": self.kind, "centering": list(self.centering)}
        if self.kind == "polytomous":
            out["levels"] = list(self.levels)
        if self.kind == "continuous":
            out["loc"] = self.loc
            out["scale"] = self.scale
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> FactorSpec:
        return cls(
            index=int(data["index"]),
            kind=data["kind"],
            centering=tuple(float(v) for v in data["centering"]),
            levels=tuple(data.get("levels", ())),
            loc=float(data.get("loc", 0.0)),
            scale=float(data.get("scale", 1.0)),
        )


@dataclass(frozen=True)
class BasisSpec:
    """Everything needed to evaluate the surrogate basis of one node.

    ``columns[c]`` lists the ``(index, factor)`` pairs multiplied together
    in column ``c``.
    """

    node: int
    candidate_set: tuple[int, ...]
    gamma: int
    subsets: tuple[tuple[int, ...], ...]
    factors: tuple[FactorSpec, ...]
    columns: tuple[tuple[FactorKey, ...], ...]
    degree: int = 1
    standardize: bool = True

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    @property
    def factor_keys(self) -> list[FactorKey]:
        return [(f.index, c) for f in self.factors for c in range(f.size)]

    def factor(self, index: int) -> FactorSpec:
        for f in self.factors:
            if f.index == index:
                return f
        raise KeyError(index)

    def centering_of(self, key: FactorKey) -> float:
        return self.factor(key[0]).centering[key[1]]

    def to_dict(self) -> dict:
        return {
            "node": self.node,
            "candidate_set": list(self.candidate_set),
            "gamma": self.gamma,
            "degree": self.degree,
            "standardize": self.standardize,
            "subsets": [list(s) for s in self.subsets],
            "factors": [f.to_dict() for f in self.factors],
            "columns": [[list(key) for key in col] for col in self.columns],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> BasisSpec:
        return cls(
            node=int(data["node"]),
            candidate_set=tuple(int(s) for s in data["candidate_set"]),
            gamma=int(data["gamma"]),
            subsets=tuple(tuple(int(s) for s in sub) for sub in data["subsets"]),
            factors=tuple(FactorSpec.from_dict(f) for f in data["factors"]),
            columns=tuple(tuple((int(a), int(b)) for a, b in col) for col in data["columns"]),
            degree=int(data.get("degree", 1)),
            standardize=bool(data.get("standardize", True)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> BasisSpec:
        return cls.from_dict(json.loads(text))

    def evaluate(self, X) -> EvaluatedBasis:
        """Evaluate on ``X`` (n x q, columns are secondaries 1..q) using the
        stored centering constants."""
        X = np.asarray(X)
        raw: dict[FactorKey, np.ndarray] = {}
        centered: dict[FactorKey, np.ndarray] = {}
        for f in self.factors:
            vals = f.raw(X[:, f.index - 1])
            for c in range(f.size):
                raw[(f.index, c)] = vals[:, c]
                centered[(f.index, c)] = vals[:, c] - f.centering[c]
        n = X.shape[0]
        values = np.empty((n, self.n_columns))
        for c, col in enumerate(self.columns):
            prod = np.ones(n)
            for key in col:
                prod = prod * centered[key]
            values[:, c] = prod
        return EvaluatedBasis(spec=self, values=values, raw=raw, centered=centered)


@dataclass(frozen=True, eq=False)
class EvaluatedBasis:
    """A :class:`BasisSpec` evaluated on a sample.

    ``values`` is the n x t basis matrix; ``raw`` and ``centered`` hold the
    per-factor columns keyed by ``(index, factor)``.
    """

    spec: BasisSpec
    values: np.ndarray
    raw: dict[FactorKey, np.ndarray] = field(repr=False)
    centered: dict[FactorKey, np.ndarray] = field(repr=False)

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    def partial_products(self, column: int) -> dict[FactorKey, np.ndarray]:
        """For each factor in ``column``, the product of the *other* factors.

        The derivative of the column with respect to that factor's centering
        constant is minus this product.
        """
        keys = self.spec.columns[column]
        n = self.values.shape[0]
        out = {}
        for key in keys:
            prod = np.ones(n)
            for other in keys:
                if other != key:
                    prod = prod * self.centered[other]
            out[key] = prod
        return out


def _fit_factor(x: np.ndarray, index: int, kind: str, degree: int, standardize: bool) -> FactorSpec:
    name = f"X{index}"
    if kind == "binary":
        xf = np.asarray(x, dtype=np.float64)
        bad = ~np.isin(xf, (0.0, 1.0))
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise BasisError(f"{name} is declared binary but row {row + 1} holds {float(xf[row]):g}")
        mean = float(xf.mean())
        if mean in (0.0, 1.0):
            raise BasisError(f"{name} is constant, its centered factor is identically zero")
        return FactorSpec(index=index, kind=kind, centering=(mean,))
    if kind == "polytomous":
        try:
            mat, levels, _ = dummy_encode(x)
        except BasisError as exc:
            raise BasisError(f"{name}: {exc}") from None
        if mat.shape[1] == 1 and levels == [1]:
            return FactorSpec(index=index, kind="binary", centering=(float(mat[:, 0].mean()),))
        return FactorSpec(
            index=index,
            kind=kind,
            centering=tuple(float(v) for v in mat.mean(axis=0)),
            levels=tuple(levels),
        )
    if kind == "continuous":
        if degree < 1:
            raise BasisError(f"degree must be >= 1, got {degree}")
        xf = np.asarray(x, dtype=np.float64)
        loc, scale = 0.0, 1.0
        if standardize:
            loc = float(xf.mean())
            scale = float(xf.std())
            if not scale > 0.0:
                raise BasisError(f"{name} is constant, its centered factor is identically zero")
        z = (xf - loc) / scale
        powers = np.column_stack([z ** (d + 1) for d in range(degree)])
        means = powers.mean(axis=0)
        spread = (powers - means).std(axis=0)
        for d in range(degree):
            if not spread[d] > 1e-12 * max(1.0, abs(means[d])):
                raise BasisError(f"{name}: power {d + 1} has zero variance, lower the degree or declare the column discrete")
        return FactorSpec(
            index=index,
            kind=kind,
            centering=tuple(float(v) for v in means),
            loc=loc,
            scale=scale,
        )
    raise BasisError(f"unknown factor kind {kind!r} for {name}; expected one of {KINDS}")


def _resolve_kind(kinds, index: int) -> str:
    if isinstance(kinds, str):
        return kinds
    if isinstance(kinds, Mapping):
        return kinds[index]
    return kinds[index - 1]


def fit_basis(
    X,
    ca: Iterable[int],
    gamma: int,
    kinds: str | Sequence[str] | Mapping[int, str] = "binary",
    *,
    node: int = 0,
    degree: int = 2,
    standardize: bool = True,
    max_columns: int = DEFAULT_MAX_COLUMNS,
) -> BasisSpec:
    """Fit centering constants on ``X`` and lay out the basis columns.

    ``kinds`` is one kind for every column, a per-column sequence over
    ``X``'s columns, or a mapping from 1-based secondary index to kind.
    ``degree`` only affects continuous columns.
    """
    X = np.asarray(X)
    if X.ndim != 2:
        raise BasisError("X must be an n x q matrix")
    subsets = enumerate_subsets(ca, gamma)
    members = sorted({int(s) for s in ca})
    for s in members:
        if not 1 <= s <= X.shape[1]:
            raise BasisError(f"candidate X{s} out of range 1..{X.shape[1]}")
    factors = tuple(
        _fit_factor(X[:, s - 1], s, _resolve_kind(kinds, s), degree, standardize) for s in members
    )
    sizes = {f.index: f.size for f in factors}
    total = sum(int(np.prod([sizes[s] for s in sub])) for sub in subsets)
    if total > max_columns:
        raise BasisError(
            f"basis for node {node} would have {total} columns, above the cap of {max_columns}; "
            "lower the degree or raise gamma"
        )
    columns = []
    for sub in subsets:
        for choice in itertools.product(*(range(sizes[s]) for s in sub)):
            columns.append(tuple(zip(sub, choice)))
    return BasisSpec(
        node=node,
        candidate_set=tuple(members),
        gamma=gamma,
        subsets=tuple(subsets),
        factors=factors,
        columns=tuple(columns),
        degree=degree,
        standardize=standardize,
    )


def build_basis(X, ca, gamma, kinds="binary", **options) -> EvaluatedBasis:
    """Fit and evaluate a basis in one call; see :func:`fit_basis`."""
    return fit_basis(X, ca, gamma, kinds, **options).evaluate(X)


def build_binary_basis(X, ca, gamma, **options) -> EvaluatedBasis:
    return build_basis(X, ca, gamma, "binary", **options)


def build_continuous_basis(X, ca, gamma, degree: int = 2, **options) -> EvaluatedBasis:
    return build_basis(X, ca, gamma, "continuous", degree=degree, **options)
