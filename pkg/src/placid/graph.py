"""Causal graphs over primary variables Y1..Yp with interventions from X1..Xq.

Node indices are 1-based everywhere in this module, matching how users and
output files refer to ``Y1``, ``X3`` and so on. Arrays elsewhere in the
package are 0-based and convert at the point of indexing.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property

from .errors import CycleError

Edge = tuple[int, int]


def _as_pairs(pairs: Iterable) -> frozenset[Edge]:
    return frozenset((int(a), int(b)) for a, b in pairs)


def topological_order(edges: Iterable[Edge], p: int) -> list[int]:
    """Kahn ordering of nodes 1..p, smallest ready index first.

    Raises :class:`CycleError` carrying one cycle if ``edges`` is cyclic.
    """
    children: dict[int, list[int]] = {k: [] for k in range(1, p + 1)}
    indeg = dict.fromkeys(range(1, p + 1), 0)
    for k, j in edges:
        children[k].append(j)
        indeg[j] += 1
    ready = sorted(k for k, d in indeg.items() if d == 0)
    order = []
    while ready:
        k = ready.pop(0)
        order.append(k)
        for j in sorted(children[k]):
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(j)
        ready.sort()
    if len(order) < p:
        raise CycleError(find_cycle(edges, p))
    return order


def find_cycle(edges: Iterable[Edge], p: int) -> list[int] | None:
    """Return one directed cycle as a node list (closed), or None."""
    children: dict[int, list[int]] = {k: [] for k in range(1, p + 1)}
    for k, j in edges:
        children[k].append(j)
    for k in children:
        children[k].sort()
    state = dict.fromkeys(children, 0)  # 0 new, 1 on stack, 2 done
    for root in sorted(children):
        if state[root]:
            continue
        stack = [(root, iter(children[root]))]
        path = [root]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                path.pop()
                state[node] = 2
            elif state[nxt] == 1:
                return path[path.index(nxt):] + [nxt]
            elif state[nxt] == 0:
                state[nxt] = 1
                path.append(nxt)
                stack.append((nxt, iter(children[nxt])))
    return None


def transitive_closure(edges: Iterable[Edge], p: int) -> frozenset[Edge]:
    """Smallest transitively closed superset of an acyclic edge set."""
    edges = _as_pairs(edges)
    _check_range(edges, p, p, "edge")
    order = topological_order(edges, p)
    children: dict[int, set[int]] = {k: set() for k in range(1, p + 1)}
    for k, j in edges:
        children[k].add(j)
    desc: dict[int, set[int]] = {}
    for k in reversed(order):
        reach = set(children[k])
        for c in children[k]:
            reach |= desc[c]
        desc[k] = reach
    return frozenset((k, j) for k, ds in desc.items() for j in ds)


def _check_range(pairs: Iterable[Edge], n_src: int, n_dst: int, what: str):
    for a, b in pairs:
        if not (1 <= a <= n_src and 1 <= b <= n_dst):
            raise ValueError(f"{what} ({a}, {b}) references an index out of range")


@dataclass(frozen=True)
class CausalGraph:
    """Directed acyclic graph among Y plus intervention edges X -> Y.

    ``edges`` holds pairs ``(i, j)`` meaning ``Yi -> Yj``; ``interventions``
    holds ``(l, j)`` meaning ``Xl -> Yj``. Construction fails with
    :class:`CycleError` if ``edges`` contains a directed cycle.
    """

    p: int
    q: int
    edges: frozenset[Edge] = frozenset()
    interventions: frozenset[Edge] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "edges", _as_pairs(self.edges))
        object.__setattr__(self, "interventions", _as_pairs(self.interventions))
        if self.p < 0 or self.q < 0:
            raise ValueError("p and q must be non-negative")
        _check_range(self.edges, self.p, self.p, "edge")
        _check_range(self.interventions, self.q, self.p, "intervention")
        topological_order(self.edges, self.p)

    def _node(self, j: int) -> int:
        if not 1 <= j <= self.p:
            raise IndexError(f"node Y{j} out of range 1..{self.p}")
        return j

    @cached_property
    def _children(self) -> dict[int, frozenset[int]]:
        out: dict[int, set[int]] = {k: set() for k in range(1, self.p + 1)}
        for k, j in self.edges:
            out[k].add(j)
        return {k: frozenset(v) for k, v in out.items()}

    @cached_property
    def _targets(self) -> dict[int, frozenset[int]]:
        out: dict[int, set[int]] = {ell: set() for ell in range(1, self.q + 1)}
        for ell, j in self.interventions:
            out[ell].add(j)
        return {k: frozenset(v) for k, v in out.items()}

    @cached_property
    def order(self) -> tuple[int, ...]:
        return tuple(topological_order(self.edges, self.p))

    @cached_property
    def closure(self) -> frozenset[Edge]:
        return transitive_closure(self.edges, self.p)

    @cached_property
    def _desc(self) -> dict[int, frozenset[int]]:
        out: dict[int, set[int]] = {k: set() for k in range(1, self.p + 1)}
        for k, j in self.closure:
            out[k].add(j)
        return {k: frozenset(v) for k, v in out.items()}

    def parents(self, j: int) -> frozenset[int]:
        self._node(j)
        return frozenset(k for k, jj in self.edges if jj == j)

    def children(self, k: int) -> frozenset[int]:
        return self._children[self._node(k)]

    def ancestors(self, j: int) -> frozenset[int]:
        self._node(j)
        return frozenset(k for k, jj in self.closure if jj == j)

    def descendants(self, k: int) -> frozenset[int]:
        return self._desc[self._node(k)]

    def intervention_set(self, j: int) -> frozenset[int]:
        self._node(j)
        return frozenset(ell for ell, jj in self.interventions if jj == j)

    def targets(self, ell: int) -> frozenset[int]:
        if not 1 <= ell <= self.q:
            raise IndexError(f"secondary X{ell} out of range 1..{self.q}")
        return self._targets[ell]

    def mediators(self, k: int, j: int) -> frozenset[int]:
        self._node(k)
        self._node(j)
        if k == j:
            raise ValueError("mediators need two distinct nodes")
        return self._desc[k] & self.ancestors(j)

    def non_mediators(self, k: int, j: int) -> frozenset[int]:
        return self.ancestors(j) - self.mediators(k, j) - {k}

    def leaves(self) -> frozenset[int]:
        return frozenset(k for k, ch in self._children.items() if not ch)

    @cached_property
    def _heights(self) -> dict[int, int]:
        h: dict[int, int] = {}
        for k in reversed(self.order):
            h[k] = max((h[c] + 1 for c in self._children[k]), default=0)
        return h

    def height(self, j: int) -> int:
        return self._heights[self._node(j)]

    def longest_path_len(self, k: int, j: int) -> int | None:
        """Length of the longest directed path from Yk to Yj, None if absent."""
        self._node(k)
        self._node(j)
        if j not in self._desc[k]:
            return None
        best = {k: 0}
        for node in self.order:
            if node not in best:
                continue
            for c in self._children[node]:
                if best.get(c, -1) < best[node] + 1:
                    best[c] = best[node] + 1
        return best[j]

    def valid_ivs(self, j: int) -> frozenset[int]:
        self._node(j)
        return frozenset(
            ell for ell in self.intervention_set(j) if self._targets[ell] == {j}
        )

    def candidate_ivs(self, j: int) -> frozenset[int]:
        self._node(j)
        allowed = self._desc[j] | {j}
        return frozenset(
            ell for ell in self.intervention_set(j) if self._targets[ell] <= allowed
        )

    def to_arg(self) -> AncestralGraph:
        reach = set()
        for ell, k in self.interventions:
            reach.add((ell, k))
            reach.update((ell, j) for j in self._desc[k])
        return AncestralGraph(
            p=self.p,
            q=self.q,
            ancestral_edges=self.closure,
            reach_edges=frozenset(reach),
            candidate_ivs={j: self.candidate_ivs(j) for j in range(1, self.p + 1)},
        )

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "q": self.q,
            "edges": [list(e) for e in sorted(self.edges)],
            "interventions": [list(e) for e in sorted(self.interventions)],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> CausalGraph:
        return cls(
            p=int(data["p"]),
            q=int(data["q"]),
            edges=data.get("edges", ()),
            interventions=data.get("interventions", ()),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> CausalGraph:
        return cls.from_dict(json.loads(text))

    def to_dot(self, name: str = "G") -> str:
        return to_dot(self.p, self.q, self.edges, self.interventions, name=name)


@dataclass(frozen=True)
class AncestralGraph:
    """Ancestral relation graph: closed ancestry among Y, reach from X to Y,
    and the candidate-instrument set of every primary node."""

    p: int
    q: int
    ancestral_edges: frozenset[Edge] = frozenset()
    reach_edges: frozenset[Edge] = frozenset()
    candidate_ivs: Mapping[int, frozenset[int]] = field(default_factory=dict)

    def __post_init__(self):
        anc = _as_pairs(self.ancestral_edges)
        reach = _as_pairs(self.reach_edges)
        _check_range(anc, self.p, self.p, "ancestral edge")
        _check_range(reach, self.q, self.p, "reach edge")
        if transitive_closure(anc, self.p) != anc:
            raise ValueError("ancestral_edges must be transitively closed")
        ca = {j: frozenset() for j in range(1, self.p + 1)}
        for j, ivs in dict(self.candidate_ivs).items():
            j = int(j)
            if not 1 <= j <= self.p:
                raise ValueError(f"candidate set for out-of-range node Y{j}")
            ivs = frozenset(int(ell) for ell in ivs)
            if any((ell, j) not in reach for ell in ivs):
                raise ValueError(f"candidate IVs of Y{j} must reach Y{j}")
            ca[j] = ivs
        object.__setattr__(self, "ancestral_edges", anc)
        object.__setattr__(self, "reach_edges", reach)
        object.__setattr__(self, "candidate_ivs", ca)

    __hash__ = None

    def descendants(self, k: int) -> frozenset[int]:
        return frozenset(j for kk, j in self.ancestral_edges if kk == k)

    def mediators(self, k: int, j: int) -> frozenset[int]:
        return frozenset(
            i for kk, i in self.ancestral_edges
            if kk == k and (i, j) in self.ancestral_edges
        )

    def longest_path_len(self, k: int, j: int) -> int | None:
        if (k, j) not in self.ancestral_edges:
            return None
        med = self.mediators(k, j)
        return 1 + max((self.longest_path_len(k, i) for i in med), default=0)

    def heights(self) -> dict[int, int]:
        order = topological_order(self.ancestral_edges, self.p)
        h: dict[int, int] = {}
        for k in reversed(order):
            h[k] = max((h[c] + 1 for c in self.descendants(k)), default=0)
        return h

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "q": self.q,
            "edges": [list(e) for e in sorted(self.ancestral_edges)],
            "interventions": [list(e) for e in sorted(self.reach_edges)],
            "candidate_ivs": {
                str(j): sorted(self.candidate_ivs[j]) for j in range(1, self.p + 1)
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> AncestralGraph:
        """Inverse of :meth:`to_dict`.

        Accepts non-closed edge lists: they are closed here, and a cycle is
        reported as :class:`CycleError`. Missing ``candidate_ivs`` are derived
        from the closed edges and reach set.
        """
        p, q = int(data["p"]), int(data["q"])
        anc = transitive_closure(_as_pairs(data.get("edges", ())), p)
        reach = _as_pairs(data.get("interventions", ()))
        if "candidate_ivs" in data:
            ca = {int(j): v for j, v in data["candidate_ivs"].items()}
        else:
            ca = candidate_sets(anc, reach, p)
        return cls(p=p, q=q, ancestral_edges=anc, reach_edges=reach, candidate_ivs=ca)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> AncestralGraph:
        return cls.from_dict(json.loads(text))

    def to_dot(self, name: str = "ARG") -> str:
        return to_dot(self.p, self.q, self.ancestral_edges, self.reach_edges, name=name)


def candidate_sets(
    ancestral_edges: Iterable[Edge], reach_edges: Iterable[Edge], p: int
) -> dict[int, frozenset[int]]:
    """Candidate instruments implied by an ancestral relation graph.

    ``l`` is a candidate for ``Yk`` when it reaches ``Yk`` and every other
    node it reaches is a descendant of ``Yk``.
    """
    anc = _as_pairs(ancestral_edges)
    reached: dict[int, set[int]] = {}
    for ell, j in _as_pairs(reach_edges):
        reached.setdefault(ell, set()).add(j)
    out = {k: set() for k in range(1, p + 1)}
    for ell, js in reached.items():
        for k in js:
            if all(j == k or (k, j) in anc for j in js):
                out[k].add(ell)
    return {k: frozenset(v) for k, v in out.items()}


def to_dot(
    p: int,
    q: int,
    edges: Iterable[Edge],
    interventions: Iterable[Edge] = (),
    *,
    name: str = "G",
    edge_labels: Mapping[Edge, str] | None = None,
) -> str:
    """Graphviz source with ``Y`` nodes as ellipses and ``X`` nodes as boxes."""
    lines = [f"digraph {name} {{"]
    lines += [f"  Y{k} [shape=ellipse];" for k in range(1, p + 1)]
    lines += [f"  X{ell} [shape=box];" for ell in range(1, q + 1)]
    for k, j in sorted(edges):
        label = ""
        if edge_labels and (k, j) in edge_labels:
            label = f' [label="{edge_labels[(k, j)]}"]'
        lines.append(f"  Y{k} -> Y{j}{label};")
    for ell, j in sorted(interventions):
        lines.append(f"  X{ell} -> Y{j} [style=dashed];")
    lines.append("}")
    return "\n".join(lines) + "\n"
