"""Recover the ancestral relation graph by peeling leaves.

Each round picks the secondary variables that depend on the fewest
remaining primaries, attributes each to the remaining primary it is most
strongly correlated with (a leaf), links the new leaves to previously
peeled nodes they reach through *all* of their instruments, and removes
them. The ancestral edges found this way are closed transitively at the
end and the candidate instrument sets are read off the closed graph.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dcor import DcorMatrices
from .graph import AncestralGraph, Edge, candidate_sets, transitive_closure

__all__ = [
    "PeelingResult",
    "candidate_sets_from_arg",
    "estimate_arg",
    "transitive_closure",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PeelingResult:
    """Output of :func:`estimate_arg`.

    ``levels[h]`` holds the nodes removed in round ``h`` (round 0 peels the
    leaves). ``leaf_ivs`` maps each node to the instruments that identified
    it as a leaf. ``stalled`` is set when the loop ran out of informative
    instruments before every node was peeled.
    """

    arg: AncestralGraph
    levels: tuple[frozenset[int], ...]
    leaf_ivs: dict[int, frozenset[int]]
    warnings: tuple[str, ...] = ()
    stalled: bool = False
    ties: tuple[str, ...] = field(default=(), repr=False)

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "arg": self.arg.to_dict(),
            "levels": [sorted(level) for level in self.levels],
            "leaf_ivs": {str(k): sorted(v) for k, v in sorted(self.leaf_ivs.items())},
            "warnings": list(self.warnings),
            "stalled": self.stalled,
        }

    @classmethod
    def from_dict(cls, data: dict) -> PeelingResult:
        arg = AncestralGraph.from_dict(data["arg"])
        return cls(
            arg=arg,
            levels=tuple(frozenset(level) for level in data.get("levels", ())),
            leaf_ivs={int(k): frozenset(v) for k, v in data.get("leaf_ivs", {}).items()},
            warnings=tuple(data.get("warnings", ())),
            stalled=bool(data.get("stalled", False)),
        )


def candidate_sets_from_arg(ancestral_edges, reach_edges, p: int):
    """Candidate instrument set of every node given a closed ARG."""
    return candidate_sets(ancestral_edges, reach_edges, p)


def estimate_arg(dc: DcorMatrices) -> PeelingResult:
    """Estimate the ancestral relation graph from DC matrices.

    Ties in the leaf argmax go to the smallest node index. If no remaining
    instrument depends on any remaining node, all remaining nodes are peeled
    together with empty instrument sets and a warning.
    """
    c = np.asarray(dc.c, dtype=np.float64)
    rej = np.asarray(dc.rejections) != 0
    if c.shape != rej.shape or c.ndim != 2:
        raise ValueError("C and R must be q x p matrices of the same shape")
    q, p = rej.shape

    remaining_y = list(range(p))
    remaining_x = list(range(q))
    peeled: list[int] = []
    anc0: set[Edge] = set()
    levels: list[frozenset[int]] = []
    leaf_ivs: dict[int, frozenset[int]] = {}
    warnings: list[str] = []
    ties: list[str] = []
    stalled = False

    while remaining_y:
        support = rej[np.ix_(remaining_x, remaining_y)].sum(axis=1)
        positive = support > 0
        if not positive.any():
            stalled = True
            msg = (
                "no remaining secondary variable depends on "
                + ", ".join(f"Y{k + 1}" for k in remaining_y)
                + "; peeled them as one final level without instruments"
            )
            warnings.append(msg)
            log.warning(msg)
            levels.append(frozenset(k + 1 for k in remaining_y))
            leaf_ivs.update({k + 1: frozenset() for k in remaining_y})
            break

        fewest = support[positive].min()
        picked: dict[int, set[int]] = {}
        for row, ell in enumerate(remaining_x):
            if support[row] != fewest:
                continue
            strengths = c[ell, remaining_y]
            best = int(np.argmax(strengths))
            k = remaining_y[best]
            if np.count_nonzero(strengths == strengths[best]) > 1:
                tied = [remaining_y[i] + 1 for i in np.flatnonzero(strengths == strengths[best])]
                note = f"X{ell + 1}: tie between {tied} in leaf choice, chose Y{k + 1}"
                ties.append(note)
                log.info(note)
            picked.setdefault(k, set()).add(ell)

        for k, ivs in picked.items():
            for j in peeled:
                if all(rej[ell, j] for ell in ivs):
                    anc0.add((k + 1, j + 1))

        levels.append(frozenset(k + 1 for k in picked))
        for k, ivs in picked.items():
            leaf_ivs[k + 1] = frozenset(ell + 1 for ell in ivs)
        removed_x = set().union(*picked.values())
        remaining_y = [k for k in remaining_y if k not in picked]
        remaining_x = [ell for ell in remaining_x if ell not in removed_x]
        peeled.extend(sorted(picked))

    anc = transitive_closure(anc0, p)
    reach = {(ell + 1, j + 1) for ell, j in zip(*np.nonzero(rej))}
    by_source: dict[int, set[int]] = {}
    for k, j in anc:
        by_source.setdefault(k, set()).add(j)
    reach |= {(ell, j) for ell, k in list(reach) for j in by_source.get(k, ())}
    ca = candidate_sets(anc, reach, p)
    arg = AncestralGraph(p=p, q=q, ancestral_edges=anc, reach_edges=frozenset(reach), candidate_ivs=ca)
    return PeelingResult(
        arg=arg,
        levels=tuple(levels),
        leaf_ivs=leaf_ivs,
        warnings=tuple(warnings),
        stalled=stalled,
        ties=tuple(ties),
    )
