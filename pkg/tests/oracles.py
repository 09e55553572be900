"""Slow, independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools

import numpy as np

from placid.dcor import DcorMatrices
from placid.graph import CausalGraph


def reachability(edges, p):
    """Pairs (k, j), k != j, joined by a directed path, from boolean matrix powers."""
    adj = np.zeros((p, p), dtype=np.int64)
    for k, j in edges:
        adj[k - 1, j - 1] = 1
    reach = np.zeros_like(adj)
    power = np.eye(p, dtype=np.int64)
    for _ in range(p):
        power = np.minimum(power @ adj, 1)
        reach |= power
    return {(k + 1, j + 1) for k, j in zip(*np.nonzero(reach)) if k != j}


def all_paths(edges, k, j):
    """Every directed path from k to j as a tuple of nodes (brute force DFS)."""
    children = {}
    for a, b in edges:
        children.setdefault(a, []).append(b)
    out = []

    def walk(path):
        node = path[-1]
        if node == j:
            out.append(tuple(path))
            return
        for c in children.get(node, ()):
            if c not in path:
                walk(path + [c])

    walk([k])
    return out


def dcov_sq_triple(x, y):
    """The literal three-term definition with an O(n^3) triple sum."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.size
    a = np.abs(x[:, None] - x[None, :])
    b = np.abs(y[:, None] - y[None, :])
    s1 = 0.0
    for r in range(n):
        for s in range(n):
            s1 += a[r, s] * b[r, s]
    s1 /= n**2
    s2 = a.sum() / n**2 * b.sum() / n**2
    s3 = 0.0
    for r in range(n):
        for s in range(n):
            for t in range(n):
                s3 += a[r, t] * b[s, t]
    s3 /= n**3
    return s1 + s2 - 2.0 * s3


def erf_quantile(prob, tol=1e-15):
    """Standard normal quantile by bisection on an erfc-based CDF."""
    from math import erfc, sqrt

    lo, hi = -40.0, 40.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if 0.5 * erfc(-mid / sqrt(2.0)) < prob:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def all_dags(p):
    """Every labeled DAG on nodes 1..p, as frozensets of edges."""
    seen = set()
    for order in itertools.permutations(range(1, p + 1)):
        forward = [(order[i], order[j]) for i in range(p) for j in range(i + 1, p)]
        for mask in range(1 << len(forward)):
            edges = frozenset(e for bit, e in enumerate(forward) if mask >> bit & 1)
            if edges not in seen:
                seen.add(edges)
                yield edges


def population_dcor(graph):
    """DC matrices a perfect independence test would produce for ``graph``.

    ``R`` flags every secondary/primary pair joined through an intervention
    followed by a directed path. ``C`` shrinks by half per step along the
    shortest such path, which is one faithful choice of strengths.
    """
    p, q = graph.p, graph.q
    dist = {}
    for k in range(1, p + 1):
        dist[(k, k)] = 0
        frontier, d = {k}, 0
        while frontier:
            d += 1
            frontier = {c for f in frontier for c in graph.children(f)} - {
                j for (kk, j) in dist if kk == k
            }
            for j in frontier:
                dist[(k, j)] = d
    c = np.zeros((q, p))
    for ell, k in graph.interventions:
        for (src, j), d in dist.items():
            if src == k:
                c[ell - 1, j - 1] = max(c[ell - 1, j - 1], 0.5**d)
    rej = (c > 0).astype(np.int8)
    return DcorMatrices(c=c, rejections=rej, alpha=0.05, t=c * 100.0, n=100)


def quadratic_min_cg(normal, rhs, tol=1e-14, max_iter=10_000):
    """Conjugate gradients on ``0.5 b'Ab - b'r`` started from zero."""
    b = np.zeros_like(rhs)
    r = rhs - normal @ b
    d = r.copy()
    rs = r @ r
    for _ in range(max_iter):
        if np.sqrt(rs) < tol:
            break
        ad = normal @ d
        step = rs / (d @ ad)
        b = b + step * d
        r = r - step * ad
        rs_new = r @ r
        d = r + (rs_new / rs) * d
        rs = rs_new
    return b


def random_instrumented(edges, p, rng, *, invalid="candidate"):
    """One valid IV per node plus random extra IVs.

    With ``invalid="candidate"`` an extra IV hits a node and some of its
    descendants; with ``"any"`` it may hit arbitrary other nodes.
    """
    base = CausalGraph(p, 0, edges)
    ints = [(k, k) for k in range(1, p + 1)]
    ell = p
    for k in range(1, p + 1):
        others = sorted(base.descendants(k)) if invalid == "candidate" else [j for j in range(1, p + 1) if j != k]
        if others and rng.random() < 0.5:
            ell += 1
            ints.append((ell, k))
            ints.extend((ell, j) for j in others if rng.random() < 0.5)
    return CausalGraph(p, ell, edges, ints)
