import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import all_paths, reachability
from placid.errors import CycleError
from placid.graph import (
    AncestralGraph,
    CausalGraph,
    candidate_sets,
    find_cycle,
    topological_order,
    transitive_closure,
)

SHARED_IV_CHAIN = CausalGraph(3, 4, {(1, 2), (2, 3)}, {(1, 1), (2, 2), (4, 2), (4, 3), (3, 3)})
CHAIN = CausalGraph(3, 3, {(1, 2), (2, 3)}, {(1, 1), (2, 2), (3, 3)})
DIAMOND = CausalGraph(4, 0, {(1, 2), (2, 4), (1, 3), (3, 4)})


@st.composite
def dags(draw, max_p=6, max_q=6):
    p = draw(st.integers(1, max_p))
    q = draw(st.integers(0, max_q))
    order = draw(st.permutations(range(1, p + 1)))
    forward = [(order[i], order[j]) for i in range(p) for j in range(i + 1, p)]
    edges = draw(st.sets(st.sampled_from(forward), max_size=len(forward))) if forward else set()
    pairs = [(ell, j) for ell in range(1, q + 1) for j in range(1, p + 1)]
    ints = draw(st.sets(st.sampled_from(pairs), max_size=len(pairs))) if pairs else set()
    return CausalGraph(p, q, edges, ints)


class TestSharedInstrumentChain:
    def test_parents_ancestors(self):
        assert SHARED_IV_CHAIN.parents(3) == {2}
        assert SHARED_IV_CHAIN.ancestors(2) == {1}
        assert SHARED_IV_CHAIN.ancestors(3) == {1, 2}

    def test_mediators_and_paths(self):
        assert SHARED_IV_CHAIN.mediators(1, 3) == {2}
        assert SHARED_IV_CHAIN.longest_path_len(1, 3) == 2
        assert SHARED_IV_CHAIN.longest_path_len(3, 3) is None
        assert SHARED_IV_CHAIN.height(1) == 2
        assert SHARED_IV_CHAIN.leaves() == {3}

    def test_instruments(self):
        assert SHARED_IV_CHAIN.valid_ivs(2) == {2}
        assert SHARED_IV_CHAIN.candidate_ivs(2) == {2, 4}
        assert SHARED_IV_CHAIN.candidate_ivs(3) == {3}
        assert SHARED_IV_CHAIN.valid_ivs(1) == SHARED_IV_CHAIN.candidate_ivs(1) == {1}

    def test_arg(self):
        arg = SHARED_IV_CHAIN.to_arg()
        assert arg.ancestral_edges == {(1, 2), (1, 3), (2, 3)}
        assert {(1, 1), (1, 2), (1, 3), (2, 2), (2, 3), (3, 3), (4, 2), (4, 3)} == arg.reach_edges
        assert arg.candidate_ivs == {1: {1}, 2: {2, 4}, 3: {3}}


def test_small_graphs():
    empty = CausalGraph(3, 2, set(), {(1, 1), (2, 3)})
    assert empty.parents(2) == set()
    assert empty.leaves() == {1, 2, 3}
    assert empty.to_arg().ancestral_edges == set()
    assert empty.to_arg().reach_edges == {(1, 1), (2, 3)}
    assert empty.valid_ivs(2) == set()

    assert CHAIN.parents(2) == {1}
    assert CHAIN.ancestors(3) == {1, 2}
    assert CHAIN.leaves() == {3}
    assert len(CHAIN.to_arg().ancestral_edges) == 3
    assert CausalGraph(2, 0, {(1, 2)}).mediators(1, 2) == set()

    shared = CausalGraph(2, 1, set(), {(1, 1), (1, 2)})
    assert shared.valid_ivs(1) == set()


def test_diamond():
    assert DIAMOND.mediators(1, 4) == {2, 3}
    assert DIAMOND.height(1) == 2
    assert DIAMOND.longest_path_len(1, 4) == 2
    paths = all_paths(DIAMOND.edges, 1, 4)
    assert {n for path in paths for n in path[1:-1]} == DIAMOND.mediators(1, 4)


def test_errors():
    with pytest.raises(CycleError) as info:
        CausalGraph(3, 0, {(1, 2), (2, 3), (3, 1)})
    assert info.value.cycle[0] == info.value.cycle[-1]
    with pytest.raises(ValueError):
        CausalGraph(2, 1, {(1, 3)})
    with pytest.raises(ValueError):
        CausalGraph(2, 1, set(), {(2, 1)})
    with pytest.raises(IndexError):
        SHARED_IV_CHAIN.parents(4)
    with pytest.raises(ValueError):
        AncestralGraph(3, 0, {(1, 2), (2, 3)})
    with pytest.raises(CycleError):
        transitive_closure({(1, 2), (2, 1)}, 2)


def test_closure_examples():
    assert transitive_closure({(1, 2), (2, 3)}, 3) == {(1, 2), (2, 3), (1, 3)}
    assert transitive_closure(set(), 4) == set()
    assert find_cycle({(1, 2)}, 2) is None


def test_serialization_round_trip():
    assert CausalGraph.from_json(SHARED_IV_CHAIN.to_json()) == SHARED_IV_CHAIN
    arg = SHARED_IV_CHAIN.to_arg()
    assert AncestralGraph.from_json(arg.to_json()) == arg
    payload = json.loads(SHARED_IV_CHAIN.to_json())
    assert payload == {
        "p": 3,
        "q": 4,
        "edges": [[1, 2], [2, 3]],
        "interventions": [[1, 1], [2, 2], [3, 3], [4, 2], [4, 3]],
    }


def test_dot():
    dot = SHARED_IV_CHAIN.to_dot()
    assert "Y1 [shape=ellipse];" in dot
    assert "X4 [shape=box];" in dot
    assert "Y1 -> Y2;" in dot
    assert "X4 -> Y3 [style=dashed];" in dot


@settings(max_examples=200, deadline=None)
@given(dags())
def test_closure_matches_matrix_powers(g):
    assert g.to_arg().ancestral_edges == reachability(g.edges, g.p)


@settings(max_examples=150, deadline=None)
@given(dags())
def test_graph_invariants(g):
    order = topological_order(g.edges, g.p)
    position = {k: i for i, k in enumerate(order)}
    arg = g.to_arg()
    for k, j in g.edges:
        assert position[k] < position[j]
        assert g.height(k) > g.height(j)
    for j in range(1, g.p + 1):
        assert g.valid_ivs(j) <= g.candidate_ivs(j)
        assert g.candidate_ivs(j) <= {ell for ell, jj in arg.reach_edges if jj == j}
    for k, j in arg.ancestral_edges:
        assert g.mediators(k, j) | g.non_mediators(k, j) | {k} == g.ancestors(j)
        paths = all_paths(g.edges, k, j)
        assert g.longest_path_len(k, j) == max(len(path) - 1 for path in paths)
        assert g.mediators(k, j) == {n for path in paths for n in path[1:-1]}
    assert candidate_sets(arg.ancestral_edges, arg.reach_edges, g.p) == arg.candidate_ivs
