from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import all_dags, population_dcor, random_instrumented, reachability
from placid.dcor import DcorMatrices, independence_matrices
from placid.graph import CausalGraph
from placid.peeling import PeelingResult, candidate_sets_from_arg, estimate_arg, transitive_closure
from placid.simulation import SHARED_IV_CHAIN, PRESETS, simulate


def _matrices(c, r):
    c = np.asarray(c, dtype=float)
    return DcorMatrices(c=c, rejections=np.asarray(r, dtype=np.int8), alpha=0.05, t=c, n=10)


def test_chain_population():
    res = estimate_arg(population_dcor(SHARED_IV_CHAIN))
    assert res.arg.ancestral_edges == {(1, 2), (1, 3), (2, 3)}
    assert res.arg.candidate_ivs == {1: {1}, 2: {2, 4}, 3: {3}}
    assert res.levels == ({3}, {2}, {1})
    assert res.leaf_ivs == {3: {3}, 2: {2, 4}, 1: {1}}
    assert not res.stalled and not res.warnings


def test_all_zero_rejections_stall():
    res = estimate_arg(_matrices(np.zeros((3, 2)), np.zeros((3, 2))))
    assert res.stalled
    assert res.levels == ({1, 2},)
    assert res.arg.ancestral_edges == set()
    assert all(not v for v in res.arg.candidate_ivs.values())
    assert len(res.warnings) == 1


def test_single_node():
    res = estimate_arg(_matrices([[0.7]], [[1]]))
    assert res.arg.ancestral_edges == set()
    assert res.arg.candidate_ivs == {1: {1}}


def test_ties_go_to_smallest_index():
    res = estimate_arg(_matrices([[0.5, 0.5], [0.0, 0.9]], [[1, 1], [0, 1]]))
    # X2 picks Y2 first; X1 then sees only Y1.
    assert res.levels[0] == {2}
    tie = estimate_arg(_matrices([[0.5, 0.5]], [[1, 1]]))
    assert tie.levels[0] == {1}
    assert tie.ties


def test_candidate_sets_definition():
    anc = {(1, 2)}
    reach = {(1, 1), (1, 2), (2, 2), (3, 1), (3, 3)}
    assert candidate_sets_from_arg(anc, reach, 3) == {1: {1}, 2: {2}, 3: set()}
    assert candidate_sets_from_arg(set(), set(), 2) == {1: set(), 2: set()}
    assert candidate_sets_from_arg(set(), {(1, 2)}, 2) == {1: set(), 2: {1}}


def test_result_round_trip():
    res = estimate_arg(population_dcor(SHARED_IV_CHAIN))
    back = PeelingResult.from_dict(res.to_dict())
    assert back.arg == res.arg
    assert back.levels == res.levels
    assert back.leaf_ivs == res.leaf_ivs


@pytest.mark.parametrize("invalid", ["candidate", "any"])
def test_population_enumeration(invalid):
    rng = np.random.default_rng(11)
    for p in range(1, 5):
        for edges in all_dags(p):
            g = random_instrumented(edges, p, rng, invalid=invalid)
            res = estimate_arg(population_dcor(g))
            assert res.arg == g.to_arg(), (sorted(edges), sorted(g.interventions))
            heights = res.arg.heights()
            for h, level in enumerate(res.levels):
                assert all(heights[k] == h for k in level)


def test_restoring_a_dependence_keeps_true_edges():
    for p in range(1, 5):
        for edges in all_dags(p):
            g = CausalGraph(p, p, edges, {(k, k) for k in range(1, p + 1)})
            dc = population_dcor(g)
            truth = g.closure
            full = estimate_arg(dc).arg.ancestral_edges & truth
            assert full == truth
            for a, b in zip(*np.nonzero(dc.rejections)):
                r = dc.rejections.copy()
                r[a, b] = 0
                reduced = estimate_arg(replace(dc, rejections=r)).arg.ancestral_edges & truth
                assert reduced <= full


@st.composite
def dc_inputs(draw):
    q = draw(st.integers(1, 6))
    p = draw(st.integers(1, 5))
    r = draw(st.lists(st.lists(st.integers(0, 1), min_size=p, max_size=p), min_size=q, max_size=q))
    c = draw(st.lists(st.lists(st.floats(0, 1), min_size=p, max_size=p), min_size=q, max_size=q))
    return _matrices(c, r)


@settings(max_examples=300, deadline=None)
@given(dc_inputs())
def test_output_invariants_on_arbitrary_input(dc):
    res = estimate_arg(dc)
    q, p = dc.shape
    nodes = [k for level in res.levels for k in level]
    assert sorted(nodes) == list(range(1, p + 1))
    anc = res.arg.ancestral_edges
    assert transitive_closure(anc, p) == anc
    assert reachability(anc, p) == anc
    for k, ivs in res.leaf_ivs.items():
        assert ivs or res.stalled
    again = estimate_arg(dc)
    assert again.arg == res.arg and again.levels == res.levels


def test_finite_sample_chain():
    data = simulate(PRESETS["chain-quadratic-iv"], 0)
    res = estimate_arg(independence_matrices(data.X, data.Y))
    assert res.arg.ancestral_edges == {(1, 2), (1, 3), (2, 3)}
    assert res.arg.candidate_ivs[2] == {2, 4}
