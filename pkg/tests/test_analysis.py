"""Exploration, verdicts, coverability, structural analysis, pressure."""

import math
import random

import pytest

from respetri import (
    ExplorationBound,
    Marking,
    NetModel,
    NodeNotInGraph,
    NotUpwardClosed,
    PlaceDef,
    ProofKind,
    TokenAtom,
    TransitionDef,
    VerdictKind,
    check_forbidden,
    explore,
    find_cycles,
    initial_marking,
    karp_miller,
    pressure_map,
    reachability_pressure,
    siphons_and_traps,
    violation_trace,
)
from respetri.models import build_traffic_model

from oracles import oracle_siphons_traps, random_net

WIDE = ExplorationBound(max_states=10**6, max_depth=10**5, max_tokens_per_place=32)


def chain_net():
    return NetModel(
        places=(PlaceDef("p0"), PlaceDef("p1"), PlaceDef("p2")),
        transitions=(
            TransitionDef("t1", inputs=(("p0", 1),), outputs=(("p1", 1),)),
            TransitionDef("t2", inputs=(("p1", 1),), outputs=(("p2", 1),)),
        ),
        initial=Marking.make({"p0": 1, "p1": 0, "p2": 0}),
        forbidden=(("leak", TokenAtom("p2", ">=", 1)),),
    )


def source_net():
    return NetModel(
        places=(PlaceDef("p"),),
        transitions=(TransitionDef("t", outputs=(("p", 1),)),),
        initial=Marking.make({"p": 0}),
        forbidden=(("flood", TokenAtom("p", ">=", 10)),),
    )


class TestExplore:
    def test_chain_graph(self):
        g = explore(chain_net())
        assert len(g.nodes) == 3
        assert len(g.edges) == 2
        assert not g.truncated
        assert g.depth[g.root] == 0

    def test_monotone_prefix(self):
        g = explore(build_traffic_model())
        max_d = max(g.depth.values())
        for d in range(max_d + 1):
            assert g.nodes_within_depth(d) <= g.nodes_within_depth(d + 1)

    def test_depth_bound_truncates(self):
        g = explore(chain_net(), ExplorationBound(max_depth=1))
        assert g.truncated
        assert max(g.depth.values()) == 1

    def test_state_bound_truncates_but_keeps_edges_to_known_nodes(self):
        g = explore(build_traffic_model(), ExplorationBound(max_states=5))
        assert g.truncated
        assert len(g.nodes) == 5
        for a, _t, b in g.edges:
            assert a in g and b in g

    def test_token_cap_cuts_frontier(self):
        g = explore(source_net(), ExplorationBound(max_tokens_per_place=3))
        assert g.truncated
        assert len(g.nodes) == 4  # p = 0..3
        assert max(m.tokens_map["p"] for m in g.nodes) == 3

    def test_capacitated_place_ignores_token_cap(self):
        m = NetModel(
            places=(PlaceDef("p", capacity=5),),
            transitions=(TransitionDef("t", outputs=(("p", 1),)),),
            initial=Marking.make({"p": 0}),
        )
        g = explore(m, ExplorationBound(max_tokens_per_place=2))
        assert not g.truncated
        assert len(g.nodes) == 6

    def test_worker_confluence(self):
        model = build_traffic_model()
        g1 = explore(model, WIDE, workers=1)
        g3 = explore(model, WIDE, workers=3)
        assert g1.nodes == g3.nodes
        assert g1.edges == g3.edges
        assert g1.depth == g3.depth
        assert g1.truncated == g3.truncated


class TestVerdicts:
    def test_unsafe_with_minimal_trace(self):
        v = check_forbidden(chain_net(), "leak")
        assert v.kind is VerdictKind.UNSAFE
        assert v.proof is ProofKind.VIOLATION_TRACE
        assert v.trace.firings == ("t1", "t2")
        assert v.trace.markings[-1].tokens_map["p2"] == 1

    def test_safe_exhaustive(self):
        m = chain_net()
        m = NetModel(m.places, m.transitions, m.initial,
                     forbidden=(("huge", TokenAtom("p2", ">=", 5)),))
        v = check_forbidden(m, "huge")
        assert v.kind is VerdictKind.SAFE
        assert v.proof is ProofKind.EXHAUSTIVE_BOUNDED

    def test_unknown_when_bound_exhausted(self):
        m = source_net()
        m = NetModel(m.places, m.transitions, m.initial,
                     forbidden=(("never", TokenAtom("p", "=", 999)),))
        v = check_forbidden(m, "never", ExplorationBound(max_tokens_per_place=4))
        assert v.kind is VerdictKind.UNKNOWN
        assert v.proof is ProofKind.BOUND_EXHAUSTED

    def test_safe_by_coverability_on_truncated_graph(self):
        # an unbounded feeder place plus an unreachable target place
        m = NetModel(
            places=(PlaceDef("p"), PlaceDef("q")),
            transitions=(TransitionDef("t", outputs=(("p", 1),)),),
            initial=Marking.make({"p": 0, "q": 0}),
            forbidden=(("qq", TokenAtom("q", ">=", 1)),),
        )
        v = check_forbidden(m, "qq", ExplorationBound(max_tokens_per_place=4))
        assert v.kind is VerdictKind.SAFE
        assert v.proof is ProofKind.COVERABILITY

    def test_unsafe_beyond_bound_found_by_trace_length(self):
        v = check_forbidden(source_net(), "flood", WIDE)
        assert v.kind is VerdictKind.UNSAFE
        assert len(v.trace.firings) == 10

    def test_unknown_predicate_name(self):
        from respetri import UnknownPredicate

        with pytest.raises(UnknownPredicate):
            check_forbidden(chain_net(), "nope")

    def test_root_violation_gives_empty_trace(self):
        m = NetModel(places=(PlaceDef("p"),), transitions=(),
                     initial=Marking.make({"p": 1}),
                     forbidden=(("now", TokenAtom("p", ">=", 1)),))
        v = check_forbidden(m, "now")
        assert v.kind is VerdictKind.UNSAFE
        assert v.trace.firings == ()

    def test_violation_trace_none_when_unreachable(self):
        g = explore(chain_net())
        assert violation_trace(g, TokenAtom("p2", ">=", 5)) is None


class TestKarpMiller:
    def test_rejects_non_upward_closed(self):
        with pytest.raises(NotUpwardClosed):
            karp_miller(chain_net(), TokenAtom("p2", "<=", 1))

    def test_rejects_counter_atoms(self):
        from respetri import CounterAtom

        with pytest.raises(NotUpwardClosed):
            karp_miller(chain_net(), CounterAtom("t2", ">=", 1))

    def test_source_net_unsafe_via_omega(self):
        cov = karp_miller(source_net(), TokenAtom("p", ">=", 10))
        assert cov.verdict.kind is VerdictKind.UNSAFE
        assert any(math.inf in node for node in cov.tree_nodes)
        assert cov.covering_path is not None
        # witness is concrete and replayable
        assert len(cov.verdict.trace.firings) == 10

    def test_bounded_net_safe(self):
        cov = karp_miller(chain_net(), TokenAtom("p2", ">=", 2))
        assert cov.verdict.kind is VerdictKind.SAFE


class TestCycles:
    def test_traffic_loop_present_canonical_rotation(self):
        cycles = find_cycles(build_traffic_model())
        assert ("p2", "t2", "p3", "t4", "p4", "t6") in cycles
        assert ("p3", "t3") in cycles  # codification self-loop

    def test_acyclic_net(self):
        assert find_cycles(chain_net()) == []

    def test_length_bound(self):
        m = build_traffic_model()
        short = find_cycles(m, max_length=2)
        assert all(len(c) <= 2 for c in short)
        assert set(short) <= set(find_cycles(m))

    def test_read_arcs_count_as_dependencies(self):
        m = NetModel(
            places=(PlaceDef("p"),),
            transitions=(TransitionDef("t", reads=(("p", 1),), outputs=(("p", 1),)),),
            initial=Marking.make({"p": 1}),
        )
        assert ("p", "t") in find_cycles(m)


class TestSiphonsTraps:
    def test_hand_example(self):
        # t consumes p and produces q: {p} is a siphon, {q} is a trap
        m = NetModel(
            places=(PlaceDef("p"), PlaceDef("q")),
            transitions=(TransitionDef("t", inputs=(("p", 1),), outputs=(("q", 1),)),),
            initial=Marking.make({"p": 1, "q": 0}),
        )
        siphons, traps = siphons_and_traps(m, max_size=2)
        assert ("p",) in siphons
        assert ("q",) in traps

    def test_against_oracle_on_random_nets(self):
        rng = random.Random(31)
        for _ in range(40):
            model = random_net(rng)
            assert siphons_and_traps(model, 3) == oracle_siphons_traps(model, 3)

    def test_results_are_minimal(self):
        siphons, traps = siphons_and_traps(build_traffic_model(), max_size=4)
        for group in (siphons, traps):
            for s in group:
                assert not any(set(o) < set(s) for o in group)


class TestPressure:
    def test_chain_pressures(self):
        m = chain_net()
        g = explore(m)
        pred = m.forbidden_predicate("leak")
        dist = pressure_map(g, pred)
        trace = violation_trace(g, pred)
        assert [dist[mk] for mk in trace.markings] == [2, 1, 0]

    def test_unreachable_predicate_gives_none(self):
        m = chain_net()
        g = explore(m)
        p = reachability_pressure(g, g.root, TokenAtom("p2", ">=", 5))
        assert p.distance is None
        assert not p.truncated

    def test_node_not_in_graph(self):
        g = explore(chain_net())
        with pytest.raises(NodeNotInGraph):
            reachability_pressure(g, Marking.make({"p0": 9, "p1": 0, "p2": 0}),
                                  TokenAtom("p2", ">=", 1))

    def test_pressure_decreases_along_shortest_trace(self):
        m = build_traffic_model()
        g = explore(m)
        pred = m.forbidden_predicate("gridlock")
        trace = violation_trace(g, pred)
        dist = pressure_map(g, pred)
        series = [dist[mk] for mk in trace.markings]
        assert series == list(range(len(series) - 1, -1, -1))
