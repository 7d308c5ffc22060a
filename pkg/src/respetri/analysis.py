"""Reachability and coverability engines with forbidden-marking verdicts.

Exploration is breadth-first in canonical transition order and fully
deterministic: the node set, edge set, and every verdict are identical for
any worker count. Counterexamples are shortest traces, replayable through
the token game.
"""

from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import networkx as nx

from .errors import NodeNotInGraph, NotUpwardClosed, UnknownPredicate
from .net import (
    And,
    CounterAtom,
    Marking,
    ModeAtom,
    NetModel,
    Not,
    Or,
    Predicate,
    TokenAtom,
    enabled_set,
    eval_predicate,
    fire,
    initial_marking,
    is_upward_closed,
    predicate_atoms,
)


@dataclass(frozen=True)
class ExplorationBound:
    max_states: int = 1_000_000
    max_depth: int = 10_000
    max_tokens_per_place: int = 64


DEFAULT_BOUND = ExplorationBound()


class VerdictKind(str, Enum):
    SAFE = "safe"
    UNSAFE = "unsafe"
    UNKNOWN = "unknown"


class ProofKind(str, Enum):
    EXHAUSTIVE_BOUNDED = "exhaustive-bounded"
    COVERABILITY = "coverability"
    VIOLATION_TRACE = "violation-trace"
    BOUND_EXHAUSTED = "bound-exhausted"


@dataclass(frozen=True)
class ViolationTrace:
    """A firing sequence from the initial marking to a violating marking."""

    firings: tuple[str, ...]
    markings: tuple[Marking, ...]

    def __post_init__(self):
        assert len(self.markings) == len(self.firings) + 1


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    proof: ProofKind
    checked_predicate: str
    trace: Optional[ViolationTrace] = None

    def __str__(self):
        return f"{self.checked_predicate}: {self.kind.value}/{self.proof.value}"


@dataclass
class ReachGraph:
    """Explored marking graph; every edge (m, t, m') satisfies m' = fire(m, t)."""

    root: Marking
    nodes: list[Marking]
    edges: list[tuple[Marking, str, Marking]]
    depth: dict[Marking, int]
    truncated: bool
    bound: ExplorationBound
    _succ: dict = field(default=None, repr=False)
    _pred: dict = field(default=None, repr=False)

    @property
    def node_set(self) -> frozenset[Marking]:
        return frozenset(self.nodes)

    @property
    def edge_set(self) -> frozenset:
        return frozenset(self.edges)

    def __contains__(self, m: Marking) -> bool:
        return m in self.depth

    def successors(self, m: Marking) -> list[tuple[str, Marking]]:
        if self._succ is None:
            succ: dict[Marking, list] = {n: [] for n in self.nodes}
            for a, t, b in self.edges:
                succ[a].append((t, b))
            self._succ = succ
        return self._succ[m]

    def predecessors(self, m: Marking) -> list[tuple[Marking, str]]:
        if self._pred is None:
            pred: dict[Marking, list] = {n: [] for n in self.nodes}
            for a, t, b in self.edges:
                pred[b].append((a, t))
            self._pred = pred
        return self._pred[m]

    def nodes_within_depth(self, d: int) -> frozenset[Marking]:
        return frozenset(m for m, dep in self.depth.items() if dep <= d)


def _exceeds_token_cut(model: NetModel, m: Marking, cap: int) -> bool:
    for p in model.places:
        if p.capacity is None and m.tokens_at(p.id) > cap:
            return True
    return False


def explore(model: NetModel, bound: ExplorationBound = DEFAULT_BOUND, workers: int = 1) -> ReachGraph:
    """Breadth-first exploration of the reachable marking set.

    Bounds never fail; exceeding one sets the truncation flag. With
    workers > 1, each layer is expanded in parallel and merged in canonical
    order, so the result is bit-identical to single-worker output.
    """
    root = initial_marking(model)
    nodes = [root]
    depth = {root: 0}
    edges: list[tuple[Marking, str, Marking]] = []
    truncated = False
    frontier = [root]
    d = 0

    def expand(m: Marking) -> list[tuple[str, Marking]]:
        return [(t, fire(model, m, t)) for t in enabled_set(model, m)]

    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        while frontier:
            if d >= bound.max_depth:
                if any(enabled_set(model, m) for m in frontier):
                    truncated = True
                break
            if pool is not None:
                expansions = list(pool.map(expand, frontier))
            else:
                expansions = [expand(m) for m in frontier]
            next_frontier: list[Marking] = []
            for m, succs in zip(frontier, expansions):
                for t, m2 in succs:
                    if _exceeds_token_cut(model, m2, bound.max_tokens_per_place):
                        truncated = True
                        continue
                    if m2 not in depth:
                        if len(nodes) >= bound.max_states:
                            truncated = True
                            continue
                        depth[m2] = d + 1
                        nodes.append(m2)
                        next_frontier.append(m2)
                    edges.append((m, t, m2))
            frontier = next_frontier
            d += 1
    finally:
        if pool is not None:
            pool.shutdown()
    return ReachGraph(root, nodes, edges, depth, truncated, bound)


def violation_trace(graph: ReachGraph, predicate: Predicate) -> Optional[ViolationTrace]:
    """Shortest trace (BFS layers, canonical tie-break) to a satisfying node."""
    parent: dict[Marking, tuple[Marking, str]] = {}
    seen = {graph.root}
    queue = deque([graph.root])
    target = None
    if eval_predicate(predicate, graph.root):
        target = graph.root
    while queue and target is None:
        m = queue.popleft()
        for t, m2 in graph.successors(m):
            if m2 in seen:
                continue
            seen.add(m2)
            parent[m2] = (m, t)
            if eval_predicate(predicate, m2):
                target = m2
                break
            queue.append(m2)
    if target is None:
        return None
    firings: list[str] = []
    markings = [target]
    cur = target
    while cur in parent:
        prev, t = parent[cur]
        firings.append(t)
        markings.append(prev)
        cur = prev
    return ViolationTrace(tuple(reversed(firings)), tuple(reversed(markings)))


def check_forbidden(model: NetModel, predicate_name: str,
                    bound: ExplorationBound = DEFAULT_BOUND, workers: int = 1) -> Verdict:
    """Verdict for one named forbidden predicate.

    Unsafe carries a minimal-length replayable trace. Safe/ExhaustiveBounded
    requires an untruncated exploration; Safe/Coverability is attempted for
    upward-closed token-only predicates when the bound was exhausted.
    """
    pred = model.forbidden_predicate(predicate_name)
    graph = explore(model, bound, workers)
    trace = violation_trace(graph, pred)
    if trace is not None:
        return Verdict(VerdictKind.UNSAFE, ProofKind.VIOLATION_TRACE, predicate_name, trace)
    if not graph.truncated:
        return Verdict(VerdictKind.SAFE, ProofKind.EXHAUSTIVE_BOUNDED, predicate_name)
    if is_upward_closed(pred) and not any(
        isinstance(a, (CounterAtom, ModeAtom)) for a in predicate_atoms(pred)
    ):
        cov = karp_miller(model, pred, predicate_name=predicate_name)
        if cov.verdict.kind is VerdictKind.SAFE:
            return Verdict(VerdictKind.SAFE, ProofKind.COVERABILITY, predicate_name)
    return Verdict(VerdictKind.UNKNOWN, ProofKind.BOUND_EXHAUSTED, predicate_name)


# ---------------------------------------------------------------------------
# Karp-Miller coverability
# ---------------------------------------------------------------------------

OMEGA = math.inf


@dataclass
class CoverabilityResult:
    verdict: Verdict
    tree_nodes: list[tuple]              # omega-markings in place order
    tree_edges: list[tuple[int, str, int]]
    covering_path: Optional[tuple[str, ...]] = None


def _minimal_target_markings(pred: Predicate, place_order: tuple[str, ...]) -> list[tuple[int, ...]]:
    """Minimal markings of an upward-closed predicate, via DNF."""
    idx = {p: i for i, p in enumerate(place_order)}

    def rec(node) -> list[dict]:
        if isinstance(node, TokenAtom):
            need = node.value if node.op == ">=" else node.value + 1
            return [{node.place: max(need, 0)}]
        if isinstance(node, And):
            combos = [{}]
            for op in node.operands:
                combos = [
                    {p: max(a.get(p, 0), b.get(p, 0)) for p in {*a, *b}}
                    for a in combos
                    for b in rec(op)
                ]
            return combos
        if isinstance(node, Or):
            out = []
            for op in node.operands:
                out.extend(rec(op))
            return out
        raise NotUpwardClosed(f"unsupported atom in coverability target: {node!r}")

    result = []
    for combo in rec(pred):
        vec = [0] * len(place_order)
        for p, v in combo.items():
            vec[idx[p]] = v
        result.append(tuple(vec))
    return result


def _plain_projection(model: NetModel):
    """(need, delta) vectors per transition, ignoring inhibitors, guards,
    capacities, and modes. Over-approximates the true semantics, so an
    uncoverable verdict is sound for the full net."""
    order = model.place_ids
    idx = {p: i for i, p in enumerate(order)}
    rows = []
    for t in model.transitions:
        need = [0] * len(order)
        delta = [0] * len(order)
        for p, w in t.inputs:
            need[idx[p]] += w
            delta[idx[p]] -= w
        for p, w in t.reads:
            need[idx[p]] = max(need[idx[p]], w)
        for p, w in t.outputs:
            delta[idx[p]] += w
        rows.append((t.id, tuple(need), tuple(delta)))
    return order, rows


def _covers(m: tuple, target: tuple) -> bool:
    return all(a >= b for a, b in zip(m, target))


def karp_miller(model: NetModel, target: Predicate, *,
                predicate_name: str = "<target>") -> CoverabilityResult:
    """Classical Karp-Miller tree with omega-acceleration.

    The tree is built over the plain projection of the net (inhibitors,
    guards, capacities, and modes dropped), which over-approximates
    reachability: an uncoverable verdict is sound for the full net. When the
    target is coverable, a concrete witness trace is extracted by bounded
    exploration under the full semantics when one can be found.
    """
    if not is_upward_closed(target):
        raise NotUpwardClosed("target predicate is not syntactically upward-closed")
    if any(isinstance(a, (CounterAtom, ModeAtom)) for a in predicate_atoms(target)):
        raise NotUpwardClosed("coverability targets may not use counter or mode atoms")

    order, rows = _plain_projection(model)
    targets = _minimal_target_markings(target, order)
    root = tuple(initial_marking(model).tokens_at(p) for p in order)

    tree_nodes: list[tuple] = [root]
    tree_edges: list[tuple[int, str, int]] = []
    parents: dict[int, int] = {}
    via: dict[int, str] = {}
    seen: dict[tuple, int] = {root: 0}
    worklist = deque([0])

    def ancestors(i: int):
        while True:
            yield i
            if i not in parents:
                return
            i = parents[i]

    while worklist:
        node = worklist.popleft()
        m = tree_nodes[node]
        for tid, need, delta in rows:
            if not all(m[i] >= need[i] for i in range(len(order))):
                continue
            m2 = list(a + d for a, d in zip(m, delta))
            # omega-acceleration against ancestors on the path
            changed = True
            while changed:
                changed = False
                for anc in ancestors(node):
                    am = tree_nodes[anc]
                    if all(a <= b for a, b in zip(am, m2)) and any(
                        a < b for a, b in zip(am, m2)
                    ):
                        for i in range(len(order)):
                            if am[i] < m2[i] and m2[i] != OMEGA:
                                m2[i] = OMEGA
                                changed = True
            m2 = tuple(m2)
            child = len(tree_nodes)
            tree_nodes.append(m2)
            tree_edges.append((node, tid, child))
            parents[child] = node
            via[child] = tid
            if m2 not in seen:
                seen[m2] = child
                worklist.append(child)

    covering = None
    for i, m in enumerate(tree_nodes):
        if any(_covers(m, t) for t in targets):
            covering = i
            break

    if covering is None:
        verdict = Verdict(VerdictKind.SAFE, ProofKind.COVERABILITY, predicate_name)
        return CoverabilityResult(verdict, tree_nodes, tree_edges)

    path = []
    i = covering
    while i in via:
        path.append(via[i])
        i = parents[i]
    path = tuple(reversed(path))
    trace = _concrete_witness(model, target, targets, order)
    verdict = Verdict(VerdictKind.UNSAFE, ProofKind.VIOLATION_TRACE, predicate_name, trace)
    return CoverabilityResult(verdict, tree_nodes, tree_edges, covering_path=path)


def _concrete_witness(model: NetModel, target: Predicate, targets, order):
    """Bounded search under the full semantics for a marking covering the target."""
    base_cap = max((max(t) for t in targets), default=1)
    for cap in (base_cap + 2, (base_cap + 2) * 4, (base_cap + 2) * 16):
        bound = ExplorationBound(max_states=200_000, max_depth=10_000, max_tokens_per_place=cap)
        graph = explore(model, bound)
        trace = violation_trace(graph, target)
        if trace is not None:
            return trace
        if not graph.truncated:
            return None
    return None


# ---------------------------------------------------------------------------
# Structural analysis
# ---------------------------------------------------------------------------

def find_cycles(model: NetModel, max_length: Optional[int] = 16) -> list[tuple[str, ...]]:
    """Elementary cycles of the bipartite net graph, canonically rotated.

    Cycles alternate place and transition identifiers; each is rotated so its
    smallest identifier comes first. Length is counted in nodes and capped at
    max_length (None for no cap).
    """
    g = nx.DiGraph()
    g.add_nodes_from(model.place_ids)
    g.add_nodes_from(model.transition_ids)
    for t in model.transitions:
        for p, _ in t.inputs:
            g.add_edge(p, t.id)
        for p, _ in t.reads:
            g.add_edge(p, t.id)
        for p, _ in t.outputs:
            g.add_edge(t.id, p)
    out = set()
    for cycle in nx.simple_cycles(g, length_bound=max_length):
        k = cycle.index(min(cycle))
        out.add(tuple(cycle[k:] + cycle[:k]))
    return sorted(out, key=lambda c: (len(c), c))


def _place_pre_post(model: NetModel):
    producers: dict[str, set[str]] = {p.id: set() for p in model.places}
    consumers: dict[str, set[str]] = {p.id: set() for p in model.places}
    requirers: dict[str, set[str]] = {p.id: set() for p in model.places}
    for t in model.transitions:
        for p, _ in t.outputs:
            producers[p].add(t.id)
        for p, _ in t.inputs:
            consumers[p].add(t.id)
            requirers[p].add(t.id)
        for p, _ in t.reads:
            requirers[p].add(t.id)
    return producers, consumers, requirers


def siphons_and_traps(model: NetModel, max_size: int = 4) -> tuple[list[tuple[str, ...]], list[tuple[str, ...]]]:
    """Minimal siphons and traps of size <= max_size.

    A siphon stays empty once emptied: every transition producing into the
    set also requires tokens from it. A trap stays marked once marked: every
    transition consuming from the set also produces into it. Guards and
    inhibitors are ignored (structural notions).
    """
    producers, consumers, requirers = _place_pre_post(model)
    places = sorted(p.id for p in model.places)

    def union(mapping, subset):
        out = set()
        for p in subset:
            out |= mapping[p]
        return out

    def search(is_hit) -> list[tuple[str, ...]]:
        minimal: list[frozenset] = []

        def covered(s: frozenset) -> bool:
            return any(m <= s for m in minimal)

        from itertools import combinations

        for size in range(1, max_size + 1):
            for combo in combinations(places, size):
                s = frozenset(combo)
                if covered(s):
                    continue  # a smaller siphon/trap is inside; not minimal
                if is_hit(s):
                    minimal.append(s)
        return sorted((tuple(sorted(s)) for s in minimal), key=lambda c: (len(c), c))

    siphons = search(lambda s: union(producers, s) <= union(requirers, s))
    traps = search(lambda s: union(consumers, s) <= union(producers, s))
    return siphons, traps


# ---------------------------------------------------------------------------
# Reachability pressure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Pressure:
    """Distance in firings to the nearest satisfying marking in the graph.

    distance is None when no explored marking satisfies the predicate; the
    truncated flag distinguishes proven-safe from merely unexplored.
    """

    distance: Optional[int]
    truncated: bool


def pressure_map(graph: ReachGraph, predicate: Predicate) -> dict[Marking, Optional[int]]:
    """Minimum firings from every node to any satisfying node (reverse BFS)."""
    dist: dict[Marking, Optional[int]] = {m: None for m in graph.nodes}
    queue = deque()
    for m in graph.nodes:
        if eval_predicate(predicate, m):
            dist[m] = 0
            queue.append(m)
    while queue:
        m = queue.popleft()
        for prev, _t in graph.predecessors(m):
            if dist[prev] is None:
                dist[prev] = dist[m] + 1
                queue.append(prev)
    return dist


def reachability_pressure(graph: ReachGraph, m: Marking, predicate: Predicate) -> Pressure:
    """Pressure of one marking; raises NodeNotInGraph for unexplored markings."""
    if m not in graph:
        raise NodeNotInGraph(f"marking is not a node of the explored graph")
    return Pressure(pressure_map(graph, predicate)[m], graph.truncated)


def check_all_forbidden(model: NetModel, bound: ExplorationBound = DEFAULT_BOUND,
                        workers: int = 1) -> dict[str, Verdict]:
    """Verdicts for every named forbidden predicate of the model."""
    if not model.forbidden:
        return {}
    return {
        name: check_forbidden(model, name, bound, workers)
        for name, _ in model.forbidden
    }
