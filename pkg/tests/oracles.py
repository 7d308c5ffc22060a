"""Independent reference implementations used to cross-check the library.

Everything here re-derives the semantics from the data structures alone and
deliberately avoids calling the library's enabling/firing/exploration code,
so agreement between the two is meaningful evidence.
"""

from __future__ import annotations

import random
from itertools import combinations

from respetri.net import (
    And,
    CounterAtom,
    Marking,
    ModeAtom,
    NetModel,
    Not,
    Or,
    PlaceDef,
    TokenAtom,
    TransitionDef,
)

MODE_PREFIX = "mode_"


# ---------------------------------------------------------------------------
# Reference semantics (state = (tokens dict, counters dict))
# ---------------------------------------------------------------------------

def _eval(pred, tokens, counters):
    if isinstance(pred, TokenAtom):
        lhs = tokens[pred.place]
    elif isinstance(pred, CounterAtom):
        lhs = counters.get(pred.transition, 0)
    elif isinstance(pred, ModeAtom):
        return tokens[MODE_PREFIX + pred.mode] >= 1
    elif isinstance(pred, Not):
        return not _eval(pred.operand, tokens, counters)
    elif isinstance(pred, And):
        return all(_eval(p, tokens, counters) for p in pred.operands)
    elif isinstance(pred, Or):
        return any(_eval(p, tokens, counters) for p in pred.operands)
    else:
        raise TypeError(pred)
    return {"<": lhs < pred.value, "<=": lhs <= pred.value, "=": lhs == pred.value,
            ">=": lhs >= pred.value, ">": lhs > pred.value}[pred.op]


def _active_mode(model: NetModel, tokens):
    if not model.modes:
        return None
    marked = [md for md in model.modes if tokens[MODE_PREFIX + md.id] >= 1]
    assert len(marked) == 1
    return marked[0]


def oracle_enabled(model: NetModel, tokens, counters, t: TransitionDef) -> bool:
    for p, w in t.inputs:
        if tokens[p] < w:
            return False
    for p, w in t.reads:
        if tokens[p] < w:
            return False
    for p, th in t.inhibitors:
        if tokens[p] >= th:
            return False
    mode = _active_mode(model, tokens)
    if mode is not None and t.id in mode.disabled:
        return False
    guard = t.guard
    if mode is not None:
        for tid, g in mode.guard_overrides:
            if tid == t.id:
                guard = g
    if guard is not None and not _eval(guard, tokens, counters):
        return False
    after = dict(tokens)
    for p, w in t.inputs:
        after[p] -= w
    for p, w in t.outputs:
        after[p] += w
    for place in model.places:
        if place.capacity is not None and after[place.id] > place.capacity:
            return False
    return True


def oracle_fire(tokens, counters, t: TransitionDef):
    tokens = dict(tokens)
    for p, w in t.inputs:
        tokens[p] -= w
    for p, w in t.outputs:
        tokens[p] += w
    counters = dict(counters)
    if t.counted:
        counters[t.id] = counters.get(t.id, 0) + 1
    return tokens, counters


def _key(tokens, counters):
    return (tuple(sorted(tokens.items())), tuple(sorted(counters.items())))


def oracle_explore(model: NetModel, token_cap: int):
    """Full enumeration of the cap-cut reachable set.

    Returns (nodes, edges, truncated) where nodes/edges use
    (sorted-token-tuple, sorted-counter-tuple) keys. A successor pushing any
    uncapacitated place above token_cap is discarded and sets truncated.
    """
    tokens0 = dict(model.initial.tokens_map)
    counters0 = {t.id: model.initial.counters_map.get(t.id, 0)
                 for t in model.transitions if t.counted}
    root = _key(tokens0, counters0)
    nodes = {root}
    edges = set()
    truncated = False
    stack = [(tokens0, counters0)]
    while stack:
        tokens, counters = stack.pop()
        k = _key(tokens, counters)
        for t in model.transitions:
            if not oracle_enabled(model, tokens, counters, t):
                continue
            t2, c2 = oracle_fire(tokens, counters, t)
            if any(t2[p.id] > token_cap for p in model.places if p.capacity is None):
                truncated = True
                continue
            k2 = _key(t2, c2)
            edges.add((k, t.id, k2))
            if k2 not in nodes:
                nodes.add(k2)
                stack.append((t2, c2))
    return nodes, edges, truncated


def oracle_verdict(model: NetModel, pred, token_cap: int) -> str:
    """'unsafe' | 'safe' | 'unknown' over the cap-cut enumeration."""
    nodes, _edges, truncated = oracle_explore(model, token_cap)
    for tok, cnt in nodes:
        if _eval(pred, dict(tok), dict(cnt)):
            return "unsafe"
    return "unknown" if truncated else "safe"


def marking_key(m: Marking):
    return (m.tokens, m.counters)


# ---------------------------------------------------------------------------
# Structural oracles
# ---------------------------------------------------------------------------

def oracle_siphons_traps(model: NetModel, max_size: int):
    """All minimal siphons/traps up to max_size by direct subset testing."""
    places = sorted(p.id for p in model.places)

    def producers(s):
        return {t.id for t in model.transitions if any(p in s for p, _ in t.outputs)}

    def consumers(s):
        return {t.id for t in model.transitions if any(p in s for p, _ in t.inputs)}

    def requirers(s):
        return consumers(s) | {
            t.id for t in model.transitions if any(p in s for p, _ in t.reads)
        }

    def collect(hit):
        found = []
        for size in range(1, max_size + 1):
            for combo in combinations(places, size):
                s = set(combo)
                if any(set(f) <= s for f in found):
                    continue
                if hit(s):
                    found.append(tuple(sorted(s)))
        return sorted(found, key=lambda c: (len(c), c))

    siphons = collect(lambda s: producers(s) <= requirers(s))
    traps = collect(lambda s: consumers(s) <= producers(s))
    return siphons, traps


# ---------------------------------------------------------------------------
# Random model generator
# ---------------------------------------------------------------------------

def random_net(rng: random.Random, *, plain: bool = False) -> NetModel:
    """Small random net (<= 5 places, <= 5 transitions, <= 3 initial tokens).

    With plain=True only inputs/outputs/reads with weights are generated
    (no inhibitors, guards, capacities, or counters) — the class on which
    the coverability projection is exact.
    """
    n_places = rng.randint(1, 5)
    n_trans = rng.randint(1, 5)
    pids = [f"P{i}" for i in range(n_places)]
    places = []
    for pid in pids:
        cap = rng.choice([None, None, None, rng.randint(1, 4)]) if not plain else None
        places.append(PlaceDef(pid, capacity=cap))
    caps = {p.id: p.capacity for p in places}
    init = {p: rng.randint(0, 3) for p in pids}
    for p in pids:
        if caps[p] is not None:
            init[p] = min(init[p], caps[p])

    transitions = []
    for i in range(n_trans):
        inputs = tuple((p, rng.randint(1, 2))
                       for p in rng.sample(pids, rng.randint(0, min(2, n_places))))
        outputs = tuple((p, rng.randint(1, 2))
                        for p in rng.sample(pids, rng.randint(0, min(2, n_places))))
        reads = ()
        inhibitors = ()
        guard = None
        if rng.random() < 0.3:
            reads = ((rng.choice(pids), rng.randint(1, 2)),)
        if not plain:
            in_map = dict(inputs)
            if rng.random() < 0.3:
                p = rng.choice(pids)
                # keep satisfiable when p is also an input
                th = rng.randint(in_map.get(p, 0) + 1, in_map.get(p, 0) + 3)
                inhibitors = ((p, th),)
            if rng.random() < 0.2:
                guard = TokenAtom(rng.choice(pids), rng.choice(["<", "<=", ">=", ">"]),
                                  rng.randint(0, 3))
        # Counted transitions are excluded: a counter on a loop makes the
        # marking space infinite under a pure token cap, so exhaustive
        # enumeration would never finish. Counters are covered by the
        # fixture and unit tests instead.
        transitions.append(TransitionDef(f"T{i}", inputs, outputs, inhibitors,
                                         reads, guard, False))

    return NetModel(places=tuple(places), transitions=tuple(transitions),
                    initial=Marking.make(init))


def random_predicate(rng: random.Random, model: NetModel, *,
                     upward_closed: bool = False):
    """1-3 random token atoms joined by a random connective."""
    ops = (">=", ">") if upward_closed else ("<", "<=", "=", ">=", ">")
    atoms = [
        TokenAtom(rng.choice(model.place_ids), rng.choice(ops), rng.randint(0, 4))
        for _ in range(rng.randint(1, 3))
    ]
    if len(atoms) == 1:
        return atoms[0]
    return rng.choice([And, Or])(tuple(atoms))
