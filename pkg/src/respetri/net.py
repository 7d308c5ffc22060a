"""Net data model and token-game firing semantics.

Supports weighted arcs, inhibitor and read (permit) arcs, capacity places,
marking guards, firing counters, and policy modes. Models and markings are
immutable values; every operation here is a pure function.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Union

from .errors import NotEnabled, UnknownReference, UnknownTransition

MODE_PLACE_PREFIX = "mode_"

_OPS = {
    "<": operator.lt,
    "<=": operator.le,
    "=": operator.eq,
    ">=": operator.ge,
    ">": operator.gt,
}


# ---------------------------------------------------------------------------
# Predicates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TokenAtom:
    """tokens(place) <op> value"""

    place: str
    op: str
    value: int

    def __post_init__(self):
        if self.op not in _OPS:
            raise ValueError(f"bad comparison operator {self.op!r}")


@dataclass(frozen=True)
class CounterAtom:
    """counter(transition) <op> value"""

    transition: str
    op: str
    value: int

    def __post_init__(self):
        if self.op not in _OPS:
            raise ValueError(f"bad comparison operator {self.op!r}")


@dataclass(frozen=True)
class ModeAtom:
    """mode = name (true iff the named mode's place is marked)"""

    mode: str


@dataclass(frozen=True)
class Not:
    operand: "Predicate"


@dataclass(frozen=True)
class And:
    operands: tuple["Predicate", ...]


@dataclass(frozen=True)
class Or:
    operands: tuple["Predicate", ...]


Predicate = Union[TokenAtom, CounterAtom, ModeAtom, Not, And, Or]


def predicate_atoms(pred: Predicate) -> Iterable[Predicate]:
    """Yield every atom of the expression tree."""
    stack = [pred]
    while stack:
        node = stack.pop()
        if isinstance(node, (And, Or)):
            stack.extend(node.operands)
        elif isinstance(node, Not):
            stack.append(node.operand)
        else:
            yield node


def is_upward_closed(pred: Predicate) -> bool:
    """Syntactic upward-closure check (sound, not complete).

    A predicate qualifies iff it is NOT-free, contains no mode atoms, and all
    token/counter atoms use >= or >.
    """
    stack = [pred]
    while stack:
        node = stack.pop()
        if isinstance(node, Not):
            return False
        if isinstance(node, ModeAtom):
            return False
        if isinstance(node, (And, Or)):
            stack.extend(node.operands)
        elif isinstance(node, (TokenAtom, CounterAtom)):
            if node.op not in (">=", ">"):
                return False
    return True


# ---------------------------------------------------------------------------
# Markings
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Marking:
    """Total map place -> token count, plus counter values for counted transitions."""

    tokens: tuple[tuple[str, int], ...]
    counters: tuple[tuple[str, int], ...] = ()
    _tok: dict = field(init=False, repr=False, compare=False, default=None)
    _cnt: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(sorted(self.tokens)))
        object.__setattr__(self, "counters", tuple(sorted(self.counters)))
        object.__setattr__(self, "_tok", dict(self.tokens))
        object.__setattr__(self, "_cnt", dict(self.counters))

    @classmethod
    def make(cls, tokens: Mapping[str, int], counters: Mapping[str, int] | None = None) -> "Marking":
        return cls(tuple(tokens.items()), tuple((counters or {}).items()))

    def tokens_at(self, place: str) -> int:
        try:
            return self._tok[place]
        except KeyError:
            raise UnknownReference(f"unknown place {place!r}") from None

    def counter_of(self, transition: str) -> int:
        return self._cnt.get(transition, 0)

    @property
    def tokens_map(self) -> Mapping[str, int]:
        return self._tok

    @property
    def counters_map(self) -> Mapping[str, int]:
        return self._cnt

    def __hash__(self):
        return hash((self.tokens, self.counters))


def eval_predicate(pred: Predicate, m: Marking) -> bool:
    """Truth value of a predicate at a marking. Total and side-effect free."""
    if isinstance(pred, TokenAtom):
        return _OPS[pred.op](m.tokens_at(pred.place), pred.value)
    if isinstance(pred, CounterAtom):
        return _OPS[pred.op](m.counter_of(pred.transition), pred.value)
    if isinstance(pred, ModeAtom):
        return m.tokens_at(MODE_PLACE_PREFIX + pred.mode) >= 1
    if isinstance(pred, Not):
        return not eval_predicate(pred.operand, m)
    if isinstance(pred, And):
        return all(eval_predicate(p, m) for p in pred.operands)
    if isinstance(pred, Or):
        return any(eval_predicate(p, m) for p in pred.operands)
    raise TypeError(f"not a predicate: {pred!r}")


# ---------------------------------------------------------------------------
# Net structure
# ---------------------------------------------------------------------------

def _norm_arcs(arcs) -> tuple[tuple[str, int], ...]:
    return tuple(sorted((str(p), int(w)) for p, w in arcs))


@dataclass(frozen=True)
class PlaceDef:
    id: str
    capacity: Optional[int] = None
    label: str = ""


@dataclass(frozen=True)
class TransitionDef:
    id: str
    inputs: tuple[tuple[str, int], ...] = ()
    outputs: tuple[tuple[str, int], ...] = ()
    inhibitors: tuple[tuple[str, int], ...] = ()
    reads: tuple[tuple[str, int], ...] = ()
    guard: Optional[Predicate] = None
    counted: bool = False

    def __post_init__(self):
        object.__setattr__(self, "inputs", _norm_arcs(self.inputs))
        object.__setattr__(self, "outputs", _norm_arcs(self.outputs))
        object.__setattr__(self, "inhibitors", _norm_arcs(self.inhibitors))
        object.__setattr__(self, "reads", _norm_arcs(self.reads))


@dataclass(frozen=True)
class ModeDef:
    id: str
    disabled: frozenset = frozenset()
    guard_overrides: tuple[tuple[str, Predicate], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "disabled", frozenset(self.disabled))
        object.__setattr__(self, "guard_overrides", tuple(sorted(self.guard_overrides, key=lambda kv: kv[0])))

    @property
    def place_id(self) -> str:
        return MODE_PLACE_PREFIX + self.id

    def override_for(self, transition: str) -> Optional[Predicate]:
        for t, g in self.guard_overrides:
            if t == transition:
                return g
        return None


# ---------------------------------------------------------------------------
# Audit rules (model-level declarations; evaluated by the audit module)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CounterThreshold:
    id: str
    transition: str
    threshold: int


@dataclass(frozen=True)
class RateThreshold:
    id: str
    transition: str
    max_firings: int
    window: int


@dataclass(frozen=True)
class OccupancyThreshold:
    id: str
    place: str
    op: str
    level: int


@dataclass(frozen=True)
class PressureThreshold:
    id: str
    predicate: str
    max_distance: int


AuditRule = Union[CounterThreshold, RateThreshold, OccupancyThreshold, PressureThreshold]


@dataclass(frozen=True)
class NetModel:
    """Immutable net structure; the unit all analysis and simulation operates on."""

    places: tuple[PlaceDef, ...]
    transitions: tuple[TransitionDef, ...]
    initial: Marking
    forbidden: tuple[tuple[str, Predicate], ...] = ()
    audit_rules: tuple[AuditRule, ...] = ()
    modes: tuple[ModeDef, ...] = ()
    metadata: tuple[tuple[str, str], ...] = ()
    _pindex: dict = field(init=False, repr=False, compare=False, default=None)
    _tindex: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "places", tuple(self.places))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        object.__setattr__(self, "forbidden", tuple(self.forbidden))
        object.__setattr__(self, "audit_rules", tuple(self.audit_rules))
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "metadata", tuple(sorted(self.metadata)))
        object.__setattr__(self, "_pindex", {p.id: p for p in self.places})
        object.__setattr__(self, "_tindex", {t.id: t for t in self.transitions})

    # -- lookups ------------------------------------------------------------

    @property
    def place_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.places)

    @property
    def transition_ids(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.transitions)

    def place(self, pid: str) -> PlaceDef:
        try:
            return self._pindex[pid]
        except KeyError:
            raise UnknownReference(f"unknown place {pid!r}") from None

    def transition(self, tid: str) -> TransitionDef:
        try:
            return self._tindex[tid]
        except KeyError:
            raise UnknownTransition(f"unknown transition {tid!r}") from None

    def has_place(self, pid: str) -> bool:
        return pid in self._pindex

    def has_transition(self, tid: str) -> bool:
        return tid in self._tindex

    def forbidden_predicate(self, name: str) -> Predicate:
        for n, p in self.forbidden:
            if n == name:
                return p
        from .errors import UnknownPredicate

        raise UnknownPredicate(f"no forbidden predicate named {name!r}")

    @property
    def counted_transitions(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.transitions if t.counted)

    def mode(self, mid: str) -> ModeDef:
        for m in self.modes:
            if m.id == mid:
                return m
        raise UnknownReference(f"unknown mode {mid!r}")

    def active_mode(self, m: Marking) -> Optional[ModeDef]:
        """The mode whose place carries the token, or None for mode-free nets."""
        if not self.modes:
            return None
        marked = [md for md in self.modes if m.tokens_at(md.place_id) >= 1]
        if len(marked) != 1:
            raise UnknownReference(
                f"expected exactly one marked mode place, found {len(marked)}"
            )
        return marked[0]


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StructureError:
    code: str
    element: str
    message: str

    def __str__(self):
        return f"{self.code}({self.element}): {self.message}"


def _predicate_errors(model: NetModel, pred: Predicate, where: str) -> list[StructureError]:
    errs = []
    for atom in predicate_atoms(pred):
        if isinstance(atom, TokenAtom) and not model.has_place(atom.place):
            errs.append(StructureError("UnknownEndpoint", atom.place, f"{where} references unknown place"))
        elif isinstance(atom, CounterAtom) and not model.has_transition(atom.transition):
            errs.append(StructureError("UnknownEndpoint", atom.transition, f"{where} references unknown transition"))
        elif isinstance(atom, ModeAtom) and not any(m.id == atom.mode for m in model.modes):
            errs.append(StructureError("UnknownEndpoint", atom.mode, f"{where} references unknown mode"))
    return errs


def validate_net(model: NetModel) -> list[StructureError]:
    """Check every NetModel invariant; empty list iff the model is well-formed."""
    errs: list[StructureError] = []
    seen: set[str] = set()
    for p in model.places:
        if p.id in seen:
            errs.append(StructureError("DuplicateId", p.id, "duplicate place identifier"))
        seen.add(p.id)
        if p.capacity is not None and p.capacity < 1:
            errs.append(StructureError("BadCapacity", p.id, f"capacity must be >= 1, got {p.capacity}"))
    for t in model.transitions:
        if t.id in seen:
            errs.append(StructureError("DuplicateId", t.id, "identifier already used"))
        seen.add(t.id)
        for role, arcs in (("in", t.inputs), ("out", t.outputs), ("inhibit", t.inhibitors), ("read", t.reads)):
            role_places = set()
            for p, w in arcs:
                if not model.has_place(p):
                    errs.append(StructureError("UnknownEndpoint", p, f"{role}-arc of {t.id} targets unknown place"))
                if w < 1:
                    errs.append(StructureError("BadWeight", f"{t.id}/{p}", f"{role}-arc weight must be >= 1, got {w}"))
                if p in role_places:
                    errs.append(StructureError("DuplicateArc", f"{t.id}/{p}", f"duplicate {role}-arc"))
                role_places.add(p)
        # A place may be both input and inhibitor only when the combination is
        # satisfiable (threshold above the weight); otherwise t can never fire.
        inh = dict(t.inhibitors)
        for p, w in t.inputs:
            if p in inh and inh[p] <= w:
                errs.append(StructureError(
                    "RoleConflict", f"{t.id}/{p}",
                    f"inhibitor threshold {inh[p]} never admits the input weight {w}"))
        if t.guard is not None:
            errs.extend(_predicate_errors(model, t.guard, f"guard of {t.id}"))

    # initial marking: total, nonnegative, within capacities
    init = model.initial.tokens_map
    for p in model.places:
        if p.id not in init:
            errs.append(StructureError("BadInitial", p.id, "initial marking assigns no value"))
        else:
            v = init[p.id]
            if v < 0:
                errs.append(StructureError("BadInitial", p.id, f"negative initial tokens {v}"))
            if p.capacity is not None and v > p.capacity:
                errs.append(StructureError("BadInitial", p.id, f"initial tokens {v} exceed capacity {p.capacity}"))
    for pid in init:
        if not model.has_place(pid):
            errs.append(StructureError("UnknownEndpoint", pid, "initial marking names unknown place"))
    for tid, v in model.initial.counters_map.items():
        if not model.has_transition(tid):
            errs.append(StructureError("UnknownEndpoint", tid, "initial counter names unknown transition"))
        elif v < 0:
            errs.append(StructureError("BadInitial", tid, f"negative initial counter {v}"))

    for name, pred in model.forbidden:
        errs.extend(_predicate_errors(model, pred, f"forbidden {name}"))
    names = [n for n, _ in model.forbidden]
    for n in set(names):
        if names.count(n) > 1:
            errs.append(StructureError("DuplicateId", n, "duplicate forbidden predicate name"))

    for rule in model.audit_rules:
        if isinstance(rule, (CounterThreshold, RateThreshold)) and not model.has_transition(rule.transition):
            errs.append(StructureError("UnknownEndpoint", rule.transition, f"audit rule {rule.id} names unknown transition"))
        if isinstance(rule, OccupancyThreshold) and not model.has_place(rule.place):
            errs.append(StructureError("UnknownEndpoint", rule.place, f"audit rule {rule.id} names unknown place"))
        if isinstance(rule, PressureThreshold) and rule.predicate not in names:
            errs.append(StructureError("UnknownEndpoint", rule.predicate, f"audit rule {rule.id} names unknown predicate"))
        if isinstance(rule, RateThreshold) and rule.window < 1:
            errs.append(StructureError("BadWeight", rule.id, "rate window must be >= 1"))

    # modes: mode places exist, referenced transitions exist, exactly one token
    if model.modes:
        marked = 0
        for md in model.modes:
            if not model.has_place(md.place_id):
                errs.append(StructureError("ModeInvariant", md.id, f"mode place {md.place_id} missing (modes must be expanded)"))
                continue
            if init.get(md.place_id, 0) >= 1:
                marked += 1
            for t in md.disabled:
                if not model.has_transition(t):
                    errs.append(StructureError("UnknownEndpoint", t, f"mode {md.id} disables unknown transition"))
            for t, g in md.guard_overrides:
                if not model.has_transition(t):
                    errs.append(StructureError("UnknownEndpoint", t, f"mode {md.id} overrides unknown transition"))
                else:
                    errs.extend(_predicate_errors(model, g, f"mode {md.id} override for {t}"))
        if all(model.has_place(md.place_id) for md in model.modes) and marked != 1:
            errs.append(StructureError("ModeInvariant", ",".join(md.id for md in model.modes),
                                       f"exactly one mode place must be marked, found {marked}"))
    return errs


# ---------------------------------------------------------------------------
# Token game
# ---------------------------------------------------------------------------

def effective_guard(model: NetModel, m: Marking, t: TransitionDef) -> Optional[Predicate]:
    """The guard in force at marking m: the active mode's override, else the base guard."""
    mode = model.active_mode(m)
    if mode is not None:
        override = mode.override_for(t.id)
        if override is not None:
            return override
    return t.guard


def is_enabled(model: NetModel, m: Marking, tid: str) -> bool:
    """True iff firing tid at m is admissible under the full semantics.

    Checks inputs, read arcs, inhibitor thresholds, the (mode-resolved) guard,
    mode-disabled sets, and output capacities (contact-free semantics).
    """
    t = model.transition(tid)
    for p, w in t.inputs:
        if m.tokens_at(p) < w:
            return False
    for p, w in t.reads:
        if m.tokens_at(p) < w:
            return False
    for p, th in t.inhibitors:
        if m.tokens_at(p) >= th:
            return False
    mode = model.active_mode(m)
    if mode is not None and tid in mode.disabled:
        return False
    guard = effective_guard(model, m, t)
    if guard is not None and not eval_predicate(guard, m):
        return False
    # capacity: post-firing count at each output place must fit
    delta: dict[str, int] = {}
    for p, w in t.inputs:
        delta[p] = delta.get(p, 0) - w
    for p, w in t.outputs:
        delta[p] = delta.get(p, 0) + w
    for p, d in delta.items():
        cap = model.place(p).capacity
        if cap is not None and m.tokens_at(p) + d > cap:
            return False
    return True


def enabled_set(model: NetModel, m: Marking) -> list[str]:
    """Enabled transitions in canonical (declaration) order."""
    return [t.id for t in model.transitions if is_enabled(model, m, t.id)]


def fire(model: NetModel, m: Marking, tid: str) -> Marking:
    """Fire tid at m, returning the successor marking.

    Reads and inhibitors consume nothing; the transition's counter is
    incremented when it is counted.
    """
    if not is_enabled(model, m, tid):
        raise NotEnabled(tid)
    t = model.transition(tid)
    tokens = dict(m.tokens_map)
    for p, w in t.inputs:
        tokens[p] -= w
    for p, w in t.outputs:
        tokens[p] += w
    counters = m.counters_map
    if t.counted:
        counters = dict(counters)
        counters[tid] = counters.get(tid, 0) + 1
    return Marking.make(tokens, counters)


def eval_guard(model: NetModel, pred: Predicate, m: Marking) -> bool:
    """Evaluate a predicate at a marking, validating its references first."""
    errs = _predicate_errors(model, pred, "predicate")
    if errs:
        raise UnknownReference(str(errs[0]))
    return eval_predicate(pred, m)


def initial_marking(model: NetModel) -> Marking:
    """The initial marking with zeroed counters for every counted transition."""
    counters = {t: model.initial.counters_map.get(t, 0) for t in model.counted_transitions}
    return Marking.make(dict(model.initial.tokens_map), counters)
