"""Declarative, logged, verified structural edits to a net.

A Patch is an ordered list of edit operations applied atomically: either the
whole patch applies and the result validates, or the original model is
returned untouched (an exception is raised and nothing is mutated). Every
applied patch can be recorded in an append-only, hash-chained governance log.
"""

from __future__ import annotations

import datetime
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional, Union

from .analysis import DEFAULT_BOUND, ExplorationBound, Verdict, check_forbidden, explore
from .dsl import (
    _Cursor,
    _Err,
    _parse_pred,
    _tokenize_line,
    format_predicate,
    model_hash,
)
from .errors import (
    DanglingReference,
    HashChainBroken,
    ParseFailure,
    PatchError,
    ResultingModelInvalid,
    UnknownTarget,
)
from .net import (
    CounterAtom,
    Marking,
    NetModel,
    PlaceDef,
    Predicate,
    TokenAtom,
    TransitionDef,
    predicate_atoms,
    validate_net,
)

ARC_KINDS = ("in", "out", "inhibit", "read")


# ---------------------------------------------------------------------------
# Edit operations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AddPlace:
    place: PlaceDef
    init: int = 0


@dataclass(frozen=True)
class RemovePlace:
    place: str


@dataclass(frozen=True)
class AddTransition:
    transition: TransitionDef


@dataclass(frozen=True)
class RemoveTransition:
    transition: str


@dataclass(frozen=True)
class AddArc:
    kind: str  # in | out | inhibit | read
    place: str
    transition: str
    weight: int = 1


@dataclass(frozen=True)
class RemoveArc:
    kind: str
    place: str
    transition: str


@dataclass(frozen=True)
class SetGuard:
    transition: str
    guard: Optional[Predicate]


@dataclass(frozen=True)
class SetCapacity:
    place: str
    capacity: Optional[int]


@dataclass(frozen=True)
class AddForbidden:
    name: str
    predicate: Predicate


@dataclass(frozen=True)
class SwitchMode:
    mode: str


EditOp = Union[AddPlace, RemovePlace, AddTransition, RemoveTransition, AddArc,
               RemoveArc, SetGuard, SetCapacity, AddForbidden, SwitchMode]


def format_op(op: EditOp) -> str:
    if isinstance(op, AddPlace):
        parts = [f"add place {op.place.id}"]
        if op.place.capacity is not None:
            parts.append(f"cap {op.place.capacity}")
        if op.init:
            parts.append(f"init {op.init}")
        if op.place.label:
            parts.append(f'label "{op.place.label}"')
        return " ".join(parts)
    if isinstance(op, RemovePlace):
        return f"remove place {op.place}"
    if isinstance(op, AddTransition):
        t = op.transition
        line = f"add trans {t.id}"
        for kw, arcs in (("in", t.inputs), ("out", t.outputs),
                         ("inhibit", t.inhibitors), ("read", t.reads)):
            if arcs:
                line += " " + kw + " " + " ".join(f"{p}:{w}" for p, w in arcs)
        if t.guard is not None:
            line += " guard " + format_predicate(t.guard)
        if t.counted:
            line += " counted"
        return line
    if isinstance(op, RemoveTransition):
        return f"remove trans {op.transition}"
    if isinstance(op, AddArc):
        return f"add arc {op.kind} {op.place} {op.transition} {op.weight}"
    if isinstance(op, RemoveArc):
        return f"remove arc {op.kind} {op.place} {op.transition}"
    if isinstance(op, SetGuard):
        rhs = format_predicate(op.guard) if op.guard is not None else "none"
        return f"set guard {op.transition} {rhs}"
    if isinstance(op, SetCapacity):
        rhs = str(op.capacity) if op.capacity is not None else "none"
        return f"set capacity {op.place} {rhs}"
    if isinstance(op, AddForbidden):
        return f"add forbidden {op.name} := {format_predicate(op.predicate)}"
    if isinstance(op, SwitchMode):
        return f"switch mode {op.mode}"
    raise TypeError(f"not an edit op: {op!r}")


@dataclass(frozen=True)
class Patch:
    ops: tuple[EditOp, ...]
    author: str = ""
    rationale: str = ""

    @property
    def id(self) -> str:
        body = "\n".join(format_op(op) for op in self.ops)
        return hashlib.sha256(body.encode("utf-8")).hexdigest()

    def to_text(self) -> str:
        lines = []
        if self.author:
            lines.append(f'author "{self.author}"')
        if self.rationale:
            lines.append(f'rationale "{self.rationale}"')
        lines.extend(format_op(op) for op in self.ops)
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Patch text format (.patch)
# ---------------------------------------------------------------------------

def parse_patch(text: str) -> Patch:
    """Parse the `.patch` text format (same keyword style as the model DSL)."""
    author = ""
    rationale = ""
    ops: list[EditOp] = []
    errors = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        try:
            tokens = _tokenize_line(line, lineno)
            if not tokens:
                continue
            cur = _Cursor(tokens, lineno, len(line))
            head = cur.take_ident().value
            if head == "author":
                author = cur.take("string").value[1:-1]
            elif head == "rationale":
                rationale = cur.take("string").value[1:-1]
            elif head == "add":
                ops.append(_parse_add(cur))
            elif head == "remove":
                ops.append(_parse_remove(cur))
            elif head == "set":
                ops.append(_parse_set(cur))
            elif head == "switch":
                cur.take_keyword("mode")
                ops.append(SwitchMode(cur.take_ident().value))
            else:
                raise _Err((lineno, tokens[0].col), f"unknown patch keyword {head!r}",
                           ("author", "rationale", "add", "remove", "set", "switch"))
            cur.expect_end()
        except _Err as e:
            errors.append(e.error)
    if errors:
        raise ParseFailure(errors)
    return Patch(tuple(ops), author, rationale)


def _parse_add(cur: _Cursor) -> EditOp:
    what = cur.take_ident().value
    if what == "place":
        pid = cur.take_ident().value
        cap = None
        init = 0
        label = ""
        while not cur.at_end():
            if cur.accept_keyword("cap"):
                cap = cur.take_int(minimum=1)
            elif cur.accept_keyword("init"):
                init = cur.take_int(minimum=0)
            elif cur.accept_keyword("label"):
                label = cur.take("string").value[1:-1]
            else:
                raise _Err(cur._here(), "bad place clause", ("cap", "init", "label"))
        return AddPlace(PlaceDef(pid, cap, label), init)
    if what == "trans":
        from .dsl import _Draft, _parse_trans

        draft = _Draft()
        _parse_trans(cur, draft)
        return AddTransition(draft.transitions[0])
    if what == "arc":
        kind = cur.take_ident().value
        if kind not in ARC_KINDS:
            raise _Err(cur._here(), f"bad arc kind {kind!r}", ARC_KINDS)
        place = cur.take_ident().value
        trans = cur.take_ident().value
        weight = cur.take_int(minimum=1) if not cur.at_end() else 1
        return AddArc(kind, place, trans, weight)
    if what == "forbidden":
        name = cur.take_ident().value
        cur.take("op", ":=")
        return AddForbidden(name, _parse_pred(cur))
    raise _Err(cur._here(), f"cannot add {what!r}", ("place", "trans", "arc", "forbidden"))


def _parse_remove(cur: _Cursor) -> EditOp:
    what = cur.take_ident().value
    if what == "place":
        return RemovePlace(cur.take_ident().value)
    if what == "trans":
        return RemoveTransition(cur.take_ident().value)
    if what == "arc":
        kind = cur.take_ident().value
        if kind not in ARC_KINDS:
            raise _Err(cur._here(), f"bad arc kind {kind!r}", ARC_KINDS)
        return RemoveArc(kind, cur.take_ident().value, cur.take_ident().value)
    raise _Err(cur._here(), f"cannot remove {what!r}", ("place", "trans", "arc"))


def _parse_set(cur: _Cursor) -> EditOp:
    what = cur.take_ident().value
    if what == "guard":
        t = cur.take_ident().value
        if cur.accept_keyword("none"):
            return SetGuard(t, None)
        return SetGuard(t, _parse_pred(cur))
    if what == "capacity":
        p = cur.take_ident().value
        if cur.accept_keyword("none"):
            return SetCapacity(p, None)
        return SetCapacity(p, cur.take_int(minimum=1))
    raise _Err(cur._here(), f"cannot set {what!r}", ("guard", "capacity"))


# ---------------------------------------------------------------------------
# Applying patches
# ---------------------------------------------------------------------------

def _referencing(model_transitions, place: str):
    for t in model_transitions:
        for arcs in (t.inputs, t.outputs, t.inhibitors, t.reads):
            if any(p == place for p, _ in arcs):
                yield t.id
                break


def apply_patch(model: NetModel, patch: Patch) -> NetModel:
    """Apply the ops left-to-right and validate; all-or-nothing.

    Removals fail with DanglingReference if they would leave references
    behind (no implicit cascades).
    """
    places = {p.id: p for p in model.places}
    transitions = {t.id: t for t in model.transitions}
    tokens = dict(model.initial.tokens_map)
    counters = dict(model.initial.counters_map)
    forbidden = list(model.forbidden)
    modes = list(model.modes)

    def arc_field(t: TransitionDef, kind: str):
        return {"in": t.inputs, "out": t.outputs, "inhibit": t.inhibitors, "read": t.reads}[kind]

    def with_arcs(t: TransitionDef, kind: str, arcs):
        fields = {"in": t.inputs, "out": t.outputs, "inhibit": t.inhibitors, "read": t.reads}
        fields[kind] = tuple(arcs)
        return TransitionDef(t.id, fields["in"], fields["out"], fields["inhibit"],
                             fields["read"], t.guard, t.counted)

    for op in patch.ops:
        if isinstance(op, AddPlace):
            if op.place.id in places or op.place.id in transitions:
                raise PatchError(f"identifier {op.place.id!r} already exists")
            places[op.place.id] = op.place
            tokens[op.place.id] = op.init
        elif isinstance(op, RemovePlace):
            if op.place not in places:
                raise UnknownTarget(f"no place {op.place!r}")
            users = list(_referencing(transitions.values(), op.place))
            if users:
                raise DanglingReference(
                    f"place {op.place!r} still referenced by {', '.join(sorted(users))}")
            for name, pred in forbidden:
                if any(isinstance(a, TokenAtom) and a.place == op.place
                       for a in predicate_atoms(pred)):
                    raise DanglingReference(
                        f"place {op.place!r} still referenced by forbidden {name!r}")
            del places[op.place]
            tokens.pop(op.place, None)
        elif isinstance(op, AddTransition):
            t = op.transition
            if t.id in transitions or t.id in places:
                raise PatchError(f"identifier {t.id!r} already exists")
            transitions[t.id] = t
            if t.counted:
                counters.setdefault(t.id, 0)
        elif isinstance(op, RemoveTransition):
            if op.transition not in transitions:
                raise UnknownTarget(f"no transition {op.transition!r}")
            for name, pred in forbidden:
                if any(isinstance(a, CounterAtom) and a.transition == op.transition
                       for a in predicate_atoms(pred)):
                    raise DanglingReference(
                        f"transition {op.transition!r} still referenced by forbidden {name!r}")
            for rule in model.audit_rules:
                if getattr(rule, "transition", None) == op.transition:
                    raise DanglingReference(
                        f"transition {op.transition!r} still referenced by audit rule {rule.id!r}")
            del transitions[op.transition]
            counters.pop(op.transition, None)
        elif isinstance(op, AddArc):
            if op.transition not in transitions:
                raise UnknownTarget(f"no transition {op.transition!r}")
            if op.place not in places:
                raise UnknownTarget(f"no place {op.place!r}")
            t = transitions[op.transition]
            arcs = list(arc_field(t, op.kind))
            if any(p == op.place for p, _ in arcs):
                raise PatchError(f"{op.kind}-arc {op.place}->{op.transition} already present")
            arcs.append((op.place, op.weight))
            transitions[op.transition] = with_arcs(t, op.kind, arcs)
        elif isinstance(op, RemoveArc):
            if op.transition not in transitions:
                raise UnknownTarget(f"no transition {op.transition!r}")
            t = transitions[op.transition]
            arcs = [a for a in arc_field(t, op.kind) if a[0] != op.place]
            if len(arcs) == len(arc_field(t, op.kind)):
                raise UnknownTarget(f"no {op.kind}-arc {op.place}->{op.transition}")
            transitions[op.transition] = with_arcs(t, op.kind, arcs)
        elif isinstance(op, SetGuard):
            if op.transition not in transitions:
                raise UnknownTarget(f"no transition {op.transition!r}")
            t = transitions[op.transition]
            transitions[op.transition] = TransitionDef(
                t.id, t.inputs, t.outputs, t.inhibitors, t.reads, op.guard, t.counted)
        elif isinstance(op, SetCapacity):
            if op.place not in places:
                raise UnknownTarget(f"no place {op.place!r}")
            p = places[op.place]
            places[op.place] = PlaceDef(p.id, op.capacity, p.label)
        elif isinstance(op, AddForbidden):
            if any(n == op.name for n, _ in forbidden):
                raise PatchError(f"forbidden predicate {op.name!r} already exists")
            forbidden.append((op.name, op.predicate))
        elif isinstance(op, SwitchMode):
            mode_ids = [m.id for m in modes]
            if op.mode not in mode_ids:
                raise UnknownTarget(f"no mode {op.mode!r}")
            for m in modes:
                tokens[m.place_id] = 1 if m.id == op.mode else 0
        else:
            raise TypeError(f"not an edit op: {op!r}")

    patched = NetModel(
        places=tuple(places.values()),
        transitions=tuple(transitions.values()),
        initial=Marking.make(tokens, counters),
        forbidden=tuple(forbidden),
        audit_rules=model.audit_rules,
        modes=tuple(modes),
        metadata=model.metadata,
    )
    errs = validate_net(patched)
    if errs:
        raise ResultingModelInvalid(errs)
    return patched


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerificationReport:
    patch_id: str
    pre_hash: str
    post_hash: str
    verdicts_before: tuple[tuple[str, Verdict], ...]
    verdicts_after: tuple[tuple[str, Verdict], ...]
    states_before: int
    states_after: int
    regressions: tuple[str, ...]           # predicates that went Safe -> not Safe
    predicates_added: tuple[str, ...]
    predicates_removed: tuple[str, ...]


def verify_patch(model: NetModel, patch: Patch,
                 bound: ExplorationBound = DEFAULT_BOUND) -> VerificationReport:
    """Before/after verdicts for every named forbidden predicate.

    Flags regressions (Safe before, Unsafe or Unknown after) and any change
    to the predicate set itself, which governance must see explicitly.
    """
    from .analysis import VerdictKind

    post = apply_patch(model, patch)
    names_before = [n for n, _ in model.forbidden]
    names_after = [n for n, _ in post.forbidden]
    before = tuple((n, check_forbidden(model, n, bound)) for n in names_before)
    after = tuple((n, check_forbidden(post, n, bound)) for n in names_after)
    before_map = dict(before)
    regressions = tuple(
        n for n, v in after
        if n in before_map
        and before_map[n].kind is VerdictKind.SAFE
        and v.kind is not VerdictKind.SAFE
    )
    return VerificationReport(
        patch_id=patch.id,
        pre_hash=model_hash(model),
        post_hash=model_hash(post),
        verdicts_before=before,
        verdicts_after=after,
        states_before=len(explore(model, bound).nodes),
        states_after=len(explore(post, bound).nodes),
        regressions=regressions,
        predicates_added=tuple(n for n in names_after if n not in names_before),
        predicates_removed=tuple(n for n in names_before if n not in names_after),
    )


# ---------------------------------------------------------------------------
# Governance log
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogEntry:
    timestamp: str
    patch_id: str
    pre_hash: str
    post_hash: str
    author: str
    rationale: str
    verdicts: tuple[tuple[str, str], ...]  # predicate -> "kind/proof"

    def to_json(self) -> str:
        return json.dumps({
            "timestamp": self.timestamp,
            "patch_id": self.patch_id,
            "pre_hash": self.pre_hash,
            "post_hash": self.post_hash,
            "author": self.author,
            "rationale": self.rationale,
            "verdicts": dict(self.verdicts),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "LogEntry":
        d = json.loads(line)
        return cls(d["timestamp"], d["patch_id"], d["pre_hash"], d["post_hash"],
                   d["author"], d["rationale"], tuple(sorted(d["verdicts"].items())))


@dataclass(frozen=True)
class GovernanceLog:
    """Append-only sequence of patch records with chained model hashes."""

    entries: tuple[LogEntry, ...] = ()

    def verify_chain(self) -> bool:
        for prev, cur in zip(self.entries, self.entries[1:]):
            if prev.post_hash != cur.pre_hash:
                return False
        return True

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.entries)

    @classmethod
    def from_jsonl(cls, text: str) -> "GovernanceLog":
        entries = tuple(LogEntry.from_json(line) for line in text.splitlines() if line.strip())
        log = cls(entries)
        if not log.verify_chain():
            raise HashChainBroken("governance log hash chain does not verify")
        return log


def record_decision(log: GovernanceLog, model_pre: NetModel, model_post: NetModel,
                    patch: Patch, report: VerificationReport,
                    timestamp: Optional[str] = None) -> GovernanceLog:
    """Append an entry; the new entry's pre-hash must extend the chain."""
    pre_hash = model_hash(model_pre)
    post_hash = model_hash(model_post)
    if report.pre_hash != pre_hash or report.post_hash != post_hash:
        raise HashChainBroken("verification report does not match the supplied models")
    if log.entries and log.entries[-1].post_hash != pre_hash:
        raise HashChainBroken(
            "pre-model hash does not equal the previous entry's post-model hash")
    entry = LogEntry(
        timestamp=timestamp or datetime.datetime.now(datetime.timezone.utc).isoformat(),
        patch_id=patch.id,
        pre_hash=pre_hash,
        post_hash=post_hash,
        author=patch.author,
        rationale=patch.rationale,
        verdicts=tuple(sorted((n, f"{v.kind.value}/{v.proof.value}")
                              for n, v in report.verdicts_after)),
    )
    return GovernanceLog(log.entries + (entry,))


def replay_log(genesis: NetModel, patches: list[Patch]) -> NetModel:
    """Apply a recorded patch sequence to the genesis model."""
    model = genesis
    for p in patches:
        model = apply_patch(model, p)
    return model
