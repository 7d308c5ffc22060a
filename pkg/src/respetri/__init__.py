"""Petri-net execution, verification, auditing, and governed editing.

The package centers on one question: can any firing sequence reach a marking
declared forbidden? Models are immutable values; analysis is deterministic;
structural change happens only through logged, verified patches.
"""

__version__ = "0.1.0"

from .analysis import (
    DEFAULT_BOUND,
    CoverabilityResult,
    ExplorationBound,
    Pressure,
    ProofKind,
    ReachGraph,
    Verdict,
    VerdictKind,
    ViolationTrace,
    check_all_forbidden,
    check_forbidden,
    explore,
    find_cycles,
    karp_miller,
    pressure_map,
    reachability_pressure,
    siphons_and_traps,
    violation_trace,
)
from .audit import (
    Alarm,
    DriftReport,
    Priority,
    RunRecord,
    Scripted,
    SimPolicy,
    UniformRandom,
    drift_report,
    evaluate_audit_rules,
    run_record_to_jsonl,
    simulate,
)
from .dsl import (
    ModelSource,
    ParseError,
    RateLimit,
    canonical_form,
    expand_macros,
    format_predicate,
    model_hash,
    parse_model,
    pred_and,
    pred_or,
    serialize_model,
    structurally_equal,
)
from .errors import (
    DanglingReference,
    HashChainBroken,
    MacroError,
    NodeNotInGraph,
    NotEnabled,
    NotUpwardClosed,
    ParseFailure,
    PatchError,
    PressureUnavailable,
    RespetriError,
    ResultingModelInvalid,
    ScriptedFiringDisabled,
    StructureFailure,
    UnknownPredicate,
    UnknownReference,
    UnknownTarget,
    UnknownTransition,
)
from .governance import (
    AddArc,
    AddForbidden,
    AddPlace,
    AddTransition,
    GovernanceLog,
    LogEntry,
    Patch,
    RemoveArc,
    RemovePlace,
    RemoveTransition,
    SetCapacity,
    SetGuard,
    SwitchMode,
    VerificationReport,
    apply_patch,
    parse_patch,
    record_decision,
    replay_log,
    verify_patch,
)
from .models import (
    FIXTURES,
    FixtureConfig,
    build_risk_scoring_model,
    build_srs_symbolic_model,
    build_traffic_model,
)
from .net import (
    And,
    AuditRule,
    CounterAtom,
    CounterThreshold,
    Marking,
    ModeAtom,
    ModeDef,
    NetModel,
    Not,
    OccupancyThreshold,
    Or,
    PlaceDef,
    Predicate,
    PressureThreshold,
    RateThreshold,
    StructureError,
    TokenAtom,
    TransitionDef,
    enabled_set,
    eval_predicate,
    fire,
    initial_marking,
    is_enabled,
    is_upward_closed,
    predicate_atoms,
    validate_net,
)
