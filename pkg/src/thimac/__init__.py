"""Thing-machine modeling: static wiring, events, execution, analysis."""

from .model import (
    ACTION_ORDER,
    COMPARE_OPS,
    EFFECT_TARGETS,
    E_BAD_EFFECT,
    E_COUNTER_RANGE,
    E_DUP_ID,
    E_EMPTY_DOMAIN,
    E_EMPTY_REGION,
    E_FLOW_ENDPOINTS,
    E_NO_INITIAL,
    E_REGION_FLOWS,
    E_SYNTAX,
    E_UNRESOLVED_REF,
    SEV_ERROR,
    SEV_WARNING,
    STORE_KINDS,
    TOKEN_KINDS,
    ActionKind,
    ActionRef,
    CounterCmp,
    Diagnostic,
    Effect,
    Event,
    EventClass,
    FlagTest,
    FlowEdge,
    Guard,
    GuardAtom,
    Injection,
    ModelBundle,
    Region,
    StaticModel,
    SubjectMode,
    Thimac,
    ThimacKind,
    TimerExpired,
    TmError,
    TriggerEdge,
    canonicalize,
    classify_event,
    decompose_flows,
    extract_region,
    guard_text,
    has_errors,
    induced_region,
    region_paths,
    subject_mode,
    validate_model,
)
from .dsl import ParseResult, parse, parse_file, serialize
from .engine import (
    Configuration,
    FiredEvent,
    TimerState,
    Token,
    TraceEntry,
    enabled_events,
    filter_displayed,
    format_trace,
    format_trace_records,
    init,
    parse_trace_records,
    quiescent,
    run,
    step,
)
from .behavior import (
    BehaviorGraph,
    ComponentStateDecl,
    Violation,
    behavior_graph,
    check_conformance,
    enumerate_states,
    event_coverage,
    machine_status,
    project_config,
    reachable_configs,
)
from .dot import export_dot
from .fsmbridge import (
    FsmParseResult,
    FsmSpec,
    FsmTransition,
    ProjectionReport,
    StateProjection,
    fsm_to_tm,
    parse_fsm,
    parse_fsm_file,
    parse_state_mapping,
    project_states,
)
