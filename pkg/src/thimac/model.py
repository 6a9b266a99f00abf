"""Core types for thing-machine models.

A thing machine couples a static wiring layer (thimacs with their five
kinds of actions, flow edges, guarded trigger edges) with a dynamic
event layer (regions over the action graph, a chronology relation, a
priority order, and an injection schedule).  This module holds the
shared vocabulary for both layers plus the structural checks: reference
resolution, kind compatibility, and region analysis (induced edges,
event classification, flow-path decomposition).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional, Union


class ActionKind(Enum):
    """The five action kinds a thimac can offer."""

    CREATE = "create"
    PROCESS = "process"
    RELEASE = "release"
    TRANSFER = "transfer"
    RECEIVE = "receive"


# Canonical emission order for action sets.
ACTION_ORDER = (
    ActionKind.CREATE,
    ActionKind.PROCESS,
    ActionKind.RELEASE,
    ActionKind.TRANSFER,
    ActionKind.RECEIVE,
)


class ThimacKind(Enum):
    """What a thimac is: a token handler or a store."""

    SOURCE = "source"
    MACHINE = "machine"
    BUFFER = "buffer"
    SINK = "sink"
    COUNTER = "counter"
    FLAG = "flag"
    TIMER = "timer"


STORE_KINDS = frozenset({ThimacKind.COUNTER, ThimacKind.FLAG, ThimacKind.TIMER})
TOKEN_KINDS = frozenset(
    {ThimacKind.SOURCE, ThimacKind.MACHINE, ThimacKind.BUFFER, ThimacKind.SINK}
)


class Effect(Enum):
    """State change a trigger edge applies to its target store."""

    INC = "inc"
    DEC = "dec"
    SET = "set"
    CLEAR = "clear"
    RESET = "reset"
    START = "start"


class ActionRef(NamedTuple):
    """A reference to one action of one thimac."""

    thimac: str
    action: ActionKind

    def __str__(self) -> str:
        return f"{self.thimac}.{self.action.value}"


# ---------------------------------------------------------------------------
# Guards
# ---------------------------------------------------------------------------

COMPARE_OPS = ("=", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class CounterCmp:
    """Compare a counter value against a literal."""

    counter: str
    op: str
    value: int

    def __str__(self) -> str:
        return f"{self.counter} {self.op} {self.value}"


@dataclass(frozen=True)
class FlagTest:
    """Test a flag, optionally negated."""

    flag: str
    negated: bool = False

    def __str__(self) -> str:
        return f"not {self.flag}" if self.negated else self.flag


@dataclass(frozen=True)
class TimerExpired:
    """Test whether a timer has run out."""

    timer: str

    def __str__(self) -> str:
        return f"expired {self.timer}"


GuardAtom = Union[CounterCmp, FlagTest, TimerExpired]

# A guard is a conjunction of atoms; the empty tuple is always true.
Guard = tuple


def guard_text(guard: Guard) -> str:
    return " and ".join(str(atom) for atom in guard)


# ---------------------------------------------------------------------------
# Static layer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Thimac:
    """One thing machine node.

    Token-bearing kinds (source, machine, buffer, sink) declare an
    explicit action set.  Store kinds (counter, flag, timer) always
    expose a single implicit create action; their extra fields carry the
    value domain (counter range and initial value, flag initial value,
    timer duration).
    """

    id: str
    kind: ThimacKind
    actions: frozenset = frozenset()
    lo: int = 0
    hi: int = 0
    init: Union[int, bool] = 0
    duration: int = 0

    @property
    def is_store(self) -> bool:
        return self.kind in STORE_KINDS

    @property
    def effective_actions(self) -> frozenset:
        if self.is_store:
            return frozenset({ActionKind.CREATE})
        return self.actions


@dataclass(frozen=True)
class FlowEdge:
    """Token movement: release/transfer feeding transfer/receive."""

    src: ActionRef
    dst: ActionRef


@dataclass(frozen=True)
class TriggerEdge:
    """Guarded causal edge; effect is None for a pure signal."""

    src: ActionRef
    dst: ActionRef
    effect: Optional[Effect] = None
    guard: Guard = ()


@dataclass
class StaticModel:
    """The wiring layer: thimacs plus flow and trigger edges."""

    thimacs: tuple = ()
    flows: tuple = ()
    triggers: tuple = ()
    name: str = ""

    def thimac_map(self) -> dict:
        return {t.id: t for t in self.thimacs}


# ---------------------------------------------------------------------------
# Dynamic layer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Event:
    """A labeled region of actions that can fire at a point in time.

    Bookkeeping events co-fire in the same tick as the event that
    precedes them in the chronology.  Displayed marks an event as
    visible even when bookkeeping entries are filtered out.
    """

    id: str
    region: frozenset
    label: str = ""
    bookkeeping: bool = False
    displayed: bool = False


@dataclass(frozen=True)
class Injection:
    """Scheduled arrival of a labeled token at a thimac."""

    tick: int
    thimac: str
    label: str


@dataclass
class ModelBundle:
    """A complete model: wiring, events, chronology, priority, schedule.

    `initial` holds optional per-store overrides of declared initial
    values (counter value, flag value, or timer duration), applied when
    a run is initialized.
    """

    model: StaticModel
    events: tuple = ()
    behavior: tuple = ()
    priority: tuple = ()
    initial: dict = field(default_factory=dict)
    schedule: tuple = ()

    def event_map(self) -> dict:
        return {e.id: e for e in self.events}

    def priority_order(self) -> tuple:
        """Full firing order: listed ids first, the rest in declaration order."""
        listed = [e for e in self.priority]
        seen = set(listed)
        rest = [e.id for e in self.events if e.id not in seen]
        return tuple(listed + rest)

    def successors(self, event_id: str) -> tuple:
        return tuple(dst for src, dst in sorted(self.behavior) if src == event_id)


# ---------------------------------------------------------------------------
# Diagnostics and errors
# ---------------------------------------------------------------------------

E_SYNTAX = "E_SYNTAX"
E_DUP_ID = "E_DUP_ID"
E_FLOW_ENDPOINTS = "E_FLOW_ENDPOINTS"
E_BAD_EFFECT = "E_BAD_EFFECT"
E_UNRESOLVED_REF = "E_UNRESOLVED_REF"
E_COUNTER_RANGE = "E_COUNTER_RANGE"
E_EMPTY_REGION = "E_EMPTY_REGION"
E_REGION_FLOWS = "E_REGION_FLOWS"
E_NO_INITIAL = "E_NO_INITIAL"
E_EMPTY_DOMAIN = "E_EMPTY_DOMAIN"

SEV_ERROR = "error"
SEV_WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    """One reported problem, formatted file:line:col: code message."""

    file: str
    line: int
    col: int
    code: str
    message: str
    severity: str = SEV_ERROR

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}: {self.code} {self.message}"


def has_errors(diagnostics) -> bool:
    return any(d.severity == SEV_ERROR for d in diagnostics)


class TmError(Exception):
    """Runtime failure carrying a diagnostic code."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code} {message}")
        self.code = code
        self.message = message


# ---------------------------------------------------------------------------
# Region analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    """An action set of one model with the edges it induces."""

    parent: str
    actions: frozenset
    flows: tuple
    triggers: tuple


class EventClass(Enum):
    """Generic events cover a single action; compound events several."""

    GENERIC = "generic"
    COMPOUND = "compound"


class SubjectMode(Enum):
    """How an event binds tokens when it fires.

    Flow events move tokens along their induced flow paths, progression
    events advance a resting token between stages of one thimac, and
    subjectless events touch no token at all.
    """

    FLOW = "flow"
    PROGRESSION = "progression"
    SUBJECTLESS = "subjectless"


def induced_region(model: StaticModel, actions: frozenset, parent: str = "") -> Region:
    """Region over the given actions with the edges both of whose
    endpoints fall inside the set.  No reference checking."""
    flows = tuple(f for f in model.flows if f.src in actions and f.dst in actions)
    triggers = tuple(t for t in model.triggers if t.src in actions and t.dst in actions)
    return Region(parent or model.name, frozenset(actions), flows, triggers)


def extract_region(model: StaticModel, action_refs) -> Region:
    """Region over a set of action references, checked against the model.

    Raises TmError with E_EMPTY_REGION for an empty set and
    E_UNRESOLVED_REF for a reference to a missing thimac or action.
    """
    actions = frozenset(action_refs)
    if not actions:
        raise TmError(E_EMPTY_REGION, "region has no actions")
    tmap = model.thimac_map()
    for ref in sorted(actions, key=str):
        t = tmap.get(ref.thimac)
        if t is None:
            raise TmError(E_UNRESOLVED_REF, f"unknown thimac {ref.thimac}")
        if ref.action not in t.effective_actions:
            raise TmError(
                E_UNRESOLVED_REF,
                f"thimac {ref.thimac} has no {ref.action.value} action",
            )
    return induced_region(model, actions)


def classify_event(region: Region) -> EventClass:
    """An event over one action is generic; over several, compound."""
    if len(region.actions) == 1:
        return EventClass.GENERIC
    return EventClass.COMPOUND


def subject_mode(model: StaticModel, event: Event) -> SubjectMode:
    """Flow if the region induces flow edges; progression if it holds a
    resting stage (receive or process) of a token thimac; subjectless
    otherwise."""
    region = induced_region(model, event.region)
    if region.flows:
        return SubjectMode.FLOW
    tmap = model.thimac_map()
    for ref in event.region:
        t = tmap.get(ref.thimac)
        if t is None or t.kind not in TOKEN_KINDS:
            continue
        if ref.action in (ActionKind.RECEIVE, ActionKind.PROCESS):
            return SubjectMode.PROGRESSION
    return SubjectMode.SUBJECTLESS


def decompose_flows(region: Region):
    """Split the induced flow edges into vertex-disjoint simple paths.

    Returns (paths, None) with each path a tuple of ActionRefs ordered
    source to sink, or (None, reason) when the edges do not form such a
    decomposition (branching, merging, or a cycle).
    """
    if not region.flows:
        return (), None
    succ: dict = {}
    pred: dict = {}
    nodes = set()
    for f in region.flows:
        if f.src in succ:
            return None, f"action {f.src} feeds more than one induced flow"
        if f.dst in pred:
            return None, f"action {f.dst} is fed by more than one induced flow"
        succ[f.src] = f.dst
        pred[f.dst] = f.src
        nodes.add(f.src)
        nodes.add(f.dst)
    starts = sorted((n for n in nodes if n not in pred), key=str)
    paths = []
    visited = set()
    for start in starts:
        path = [start]
        visited.add(start)
        cur = start
        while cur in succ:
            cur = succ[cur]
            path.append(cur)
            visited.add(cur)
        paths.append(tuple(path))
    if len(visited) != len(nodes):
        return None, "induced flows contain a cycle"
    return tuple(paths), None


def region_paths(model: StaticModel, event: Event):
    """Paths for a flow event with the primary path first.

    The primary path is the first one (in start order) whose final
    thimac is not a sink; if every path ends in a sink the first path is
    primary.  Raises TmError on a malformed region.
    """
    region = induced_region(model, event.region)
    paths, reason = decompose_flows(region)
    if paths is None:
        raise TmError(E_REGION_FLOWS, f"event {event.id}: {reason}")
    if not paths:
        return ()
    tmap = model.thimac_map()
    primary = None
    for p in paths:
        sink_thimac = tmap.get(p[-1].thimac)
        if sink_thimac is not None and sink_thimac.kind != ThimacKind.SINK:
            primary = p
            break
    if primary is None:
        primary = paths[0]
    rest = tuple(p for p in paths if p is not primary)
    return (primary,) + rest


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

# Which store kind each effect may target.
EFFECT_TARGETS = {
    Effect.INC: (ThimacKind.COUNTER,),
    Effect.DEC: (ThimacKind.COUNTER,),
    Effect.SET: (ThimacKind.FLAG,),
    Effect.CLEAR: (ThimacKind.FLAG,),
    Effect.RESET: (ThimacKind.COUNTER, ThimacKind.TIMER),
    Effect.START: (ThimacKind.TIMER,),
}


def validate_model(bundle, file: str = "<model>", positions=None):
    """Structural checks; returns a list of Diagnostics.

    Accepts either a ModelBundle or a bare StaticModel (wiring checks
    only).  `positions`, when given, maps entity keys such as
    ("thimac", id), ("flow", index), ("trigger", index), ("event", id),
    ("behavior", index), ("priority", index), ("initial", id),
    ("schedule", index) to (line, col) pairs so parsed models report
    source locations.
    """
    if isinstance(bundle, StaticModel):
        bundle = ModelBundle(model=bundle)
    diags = []
    positions = positions or {}

    def emit(key, code, message, severity=SEV_ERROR):
        line, col = positions.get(key, (0, 0))
        diags.append(Diagnostic(file, line, col, code, message, severity))

    model = bundle.model
    tmap = {}
    for t in model.thimacs:
        if t.id in tmap:
            emit(("thimac", t.id), E_DUP_ID, f"duplicate thimac id {t.id}")
            continue
        tmap[t.id] = t
        if t.kind == ThimacKind.COUNTER:
            if t.lo > t.hi:
                emit(("thimac", t.id), E_COUNTER_RANGE,
                     f"counter {t.id} has empty range {t.lo}..{t.hi}")
            elif not (t.lo <= int(t.init) <= t.hi):
                emit(("thimac", t.id), E_COUNTER_RANGE,
                     f"counter {t.id} initial value {t.init} outside {t.lo}..{t.hi}")
        if t.kind == ThimacKind.TIMER and t.duration < 1:
            emit(("thimac", t.id), E_COUNTER_RANGE,
                 f"timer {t.id} duration must be at least 1")

    def resolve(ref: ActionRef, key) -> bool:
        t = tmap.get(ref.thimac)
        if t is None:
            emit(key, E_UNRESOLVED_REF, f"unknown thimac {ref.thimac}")
            return False
        if ref.action not in t.effective_actions:
            emit(key, E_UNRESOLVED_REF,
                 f"thimac {ref.thimac} has no {ref.action.value} action")
            return False
        return True

    for i, f in enumerate(model.flows):
        key = ("flow", i)
        ok = resolve(f.src, key) & resolve(f.dst, key)
        if not ok:
            continue
        if f.src.action not in (ActionKind.RELEASE, ActionKind.TRANSFER):
            emit(key, E_FLOW_ENDPOINTS,
                 f"flow source {f.src} must be a release or transfer action")
        if f.dst.action not in (ActionKind.TRANSFER, ActionKind.RECEIVE):
            emit(key, E_FLOW_ENDPOINTS,
                 f"flow target {f.dst} must be a transfer or receive action")

    def check_guard(guard: Guard, key):
        for atom in guard:
            if isinstance(atom, CounterCmp):
                t = tmap.get(atom.counter)
                if t is None or t.kind != ThimacKind.COUNTER:
                    emit(key, E_UNRESOLVED_REF,
                         f"guard compares {atom.counter} which is not a counter")
                elif atom.op not in COMPARE_OPS:
                    emit(key, E_SYNTAX, f"bad comparison operator {atom.op}")
            elif isinstance(atom, FlagTest):
                t = tmap.get(atom.flag)
                if t is None or t.kind != ThimacKind.FLAG:
                    emit(key, E_UNRESOLVED_REF,
                         f"guard tests {atom.flag} which is not a flag")
            elif isinstance(atom, TimerExpired):
                t = tmap.get(atom.timer)
                if t is None or t.kind != ThimacKind.TIMER:
                    emit(key, E_UNRESOLVED_REF,
                         f"guard expects {atom.timer} to be a timer")

    for i, tr in enumerate(model.triggers):
        key = ("trigger", i)
        ok = resolve(tr.src, key) & resolve(tr.dst, key)
        if ok and tr.effect is not None:
            target = tmap[tr.dst.thimac]
            if target.kind not in EFFECT_TARGETS[tr.effect]:
                wanted = " or ".join(k.value for k in EFFECT_TARGETS[tr.effect])
                emit(key, E_BAD_EFFECT,
                     f"effect {tr.effect.value} needs a {wanted} target, "
                     f"got {target.kind.value} {tr.dst.thimac}")
        check_guard(tr.guard, key)

    emap = {}
    for e in bundle.events:
        key = ("event", e.id)
        if e.id in emap:
            emit(key, E_DUP_ID, f"duplicate event id {e.id}")
            continue
        emap[e.id] = e
        if not e.region:
            emit(key, E_EMPTY_REGION, f"event {e.id} has an empty region")
            continue
        ok = True
        for ref in sorted(e.region, key=str):
            ok &= resolve(ref, key)
        if ok:
            region = induced_region(model, e.region)
            paths, reason = decompose_flows(region)
            if paths is None:
                emit(key, E_REGION_FLOWS, f"event {e.id}: {reason}")

    for i, (src, dst) in enumerate(bundle.behavior):
        key = ("behavior", i)
        for eid in (src, dst):
            if eid not in emap:
                emit(key, E_UNRESOLVED_REF, f"chronology names unknown event {eid}")

    seen_prio = set()
    for i, eid in enumerate(bundle.priority):
        key = ("priority", i)
        if eid not in emap:
            emit(key, E_UNRESOLVED_REF, f"priority names unknown event {eid}")
        elif eid in seen_prio:
            emit(key, E_DUP_ID, f"event {eid} listed twice in priority")
        seen_prio.add(eid)
    if bundle.priority:
        missing = [e.id for e in bundle.events if e.id not in seen_prio]
        if missing:
            emit(("priority", len(bundle.priority)), E_UNRESOLVED_REF,
                 f"priority omits {', '.join(missing)}", SEV_WARNING)

    for tid, value in sorted(bundle.initial.items()):
        key = ("initial", tid)
        t = tmap.get(tid)
        if t is None or t.kind not in STORE_KINDS:
            emit(key, E_UNRESOLVED_REF,
                 f"initial override targets {tid} which is not a store")
        elif t.kind == ThimacKind.COUNTER:
            if not isinstance(value, int) or isinstance(value, bool):
                emit(key, E_SYNTAX, f"counter override for {tid} must be an integer")
            elif not (t.lo <= value <= t.hi):
                emit(key, E_COUNTER_RANGE,
                     f"override {value} for {tid} outside {t.lo}..{t.hi}")
        elif t.kind == ThimacKind.TIMER:
            if not isinstance(value, int) or isinstance(value, bool):
                emit(key, E_SYNTAX, f"timer override for {tid} must be an integer")
            elif value < 1:
                emit(key, E_COUNTER_RANGE,
                     f"timer override for {tid} must be at least 1")
        elif not isinstance(value, bool):
            emit(key, E_SYNTAX, f"flag override for {tid} must be true or false")

    for i, inj in enumerate(bundle.schedule):
        key = ("schedule", i)
        t = tmap.get(inj.thimac)
        if t is None or t.kind not in TOKEN_KINDS:
            emit(key, E_UNRESOLVED_REF,
                 f"cannot inject into {inj.thimac}: not a token thimac")
        elif not (t.effective_actions & {ActionKind.RECEIVE, ActionKind.RELEASE}):
            emit(key, E_UNRESOLVED_REF,
                 f"cannot inject into {inj.thimac}: no receive or release action")
        if inj.tick < 1:
            emit(key, E_SYNTAX, f"injection tick must be at least 1, got {inj.tick}")

    return diags


def canonicalize(bundle: ModelBundle) -> ModelBundle:
    """Normal form: everything sorted, priority spelled out in full."""
    model = StaticModel(
        thimacs=tuple(sorted(bundle.model.thimacs, key=lambda t: t.id)),
        flows=tuple(sorted(bundle.model.flows, key=lambda f: (str(f.src), str(f.dst)))),
        triggers=tuple(sorted(
            bundle.model.triggers,
            key=lambda t: (str(t.src), str(t.dst),
                           t.effect.value if t.effect else "",
                           guard_text(t.guard)),
        )),
        name=bundle.model.name,
    )
    return ModelBundle(
        model=model,
        events=tuple(sorted(bundle.events, key=lambda e: e.id)),
        behavior=tuple(sorted(bundle.behavior)),
        priority=bundle.priority_order(),
        initial=dict(sorted(bundle.initial.items())),
        schedule=tuple(sorted(bundle.schedule,
                              key=lambda i: (i.tick, i.thimac, i.label))),
    )
