"""Tick-based execution of thing-machine bundles.

A configuration records completed ticks, store values, token positions,
and the pending event instances for the next tick.  Each step:

1. applies the injections scheduled for the new tick (a token lands at
   the target's receive action when it has one, else at release) and
   pends every event whose region touches the target thimac;
2. takes a start-of-tick snapshot and resolves each pending instance
   against it, walking them in priority order: an instance that fails
   its guards or cannot bind tokens lapses, one whose writes overlap an
   earlier firing this tick defers to the next tick, and the rest fire;
3. firing moves the bound tokens (flow paths shift every path's token
   to its sink; progression advances one token between the stages of a
   single thimac), then applies the induced triggers in canonical order
   with guards re-read mid-tick;
4. each fired event activates its chronology successors: bookkeeping
   successors try to co-fire at once against the mid-tick state (at
   most once per event per tick; a failed co-fire simply does not
   happen), other successors pend for the next tick, carrying the
   subject when they bind tokens;
5. at tick end, tokens injected this tick that still sit in a source
   thimac drain away, counters are checked against their ranges, and
   running timers count down; a timer reaching zero marks itself
   expired and pends the events guarded on its expiry.

Guards gate an event through its induced triggers: every trigger with
an effect contributes its guard, except when several triggers share one
source and target (an if/else group that fires either way); a pure
signal contributes its guard only where it authorizes token movement,
that is when it points at the first action of an induced flow path, or
anywhere in a region that has no flow paths at all.

A run ends at quiescence: nothing pending, no injections left, and no
timer still counting.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .model import (
    ActionKind,
    ActionRef,
    CounterCmp,
    E_COUNTER_RANGE,
    E_DUP_ID,
    E_SYNTAX,
    E_UNRESOLVED_REF,
    Effect,
    Event,
    FlagTest,
    ModelBundle,
    SubjectMode,
    Thimac,
    ThimacKind,
    TimerExpired,
    TmError,
    decompose_flows,
    guard_text,
    induced_region,
    region_paths,
    subject_mode,
)

# Resting stages of a token inside a thimac, shallow to deep.
_STAGE_DEPTH = {
    ActionKind.RELEASE: 0,
    ActionKind.RECEIVE: 1,
    ActionKind.PROCESS: 2,
}


@dataclass
class TimerState:
    """One timer: counting down, expired, or idle."""

    duration: int
    remaining: Optional[int] = None
    expired: bool = False

    @property
    def active(self) -> bool:
        return self.remaining is not None

    def copy(self) -> "TimerState":
        return TimerState(self.duration, self.remaining, self.expired)


@dataclass
class Token:
    """A labeled token and where it rests; thimac None once exited."""

    label: str
    thimac: Optional[str]
    stage: Optional[ActionKind]
    seq: int
    injected_at: int

    @property
    def alive(self) -> bool:
        return self.thimac is not None

    def copy(self) -> "Token":
        return Token(self.label, self.thimac, self.stage, self.seq,
                     self.injected_at)


@dataclass
class Configuration:
    """Full machine state after `tick` completed ticks."""

    tick: int
    counters: dict
    flags: dict
    timers: dict
    tokens: dict
    pending: set

    def copy(self) -> "Configuration":
        return Configuration(
            tick=self.tick,
            counters=dict(self.counters),
            flags=dict(self.flags),
            timers={k: v.copy() for k, v in self.timers.items()},
            tokens={k: v.copy() for k, v in self.tokens.items()},
            pending=set(self.pending),
        )


@dataclass(frozen=True)
class FiredEvent:
    """One event instance that fired: id, bound subject, bookkeeping flag."""

    event: str
    subject: Optional[str]
    bookkeeping: bool = False


@dataclass(frozen=True)
class TraceEntry:
    """Everything that fired in one tick, in firing order."""

    tick: int
    fired: tuple


# ---------------------------------------------------------------------------
# Static analysis cached per bundle
# ---------------------------------------------------------------------------


class _EventInfo:
    def __init__(self, bundle: ModelBundle, event: Event):
        model = bundle.model
        self.event = event
        self.region = induced_region(model, event.region)
        self.mode = subject_mode(model, event)
        self.paths = ()
        self.progress_thimac = None
        self.progress_target = None
        if self.mode == SubjectMode.FLOW:
            self.paths = region_paths(model, event)
        elif self.mode == SubjectMode.PROGRESSION:
            tmap = model.thimac_map()
            stages = {}
            for ref in sorted(event.region, key=str):
                t = tmap.get(ref.thimac)
                if t is None or t.is_store:
                    continue
                if ref.action in _STAGE_DEPTH:
                    stages.setdefault(ref.thimac, []).append(ref.action)
            # the subject advances within the thimac whose receive or
            # process stage the region holds; first by name when several
            deep = (ActionKind.RECEIVE, ActionKind.PROCESS)
            tid = sorted(t for t, acts in stages.items()
                         if any(a in deep for a in acts))[0]
            self.progress_thimac = tid
            self.progress_target = max(stages[tid], key=_STAGE_DEPTH.get)
        # canonical application order for induced triggers
        self.apply_order = tuple(sorted(
            self.region.triggers,
            key=lambda t: (str(t.src), str(t.dst),
                           t.effect.value if t.effect else "",
                           guard_text(t.guard)),
        ))
        # gating guards: effectful triggers gate unless they share their
        # source and target with another induced trigger; signals gate
        # when they point at a path head, or anywhere in a flow-less
        # region
        groups = {}
        for t in self.region.triggers:
            groups.setdefault((t.src, t.dst), []).append(t)
        heads = {p[0] for p in self.paths}
        gates = []
        for (_, dst), members in sorted(groups.items(),
                                        key=lambda kv: (str(kv[0][0]),
                                                        str(kv[0][1]))):
            if len(members) >= 2:
                continue
            t = members[0]
            if t.effect is not None:
                gates.append(t.guard)
            elif (self.paths and t.dst in heads) or not self.region.flows:
                gates.append(t.guard)
        self.gates = tuple(gates)
        # write sets for conflict detection: flags and timers the event
        # may touch (counters commute and are left out)
        flags = set()
        timers = set()
        tmap = model.thimac_map()
        for t in self.region.triggers:
            if t.effect in (Effect.SET, Effect.CLEAR):
                flags.add(t.dst.thimac)
            elif t.effect in (Effect.RESET, Effect.START):
                target = tmap.get(t.dst.thimac)
                if target is not None and target.kind == ThimacKind.TIMER:
                    timers.add(t.dst.thimac)
        self.write_flags = frozenset(flags)
        self.write_timers = frozenset(timers)


class _Index:
    """Per-bundle lookup tables for the stepper."""

    def __init__(self, bundle: ModelBundle):
        self.bundle = bundle
        model = bundle.model
        self.thimacs = model.thimac_map()
        self.events = bundle.event_map()
        order = bundle.priority_order()
        self.priority = {eid: i for i, eid in enumerate(order)}
        self.successors = {eid: bundle.successors(eid) for eid in self.events}
        self.info = {eid: _EventInfo(bundle, ev)
                     for eid, ev in self.events.items()}
        # events to pend when a token lands in a thimac
        self.injection_events = {}
        for t in model.thimacs:
            hits = [e.id for e in bundle.events
                    if any(r.thimac == t.id for r in e.region)]
            self.injection_events[t.id] = tuple(hits)
        # events to pend when a timer runs out
        self.expiry_events = {}
        for eid, info in self.info.items():
            for tr in info.region.triggers:
                for atom in tr.guard:
                    if isinstance(atom, TimerExpired):
                        self.expiry_events.setdefault(atom.timer, [])
                        if eid not in self.expiry_events[atom.timer]:
                            self.expiry_events[atom.timer].append(eid)

    def entry_key(self, entry):
        eid, subj = entry
        return (self.priority.get(eid, len(self.priority)), subj or "")


_INDEX_CACHE = {}


def _index(bundle: ModelBundle) -> _Index:
    cached = _INDEX_CACHE.get(id(bundle))
    if cached is not None and cached.bundle is bundle:
        return cached
    idx = _Index(bundle)
    _INDEX_CACHE[id(bundle)] = idx
    if len(_INDEX_CACHE) > 64:
        _INDEX_CACHE.clear()
        _INDEX_CACHE[id(bundle)] = idx
    return idx


# ---------------------------------------------------------------------------
# Guards and views
# ---------------------------------------------------------------------------


class _View:
    """Read access to stores and token positions, either a start-of-tick
    snapshot or the live mid-tick configuration."""

    def __init__(self, cfg: Configuration, frozen: bool):
        self.frozen = frozen
        if frozen:
            self.counters = dict(cfg.counters)
            self.flags = dict(cfg.flags)
            self.expired = {k: v.expired for k, v in cfg.timers.items()}
            self.places = {label: (tok.thimac, tok.stage, tok.seq)
                           for label, tok in cfg.tokens.items()
                           if tok.alive}
        else:
            self.cfg = cfg

    def counter(self, tid):
        return self.counters[tid] if self.frozen else self.cfg.counters[tid]

    def flag(self, tid):
        return self.flags[tid] if self.frozen else self.cfg.flags[tid]

    def timer_expired(self, tid):
        if self.frozen:
            return self.expired[tid]
        return self.cfg.timers[tid].expired

    def placements(self):
        if self.frozen:
            return self.places
        return {label: (tok.thimac, tok.stage, tok.seq)
                for label, tok in self.cfg.tokens.items() if tok.alive}


def _eval_guard(guard, view: _View) -> bool:
    for atom in guard:
        if isinstance(atom, CounterCmp):
            value = view.counter(atom.counter)
            ok = {
                "=": value == atom.value,
                "!=": value != atom.value,
                "<": value < atom.value,
                "<=": value <= atom.value,
                ">": value > atom.value,
                ">=": value >= atom.value,
            }[atom.op]
            if not ok:
                return False
        elif isinstance(atom, FlagTest):
            value = view.flag(atom.flag)
            if value == atom.negated:
                return False
        elif isinstance(atom, TimerExpired):
            if not view.timer_expired(atom.timer):
                return False
    return True


# ---------------------------------------------------------------------------
# Instance resolution
# ---------------------------------------------------------------------------


@dataclass
class _Binding:
    """A resolved event instance ready to fire."""

    info: _EventInfo
    subject: Optional[str]          # recorded in the trace
    moves: tuple                    # (label, path) pairs for flow events
    advance: Optional[str]          # token label for progression
    enters_process: bool
    write_set: frozenset


def _pick(candidates, deepest: bool):
    """Token choice among (label, stage, seq): deepest stage first for
    flow sources, shallowest first for progression; ties go to the
    oldest injection."""
    if not candidates:
        return None
    sign = -1 if deepest else 1
    return min(candidates,
               key=lambda c: (sign * _STAGE_DEPTH[c[1]], c[2]))[0]


def _resolve(index: _Index, eid: str, subj, view: _View):
    """Resolve one pending instance against a view; None when the event
    cannot fire (failed guards, missing tokens, occupied stage)."""
    info = index.info[eid]
    for guard in info.gates:
        if not _eval_guard(guard, view):
            return None
    places = view.placements()

    if info.mode == SubjectMode.SUBJECTLESS:
        return _Binding(info, subj, (), None, False, frozenset(
            info.write_flags | info.write_timers))

    if info.mode == SubjectMode.FLOW:
        by_thimac = {}
        for label, (tid, stage, seq) in places.items():
            by_thimac.setdefault(tid, []).append((label, stage, seq))
        primary_src = info.paths[0][0].thimac
        if subj is not None:
            spot = places.get(subj)
            if spot is None or spot[0] != primary_src:
                return None
            primary = subj
        else:
            primary = _pick(by_thimac.get(primary_src, []), deepest=True)
            if primary is None:
                return None
        moves = [(primary, info.paths[0])]
        bound = {primary}
        for path in info.paths[1:]:
            src = path[0].thimac
            pool = [c for c in by_thimac.get(src, []) if c[0] not in bound]
            stim = _pick(pool, deepest=True)
            if stim is None:
                return None
            bound.add(stim)
            moves.append((stim, path))
        writes = bound | info.write_flags | info.write_timers
        return _Binding(info, primary, tuple(moves), None, False,
                        frozenset(writes))

    # progression
    tid = info.progress_thimac
    target = info.progress_target
    here = [(label, stage, seq)
            for label, (t, stage, seq) in places.items() if t == tid]
    if subj is not None:
        spot = places.get(subj)
        if spot is None or spot[0] != tid:
            return None
        if _STAGE_DEPTH[spot[1]] > _STAGE_DEPTH[target]:
            return None
        chosen = subj
        stage = spot[1]
    else:
        chosen = _pick(here, deepest=False)
        if chosen is None:
            return None
        stage = places[chosen][1]
        if _STAGE_DEPTH[stage] > _STAGE_DEPTH[target]:
            return None
    enters = stage != target and target == ActionKind.PROCESS
    if enters:
        for label, (t, s, _) in places.items():
            if t == tid and s == ActionKind.PROCESS and label != chosen:
                return None
    writes = {chosen} | info.write_flags | info.write_timers
    if enters:
        writes.add(("proc", tid))
    return _Binding(info, chosen, (), chosen, enters, frozenset(writes))


# ---------------------------------------------------------------------------
# Firing
# ---------------------------------------------------------------------------


def _apply_triggers(index: _Index, info: _EventInfo, cfg: Configuration):
    live = _View(cfg, frozen=False)
    for tr in info.apply_order:
        if tr.effect is None:
            continue
        if not _eval_guard(tr.guard, live):
            continue
        target = tr.dst.thimac
        kind = index.thimacs[target].kind
        if tr.effect == Effect.INC:
            cfg.counters[target] += 1
        elif tr.effect == Effect.DEC:
            cfg.counters[target] -= 1
        elif tr.effect == Effect.SET:
            cfg.flags[target] = True
        elif tr.effect == Effect.CLEAR:
            cfg.flags[target] = False
        elif tr.effect == Effect.RESET and kind == ThimacKind.COUNTER:
            decl = index.thimacs[target]
            cfg.counters[target] = int(index.bundle.initial.get(
                target, decl.init))
        else:
            # reset and start both rewind a timer to its full duration
            ts = cfg.timers[target]
            ts.remaining = ts.duration
            ts.expired = False


def _move_tokens(index: _Index, binding: _Binding, cfg: Configuration):
    info = binding.info
    if info.mode == SubjectMode.FLOW:
        for label, path in binding.moves:
            tok = cfg.tokens[label]
            last = path[-1]
            if last.action == ActionKind.TRANSFER:
                tok.thimac = None
                tok.stage = None
                continue
            kind = index.thimacs[last.thimac].kind
            if kind == ThimacKind.SINK:
                tok.thimac = None
                tok.stage = None
            else:
                tok.thimac = last.thimac
                tok.stage = ActionKind.RECEIVE
    elif info.mode == SubjectMode.PROGRESSION:
        tok = cfg.tokens[binding.subject]
        tok.stage = info.progress_target


def _subject_bearing(index: _Index, eid: str) -> bool:
    return index.info[eid].mode != SubjectMode.SUBJECTLESS


def _fire(index: _Index, eid: str, binding: _Binding, cfg: Configuration,
          fired: list, write_sets: list, cofired: set):
    event = index.events[eid]
    _move_tokens(index, binding, cfg)
    _apply_triggers(index, binding.info, cfg)
    fired.append(FiredEvent(eid, binding.subject, event.bookkeeping))
    write_sets.append(binding.write_set)
    context = binding.subject
    for succ_id in index.successors[eid]:
        succ = index.events[succ_id]
        if succ.bookkeeping:
            if succ_id in cofired:
                continue
            cofired.add(succ_id)
            live = _View(cfg, frozen=False)
            b2 = _resolve(index, succ_id, context, live)
            if b2 is None and context is not None:
                # a co-fire may rebind mid-tick when the handed-down
                # subject no longer fits
                b2 = _resolve(index, succ_id, None, live)
            if b2 is not None:
                _fire(index, succ_id, b2, cfg, fired, write_sets, cofired)
        else:
            carry = context if _subject_bearing(index, succ_id) else None
            cfg.pending.add((succ_id, carry))


# ---------------------------------------------------------------------------
# The public engine
# ---------------------------------------------------------------------------


def init(bundle: ModelBundle) -> Configuration:
    """Fresh configuration at tick 0: declared store values with the
    bundle's initial overrides applied, no tokens, nothing pending.
    Raises TmError when an override is unusable."""
    counters = {}
    flags = {}
    timers = {}
    for t in bundle.model.thimacs:
        override = bundle.initial.get(t.id)
        if t.kind == ThimacKind.COUNTER:
            value = t.init if override is None else override
            if not isinstance(value, int) or isinstance(value, bool):
                raise TmError(E_SYNTAX,
                              f"counter override for {t.id} must be an integer")
            if not (t.lo <= value <= t.hi):
                raise TmError(E_COUNTER_RANGE,
                              f"initial value {value} for {t.id} outside "
                              f"{t.lo}..{t.hi}")
            counters[t.id] = value
        elif t.kind == ThimacKind.FLAG:
            value = t.init if override is None else override
            if not isinstance(value, bool):
                raise TmError(E_SYNTAX,
                              f"flag override for {t.id} must be true or false")
            flags[t.id] = value
        elif t.kind == ThimacKind.TIMER:
            duration = t.duration if override is None else override
            if not isinstance(duration, int) or isinstance(duration, bool):
                raise TmError(E_SYNTAX,
                              f"timer override for {t.id} must be an integer")
            if duration < 1:
                raise TmError(E_COUNTER_RANGE,
                              f"timer {t.id} duration must be at least 1")
            timers[t.id] = TimerState(duration)
    for tid in bundle.initial:
        t = bundle.model.thimac_map().get(tid)
        if t is None or not t.is_store:
            raise TmError(E_UNRESOLVED_REF,
                          f"initial override targets {tid} which is not a store")
    return Configuration(0, counters, flags, timers, {}, set())


def _inject(index: _Index, cfg: Configuration, tick: int):
    for inj in index.bundle.schedule:
        if inj.tick != tick:
            continue
        if inj.label in cfg.tokens:
            raise TmError(E_DUP_ID,
                          f"token label {inj.label!r} injected twice")
        thimac = index.thimacs.get(inj.thimac)
        acts = thimac.effective_actions
        stage = (ActionKind.RECEIVE if ActionKind.RECEIVE in acts
                 else ActionKind.RELEASE)
        cfg.tokens[inj.label] = Token(inj.label, inj.thimac, stage,
                                      len(cfg.tokens), tick)
        for eid in index.injection_events[inj.thimac]:
            cfg.pending.add((eid, None))


def step(bundle: ModelBundle, config: Configuration):
    """Execute one tick; returns (new configuration, trace entry)."""
    index = _index(bundle)
    cfg = config.copy()
    tick = cfg.tick + 1
    cfg.tick = tick

    _inject(index, cfg, tick)
    snapshot = _View(cfg, frozen=True)

    entries = sorted(cfg.pending, key=index.entry_key)
    cfg.pending = set()
    fired = []
    write_sets = []
    cofired = set()
    for eid, subj in entries:
        binding = _resolve(index, eid, subj, snapshot)
        if binding is None:
            continue
        if any(binding.write_set & ws for ws in write_sets):
            cfg.pending.add((eid, subj))
            continue
        _fire(index, eid, binding, cfg, fired, write_sets, cofired)

    # tokens injected this tick that never left their source drain away
    for tok in cfg.tokens.values():
        if (tok.alive and tok.injected_at == tick
                and index.thimacs[tok.thimac].kind == ThimacKind.SOURCE):
            tok.thimac = None
            tok.stage = None

    for tid, value in cfg.counters.items():
        decl = index.thimacs[tid]
        if not (decl.lo <= value <= decl.hi):
            raise TmError(E_COUNTER_RANGE,
                          f"counter {tid} left its range {decl.lo}..{decl.hi} "
                          f"at tick {tick} (value {value})")

    for tid, ts in cfg.timers.items():
        if ts.remaining is None:
            continue
        ts.remaining -= 1
        if ts.remaining <= 0:
            ts.remaining = None
            ts.expired = True
            for eid in index.expiry_events.get(tid, ()):
                cfg.pending.add((eid, None))

    return cfg, TraceEntry(tick, tuple(fired))


def quiescent(bundle: ModelBundle, config: Configuration) -> bool:
    """Nothing pending, no injections ahead, no timer still counting."""
    if config.pending:
        return False
    if any(inj.tick > config.tick for inj in bundle.schedule):
        return False
    if any(ts.active for ts in config.timers.values()):
        return False
    return True


def run(bundle: ModelBundle, max_ticks: Optional[int] = None,
        config: Optional[Configuration] = None):
    """Step until quiescence or max_ticks; returns (config, trace list)."""
    cfg = init(bundle) if config is None else config
    trace = []
    while not quiescent(bundle, cfg):
        if max_ticks is not None and cfg.tick >= max_ticks:
            break
        cfg, entry = step(bundle, cfg)
        trace.append(entry)
    return cfg, trace


def enabled_events(bundle: ModelBundle, config: Configuration):
    """Instances that could fire in the upcoming tick, in priority
    order, with the subjects they would bind.  Includes the injections
    scheduled for that tick; ignores conflicts."""
    index = _index(bundle)
    cfg = config.copy()
    _inject(index, cfg, cfg.tick + 1)
    snapshot = _View(cfg, frozen=True)
    out = []
    for eid, subj in sorted(cfg.pending, key=index.entry_key):
        binding = _resolve(index, eid, subj, snapshot)
        if binding is not None:
            out.append((eid, binding.subject))
    return out


# ---------------------------------------------------------------------------
# Trace formatting
# ---------------------------------------------------------------------------


def filter_displayed(bundle: ModelBundle, trace):
    """Drop bookkeeping instances, keeping events marked displayed."""
    emap = bundle.event_map()
    out = []
    for entry in trace:
        kept = tuple(f for f in entry.fired
                     if not f.bookkeeping or emap[f.event].displayed)
        out.append(TraceEntry(entry.tick, kept))
    return out


def format_trace(trace) -> str:
    """One line per tick: `tick N: E1/S1 E2`."""
    lines = []
    for entry in trace:
        parts = []
        for f in entry.fired:
            parts.append(f"{f.event}/{f.subject}" if f.subject is not None
                         else f.event)
        lines.append(f"tick {entry.tick}: {' '.join(parts)}".rstrip())
    return "\n".join(lines) + ("\n" if lines else "")


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') \
                     .replace("\n", "\\n").replace("\t", "\\t") + '"'


def _unquote(text: str) -> str:
    body = text[1:-1]
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            nxt = body[i + 1]
            out.append({"n": "\n", "t": "\t"}.get(nxt, nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def format_trace_records(trace) -> str:
    """Machine form: one tab-separated record per fired instance with
    tick, event, quoted subject (`-` when none), bookkeeping 0/1."""
    lines = []
    for entry in trace:
        for f in entry.fired:
            subject = _quote(f.subject) if f.subject is not None else "-"
            lines.append(f"{entry.tick}\t{f.event}\t{subject}\t"
                         f"{1 if f.bookkeeping else 0}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_trace_records(text: str):
    """Inverse of format_trace_records; ticks without firings are not
    reconstructed."""
    by_tick = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise TmError(E_SYNTAX,
                          f"trace record line {lineno} needs 4 fields")
        tick_text, event, subject_text, bk = parts
        try:
            tick = int(tick_text)
        except ValueError:
            raise TmError(E_SYNTAX,
                          f"trace record line {lineno}: bad tick {tick_text!r}")
        subject = None if subject_text == "-" else _unquote(subject_text)
        by_tick.setdefault(tick, []).append(
            FiredEvent(event, subject, bk == "1"))
    return [TraceEntry(tick, tuple(fired))
            for tick, fired in sorted(by_tick.items())]
