"""Acceptance suite: eight criteria, one pass/fail line each.

Tolerances: criteria 1 and 2 finish under 1 second; criterion 4 runs at
least 1000 schedules under 30 seconds; trace and count comparisons are
exact; criterion 5 reports the observed state count without asserting
it.  Randomness is seeded, so every run checks the same inputs.
"""

import dataclasses
import random
import subprocess
import sys
import time
from pathlib import Path

from thimac import (
    ActionKind,
    ActionRef,
    CounterCmp,
    Effect,
    Event,
    FlagTest,
    FlowEdge,
    Injection,
    ModelBundle,
    StaticModel,
    SubjectMode,
    Thimac,
    ThimacKind,
    TimerExpired,
    TriggerEdge,
    canonicalize,
    has_errors,
    region_paths,
    subject_mode,
    validate_model,
)
from thimac.behavior import (
    ComponentStateDecl,
    behavior_graph,
    check_conformance,
    enumerate_states,
    event_coverage,
    reachable_configs,
)
from thimac.dsl import parse, parse_file, serialize
from thimac.engine import (
    TraceEntry,
    enabled_events,
    filter_displayed,
    format_trace_records,
    init,
    parse_trace_records,
    quiescent,
    run,
    step,
)
from thimac.fsmbridge import parse_fsm_file

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
ASSEMBLY = FIXTURES / "assembly_line.tm"

SCHEDULE_SEED = 40      # criterion 4 and 5 arrival schedules
WALK_SEED = 30          # criterion 3 stimulus walks
BUNDLE_SEED = 60        # criterion 6 random models


def report(criterion, ok, detail=""):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" - {detail}"
    print(line)
    assert ok, line


def tm_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "thimac.cli", *args],
        capture_output=True, text=True, cwd=ROOT)


def assembly():
    result = parse_file(ASSEMBLY)
    assert result.bundle is not None
    return result.bundle


# --- criterion 1: the ten-tick displayed trace ---------------------------------

GOLDEN_DISPLAYED = {
    1: {("E1", "S1")},
    2: {("E1", "S2"), ("E5", "S1")},
    3: {("E1", "S3"), ("E6", "S1")},
    4: {("E1", "S4"), ("E8", "S1")},
    5: {("E2", None), ("E12", "S1")},
    6: {("E4", None), ("E13", "S1")},
    7: {("E1", "S5"), ("E5", "S2")},
    8: {("E2", None), ("E6", "S2")},
    9: {("E8", "S2")},
    10: {("E4", None), ("E12", "S2")},
}


def test_criterion_1_golden_trace_via_cli():
    start = time.perf_counter()
    proc = tm_cli("run", str(ASSEMBLY), "--ticks", "10", "--displayed")
    elapsed = time.perf_counter() - start
    got = {}
    if proc.returncode == 0:
        for entry in parse_trace_records(proc.stdout):
            got[entry.tick] = {(f.event, f.subject) for f in entry.fired}
    ok = proc.returncode == 0 and got == GOLDEN_DISPLAYED and elapsed < 1.0
    report(1, ok, f"10 ticks match exactly in {elapsed:.3f}s (limit 1s)")


# --- criterion 2: declared state space count ------------------------------------

def test_criterion_2_component_product_count():
    start = time.perf_counter()
    proc = tm_cli("enumerate", "B1=0..3", "M1=idle,busy,blocked",
                  "B2=0..3", "M2=idle,busy")
    elapsed = time.perf_counter() - start
    ok = (proc.returncode == 0 and proc.stdout == "96 states\n"
          and elapsed < 1.0)
    report(2, ok, f"4*3*4*2 = 96 in {elapsed:.3f}s (limit 1s)")


# --- criterion 3: state machine import ------------------------------------------

DOOR_TRANSITION_EVENT = {"Open": "opening", "Close": "closing"}


def door_oracle(spec, stimuli):
    table = {}
    for t in spec.transitions:
        table.setdefault((t.src, t.label), t)
    current, settled, fired = spec.initial, 2, []
    for tick, label in stimuli:
        if tick < settled:
            continue
        t = table.get((current, label))
        if t is None:
            continue
        fired.append((tick, DOOR_TRANSITION_EVENT[t.label]))
        current, settled = t.dst, tick + 2
    return current, fired


def door_drive(bundle, spec, stimuli):
    extra = tuple(Injection(tick, f"stim.{label}", f"s{i}")
                  for i, (tick, label) in enumerate(stimuli))
    b = dataclasses.replace(bundle, schedule=bundle.schedule + extra)
    cfg, trace = run(b, max_ticks=(stimuli[-1][0] + 4) if stimuli else 6)
    states = {s.lower() for s in spec.states}
    fired = [(e.tick, f.event) for e in trace for f in e.fired
             if f.event not in states]
    tok = cfg.tokens[spec.name]
    state = next((s for s in spec.states if f"st.{s}" == tok.thimac), None)
    return state, fired


def test_criterion_3_fsm_import_and_walks():
    problems = []
    proc = tm_cli("import-fsm", str(FIXTURES / "door.fsm"))
    if proc.returncode != 0:
        problems.append(f"import-fsm exited {proc.returncode}")
    result = parse(proc.stdout, file="<generated>")
    bundle = result.bundle
    if bundle is None:
        problems.append("generated model does not parse")
    else:
        if len(bundle.events) != 4:
            problems.append(f"{len(bundle.events)} events, wanted 4")
        cycle = {("closed", "opening"), ("opening", "opened"),
                 ("opened", "closing"), ("closing", "closed")}
        if set(bundle.behavior) != cycle:
            problems.append("chronology is not the four-step cycle")
    spec = parse_fsm_file(FIXTURES / "door.fsm").spec
    if bundle is not None:
        state, fired = door_drive(bundle, spec, [(2, "Open"), (4, "Close")])
        if state != "Closed" or fired != [(2, "opening"), (4, "closing")]:
            problems.append(f"scripted walk gave {state} via {fired}")
        rng = random.Random(WALK_SEED)
        mismatches = 0
        for _ in range(100):
            k = rng.randint(0, 20)
            ticks = sorted(rng.sample(range(2, 60), k))
            stimuli = [(t, rng.choice(["Open", "Close"])) for t in ticks]
            if door_drive(bundle, spec, stimuli) != door_oracle(spec, stimuli):
                mismatches += 1
        if mismatches:
            problems.append(f"{mismatches} walk mismatches")
    report(3, not problems,
           "; ".join(problems) or
           "4 events, 4-cycle chronology, 100 walks match the oracle")


# --- criterion 4: randomized schedules keep the invariants -----------------------

def random_schedules(count):
    rng = random.Random(SCHEDULE_SEED)
    schedules = []
    for i in range(count):
        k = rng.randint(0, 25)
        ticks = sorted(rng.sample(range(1, 51), k))
        schedules.append(tuple(Injection(t, "env", f"R{i}x{j}")
                               for j, t in enumerate(ticks)))
    return schedules


def delivery_targets(bundle):
    """Machines that flow events drop a token into."""
    targets = {}
    tmap = bundle.model.thimac_map()
    for event in bundle.events:
        if subject_mode(bundle.model, event) != SubjectMode.FLOW:
            continue
        last = region_paths(bundle.model, event)[0][-1]
        if (last.action == ActionKind.RECEIVE
                and tmap[last.thimac].kind == ThimacKind.MACHINE):
            targets[event.id] = last.thimac
    return targets


def run_checked(bundle, targets, problems):
    ranges = {t.id: (t.lo, t.hi) for t in bundle.model.thimacs
              if t.kind == ThimacKind.COUNTER}
    cfg = init(bundle)
    trace = []
    while not quiescent(bundle, cfg) and cfg.tick < 200:
        pre = cfg
        enabled = set(enabled_events(bundle, pre))
        cfg, entry = step(bundle, pre)
        fired = {(f.event, f.subject) for f in entry.fired
                 if not f.bookkeeping}
        if not fired <= enabled:
            problems.append(f"tick {cfg.tick}: fired {fired - enabled} "
                            f"while not enabled")
        for tid, (lo, hi) in ranges.items():
            if not lo <= cfg.counters[tid] <= hi:
                problems.append(f"tick {cfg.tick}: {tid} = "
                                f"{cfg.counters[tid]}")
        for f in entry.fired:
            m = targets.get(f.event)
            if m is not None and pre.flags.get(f"{m}.block"):
                problems.append(f"tick {cfg.tick}: {f.event} delivered "
                                f"into blocked {m}")
        trace.append(entry)
    if len(cfg.tokens) != len(bundle.schedule):
        problems.append("token count drifted from injection count")
    return trace


def test_criterion_4_schedule_invariants():
    base = assembly()
    targets = delivery_targets(base)
    problems = []
    start = time.perf_counter()
    schedules = random_schedules(1000)
    for sched in schedules:
        b = dataclasses.replace(base, schedule=sched)
        trace = run_checked(b, targets, problems)
        again = run(b, max_ticks=200)[1]
        if format_trace_records(trace) != format_trace_records(again):
            problems.append("repeat run diverged")
        if len(problems) > 5:
            break
    elapsed = time.perf_counter() - start
    if elapsed >= 30.0:
        problems.append(f"took {elapsed:.1f}s (limit 30s)")
    report(4, not problems,
           "; ".join(problems[:3]) or
           f"1000 schedules hold all invariants in {elapsed:.1f}s "
           f"(limit 30s)")


# --- criterion 5: observed states stay inside the declared product ---------------

ASSEMBLY_DECLS = [
    ComponentStateDecl("B1", (0, 1, 2, 3)),
    ComponentStateDecl("M1", ("idle", "busy", "blocked")),
    ComponentStateDecl("B2", (0, 1, 2, 3)),
    ComponentStateDecl("M2", ("idle", "busy")),
]

ASSEMBLY_PROJECTION = {"B1.count": "B1", "M1": "M1",
                       "B2.count": "B2", "M2": "M2"}


def test_criterion_5_reachable_within_declared():
    base = assembly()
    schedules = random_schedules(1000)
    seen = reachable_configs(base, ASSEMBLY_PROJECTION, max_ticks=200,
                             schedules=schedules)
    declared = set(enumerate_states(ASSEMBLY_DECLS)[1])
    ok = seen <= declared
    stray = list(seen - declared)[:3]
    report(5, ok,
           f"observed {len(seen)} of {len(declared)} declared states"
           + (f"; outside product: {stray}" if stray else ""))


# --- criterion 6: text form round trips -------------------------------------------

def fixpoint_ok(bundle, problems, who):
    text = serialize(bundle)
    reparsed = parse(text, file=who)
    if reparsed.bundle is None:
        problems.append(f"{who}: serialized form does not parse: "
                        + "; ".join(str(d) for d in reparsed.diagnostics[:2]))
        return
    if reparsed.bundle != canonicalize(bundle):
        problems.append(f"{who}: reparse is not the canonical bundle")
    if serialize(reparsed.bundle) != text:
        problems.append(f"{who}: second serialization differs")


def random_bundle(rng, n):
    machines = [f"M{i}" for i in range(1, rng.randint(2, 4))]
    counters = [f"c{i}" for i in range(rng.randint(0, 2))]
    flags = [f"f{i}" for i in range(rng.randint(0, 2))]
    timers = [f"w{i}" for i in range(rng.randint(0, 1))]

    five = frozenset(ActionKind)
    thimacs = [Thimac("env", ThimacKind.SOURCE,
                      frozenset({ActionKind.RELEASE, ActionKind.TRANSFER}))]
    thimacs += [Thimac(m, ThimacKind.MACHINE, five) for m in machines]
    thimacs.append(Thimac("out", ThimacKind.SINK,
                          frozenset({ActionKind.TRANSFER,
                                     ActionKind.RECEIVE})))
    bounds = {}
    for c in counters:
        hi = rng.randint(1, 5)
        bounds[c] = hi
        thimacs.append(Thimac(c, ThimacKind.COUNTER, lo=0, hi=hi,
                              init=rng.randint(0, hi)))
    for f in flags:
        thimacs.append(Thimac(f, ThimacKind.FLAG,
                              init=rng.choice([True, False])))
    for w in timers:
        thimacs.append(Thimac(w, ThimacKind.TIMER,
                              duration=rng.randint(1, 9)))

    def ref(tid, action):
        return ActionRef(tid, action)

    flows = [FlowEdge(ref("env", ActionKind.RELEASE),
                      ref("env", ActionKind.TRANSFER))]
    prev = "env"
    for m in machines:
        flows.append(FlowEdge(ref(prev, ActionKind.TRANSFER),
                              ref(m, ActionKind.TRANSFER)))
        flows.append(FlowEdge(ref(m, ActionKind.TRANSFER),
                              ref(m, ActionKind.RECEIVE)))
        flows.append(FlowEdge(ref(m, ActionKind.RELEASE),
                              ref(m, ActionKind.TRANSFER)))
        prev = m
    flows.append(FlowEdge(ref(prev, ActionKind.TRANSFER),
                          ref("out", ActionKind.TRANSFER)))
    flows.append(FlowEdge(ref("out", ActionKind.TRANSFER),
                          ref("out", ActionKind.RECEIVE)))

    def guard(rng):
        atoms = []
        for _ in range(rng.randint(0, 2)):
            pool = []
            if counters:
                c = rng.choice(counters)
                pool.append(CounterCmp(c, rng.choice(
                    ("=", "!=", "<", "<=", ">", ">=")),
                    rng.randint(0, bounds[c])))
            if flags:
                pool.append(FlagTest(rng.choice(flags),
                                     rng.choice([True, False])))
            if timers:
                pool.append(TimerExpired(rng.choice(timers)))
            if pool:
                atoms.append(rng.choice(pool))
        return tuple(atoms)

    triggers = []
    for _ in range(rng.randint(0, 4)):
        src = ref(rng.choice(machines),
                  rng.choice((ActionKind.RECEIVE, ActionKind.PROCESS,
                              ActionKind.RELEASE)))
        stores = ([(c, (Effect.INC, Effect.DEC, Effect.RESET))
                   for c in counters]
                  + [(f, (Effect.SET, Effect.CLEAR)) for f in flags]
                  + [(w, (Effect.RESET, Effect.START)) for w in timers])
        if not stores:
            break
        tid, effects = rng.choice(stores)
        triggers.append(TriggerEdge(src, ref(tid, ActionKind.CREATE),
                                    rng.choice(effects), guard(rng)))

    labels = ["", "plain words", 'has "quotes"', "tab\tinside",
              "line\nbreak"]
    events = []
    first = machines[0]
    arrive_region = {ref("env", ActionKind.RELEASE),
                     ref("env", ActionKind.TRANSFER),
                     ref(first, ActionKind.TRANSFER),
                     ref(first, ActionKind.RECEIVE)}
    if counters:
        arrive_region.add(ref(counters[0], ActionKind.CREATE))
    events.append(Event("arrive", frozenset(arrive_region),
                        rng.choice(labels)))
    for m in machines:
        region = {ref(m, ActionKind.PROCESS)}
        if flags and rng.random() < 0.5:
            region.add(ref(rng.choice(flags), ActionKind.CREATE))
        events.append(Event(f"work_{m}", frozenset(region),
                            rng.choice(labels),
                            bookkeeping=rng.random() < 0.3,
                            displayed=rng.random() < 0.2))
    last = machines[-1]
    events.append(Event("ship", frozenset({
        ref(last, ActionKind.RELEASE), ref(last, ActionKind.TRANSFER),
        ref("out", ActionKind.TRANSFER), ref("out", ActionKind.RECEIVE)}),
        rng.choice(labels)))

    ids = [e.id for e in events]
    behavior = list(zip(ids, ids[1:]))
    if len(ids) > 2 and rng.random() < 0.5:
        behavior.append((ids[-1], ids[0]))
    priority = ids[:]
    rng.shuffle(priority)
    if rng.random() < 0.3:
        priority = priority[:-1]    # partial priority warns but parses

    initial = {}
    if counters and rng.random() < 0.5:
        initial[counters[0]] = rng.randint(0, bounds[counters[0]])
    if flags and rng.random() < 0.5:
        initial[flags[0]] = rng.choice([True, False])
    schedule = tuple(Injection(rng.randint(1, 9), "env", f"t{j}")
                     for j in range(rng.randint(0, 3)))

    return ModelBundle(
        StaticModel(tuple(thimacs), tuple(flows), tuple(triggers),
                    f"rand{n}"),
        tuple(events), tuple(behavior), tuple(priority), initial, schedule)


def test_criterion_6_text_roundtrip():
    problems = []
    for name in ("assembly_line.tm", "door.tm", "phone_line.tm"):
        result = parse_file(FIXTURES / name)
        if result.bundle is None:
            problems.append(f"{name} does not parse")
            continue
        fixpoint_ok(result.bundle, problems, name)
    rng = random.Random(BUNDLE_SEED)
    for n in range(200):
        b = random_bundle(rng, n)
        if has_errors(validate_model(b)):
            problems.append(f"rand{n} generated invalid")
            continue
        fixpoint_ok(b, problems, f"rand{n}")
        if len(problems) > 5:
            break
    report(6, not problems,
           "; ".join(problems[:3]) or
           "3 fixtures and 200 random models reach the canonical fixpoint")


# --- criterion 7: the dialing model ----------------------------------------------

def test_criterion_7_phone_scenarios():
    problems = []
    proc = tm_cli("validate", str(FIXTURES / "phone_line.tm"))
    if proc.returncode != 0:
        problems.append(f"validate exited {proc.returncode}")
    result = parse_file(FIXTURES / "phone_line.tm")
    bundle = result.bundle
    _covered, uncovered = event_coverage(bundle)
    if uncovered:
        problems.append(f"{len(uncovered)} actions uncovered")

    cfg, trace = run(bundle, max_ticks=8)
    by_tick = {e.tick: [(f.event, f.subject) for f in e.fired]
               for e in trace}
    if (by_tick.get(7) != [("connect", None)] or not cfg.flags["conn.req"]
            or cfg.counters["digits.count"] != 4):
        problems.append("valid digits did not connect at tick 7")

    invalid = dataclasses.replace(bundle, initial={"number.valid": False})
    cfg, trace = run(invalid, max_ticks=9)
    by_tick = {e.tick: [(f.event, f.subject) for f in e.fired]
               for e in trace}
    if (by_tick.get(7) != [("reject", None)]
            or by_tick.get(8) != [("redial", None)]
            or not cfg.flags["msg"]
            or cfg.counters["digits.count"] != 0):
        problems.append("invalid number did not reject then redial")

    stalled = dataclasses.replace(bundle, schedule=(
        Injection(1, "hook", "call"), Injection(3, "digit.src", "d1")))
    cfg, trace = run(stalled, max_ticks=10)
    by_tick = {e.tick: [(f.event, f.subject) for f in e.fired]
               for e in trace}
    if by_tick.get(9) != [("warn", None)] or not cfg.flags["warnmsg"]:
        problems.append("stalled dialing did not warn at tick 9")
    if any(by_tick.get(t) for t in range(4, 9)):
        problems.append("ticks 4..8 were not silent while stalled")
    if not cfg.timers["dial.timer"].expired:
        problems.append("dial timer not expired after the warning")

    report(7, not problems,
           "; ".join(problems) or
           "validates, full coverage, connect/reject-redial/warn land "
           "on ticks 7/7-8/9")


# --- criterion 8: conformance checker ----------------------------------------------

def test_criterion_8_conformance():
    problems = []
    b = assembly()
    graph = behavior_graph(b)
    _cfg, trace = run(b, max_ticks=10)
    golden = check_conformance(trace, graph)
    if golden:
        problems.append(f"golden trace shows {len(golden)} violations")

    t2, t3 = trace[1], trace[2]
    moved = next(f for f in t3.fired if f.event == "E6")
    mutated = list(trace)
    mutated[1] = TraceEntry(2, tuple(
        moved if f.event == "E5" else f for f in t2.fired))
    mutated[2] = TraceEntry(3, tuple(
        f for f in t3.fired if f.event != "E6"))
    found = check_conformance(mutated, graph)
    if len(found) != 1:
        problems.append(f"mutated trace shows {len(found)} violations, "
                        f"wanted exactly 1")
    elif (found[0].tick, found[0].event, found[0].subject) != (2, "E6", "S1"):
        problems.append(f"violation landed on {found[0]}")

    report(8, not problems,
           "; ".join(problems) or
           "golden trace conforms; one edit yields exactly one violation")
