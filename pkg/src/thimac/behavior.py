"""Analysis over runs: chronology conformance, state spaces, coverage.

The chronology (behavior graph) names which event may follow which for
one subject.  A trace conforms when every subject-bearing instance is
preceded, for its subject, by an instance its chronology points from;
bookkeeping instances count as predecessors but are not themselves
checked, and instances without a subject are skipped.

State enumeration is declarative: each component brings the domain it
may range over, and the product is walked lazily.  Reachable
configurations come from actually running the model under one or more
arrival schedules and projecting each configuration onto the declared
components, so the observed set can be held against the declared
product.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass
from typing import Optional

from .model import (
    ActionKind,
    ActionRef,
    E_EMPTY_DOMAIN,
    E_UNRESOLVED_REF,
    ModelBundle,
    ThimacKind,
    TmError,
)
from .engine import Configuration, init, quiescent, step

MACHINE_IDLE = "idle"
MACHINE_BUSY = "busy"
MACHINE_BLOCKED = "blocked"


@dataclass(frozen=True)
class BehaviorGraph:
    """Chronology as a directed graph over event ids."""

    nodes: frozenset
    edges: frozenset

    def has_edge(self, src: str, dst: str) -> bool:
        return (src, dst) in self.edges

    def successors(self, src: str):
        return sorted(dst for s, dst in self.edges if s == src)


def behavior_graph(bundle: ModelBundle) -> BehaviorGraph:
    return BehaviorGraph(frozenset(e.id for e in bundle.events),
                         frozenset(bundle.behavior))


@dataclass(frozen=True)
class Violation:
    """A subject stepped outside its chronology."""

    tick: int
    event: str
    subject: str
    prev_event: str
    prev_tick: int

    def __str__(self):
        return (f"tick {self.tick}: {self.event}/{self.subject} has no "
                f"chronology edge {self.prev_event} -> {self.event} "
                f"(predecessor fired at tick {self.prev_tick})")


def check_conformance(trace, graph: BehaviorGraph):
    """Violations of the chronology over a trace, in trace order.

    Tracks each subject's most recent instance; the next non-bookkeeping
    instance for that subject must sit at the end of a chronology edge
    from it.  Unknown events raise E_UNRESOLVED_REF.
    """
    last = {}
    violations = []
    for entry in trace:
        for f in entry.fired:
            if f.event not in graph.nodes:
                raise TmError(E_UNRESOLVED_REF,
                              f"trace names unknown event {f.event!r}")
            if f.subject is None:
                continue
            prev = last.get(f.subject)
            if (prev is not None and not f.bookkeeping
                    and not graph.has_edge(prev[0], f.event)):
                violations.append(Violation(entry.tick, f.event, f.subject,
                                            prev[0], prev[1]))
            last[f.subject] = (f.event, entry.tick)
    return violations


# ---------------------------------------------------------------------------
# State spaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ComponentStateDecl:
    """One named component and the values it may take."""

    component: str
    domain: tuple


def enumerate_states(decls):
    """Declared product state space: (count, lazy tuple iterator)."""
    decls = list(decls)
    if not decls:
        raise TmError(E_EMPTY_DOMAIN, "no components to enumerate")
    for d in decls:
        if not d.domain:
            raise TmError(E_EMPTY_DOMAIN,
                          f"component {d.component} has an empty domain")
    count = math.prod(len(d.domain) for d in decls)
    return count, itertools.product(*(tuple(d.domain) for d in decls))


def machine_status(bundle: ModelBundle, config: Configuration,
                   thimac: str) -> str:
    """Blocked when the machine's block flag is raised, busy when a
    token sits at its process action, idle otherwise."""
    if config.flags.get(f"{thimac}.block"):
        return MACHINE_BLOCKED
    for tok in config.tokens.values():
        if tok.alive and tok.thimac == thimac \
                and tok.stage == ActionKind.PROCESS:
            return MACHINE_BUSY
    return MACHINE_IDLE


def project_config(bundle: ModelBundle, projection, config: Configuration):
    """Project a configuration onto named components, in declaration
    order: counters give their value, flags their truth, token-bearing
    thimacs their status."""
    tmap = bundle.model.thimac_map()
    out = []
    for tid in projection:
        t = tmap.get(tid)
        if t is None:
            raise TmError(E_UNRESOLVED_REF,
                          f"projection names unknown thimac {tid!r}")
        if t.kind == ThimacKind.COUNTER:
            out.append(config.counters[tid])
        elif t.kind == ThimacKind.FLAG:
            out.append(config.flags[tid])
        else:
            out.append(machine_status(bundle, config, tid))
    return tuple(out)


def reachable_configs(bundle: ModelBundle, projection, max_ticks=None,
                      schedules=None):
    """Projected configurations observed over runs.

    Each schedule replaces the bundle's own (None runs the bundle's
    schedule once); every run contributes its initial projection and one
    per completed tick.  An empty schedule collection observes nothing.
    """
    if schedules is None:
        schedules = (bundle.schedule,)
    seen = set()
    for sched in schedules:
        b = dataclasses.replace(bundle, schedule=tuple(sched))
        cfg = init(b)
        seen.add(project_config(b, projection, cfg))
        while not quiescent(b, cfg):
            if max_ticks is not None and cfg.tick >= max_ticks:
                break
            cfg, _entry = step(b, cfg)
            seen.add(project_config(b, projection, cfg))
    return seen


# ---------------------------------------------------------------------------
# Coverage
# ---------------------------------------------------------------------------


def event_coverage(bundle: ModelBundle):
    """Static split of the model's actions into those inside some event
    region and those no event touches."""
    covered = set()
    for event in bundle.events:
        covered.update(event.region)
    everything = set()
    for t in bundle.model.thimacs:
        for action in t.effective_actions:
            everything.add(ActionRef(t.id, action))
    uncovered = everything - covered
    return frozenset(covered & everything), frozenset(uncovered)
