"""Text format for thing-machine bundles.

A document opens with `model NAME` and continues with declarations in
any order:

    thimac M1 kind machine { actions: process, release, transfer, receive }
    thimac B1.count kind counter { range 0 .. 3 init 0 }
    thimac M1.block kind flag { init false }
    thimac dial.timer kind timer { duration 6 }
    flow env.release -> env.transfer
    trigger M1.receive -> B1.count.create effect inc when B1.count < 3
    event E1 "load first station" bookkeeping region { env.release, M1.receive }
    behavior { E1 -> E2; E2 -> E3; }
    priority [ E1, E2, E3 ]
    initial { B1.count = 2; M1.block = true; }
    schedule { at 1 inject env "S1"; }

Comments run from `#` to end of line.  A reference is a dotted name
whose last segment is an action kind; everything before it is the
thimac id, which may itself contain dots.  Guards are conjunctions of
counter comparisons (`c < 3`), flag tests (`f`, `not f`), and timer
expiry tests (`expired t`).  When a document omits `priority`, events
fire in declaration order.

`parse` returns a ParseResult; the bundle is present exactly when no
error-severity diagnostics were produced.  `serialize` emits the
canonical form, which `parse` maps back to the same bundle.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .model import (
    ACTION_ORDER,
    ActionKind,
    ActionRef,
    CounterCmp,
    Diagnostic,
    E_SYNTAX,
    Effect,
    Event,
    FlagTest,
    FlowEdge,
    Injection,
    ModelBundle,
    StaticModel,
    Thimac,
    ThimacKind,
    TimerExpired,
    TriggerEdge,
    canonicalize,
    guard_text,
    has_errors,
    validate_model,
)

_ACTION_NAMES = {a.value for a in ActionKind}
_KIND_NAMES = {k.value for k in ThimacKind}
_EFFECT_NAMES = {e.value for e in Effect}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<arrow>->)
  | (?P<dotdot>\.\.)
  | (?P<int>-?\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<cmp>!=|<=|>=|<|>|=)
  | (?P<lbrace>\{)
  | (?P<rbrace>\})
  | (?P<lbracket>\[)
  | (?P<rbracket>\])
  | (?P<comma>,)
  | (?P<semi>;)
  | (?P<colon>:)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


class _ParseFailure(Exception):
    """Internal unwind after a syntax diagnostic."""


@dataclass
class ParseResult:
    bundle: Optional[ModelBundle]
    diagnostics: list

    @property
    def ok(self) -> bool:
        return self.bundle is not None


def _lex(text: str, file: str):
    tokens = []
    diags = []
    pos = 0
    line = 1
    col = 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            diags.append(Diagnostic(file, line, col, E_SYNTAX,
                                    f"unexpected character {text[pos]!r}"))
            pos += 1
            col += 1
            continue
        kind = m.lastgroup
        lexeme = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, lexeme, line, col))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens, diags


def _unescape(text: str) -> str:
    # strip quotes, undo \" \\ \n \t
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


def _escape(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') \
                     .replace("\n", "\\n").replace("\t", "\\t") + '"'


class _Parser:
    def __init__(self, tokens, file, diags):
        self.tokens = tokens
        self.file = file
        self.diags = diags
        self.i = 0
        self.positions = {}
        self.thimacs = []
        self.flows = []
        self.triggers = []
        self.events = []
        self.behavior = []
        self.priority = []
        self.saw_priority = False
        self.initial = {}
        self.schedule = []
        self.name = ""

    # --- token plumbing ---

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def fail(self, tok: Token, message: str):
        self.diags.append(Diagnostic(self.file, tok.line, tok.col, E_SYNTAX, message))
        raise _ParseFailure()

    def expect(self, kind: str, what: str) -> Token:
        tok = self.next()
        if tok.kind != kind:
            self.fail(tok, f"expected {what}, got {tok.text or 'end of file'!r}")
        return tok

    def expect_word(self, word: str) -> Token:
        tok = self.next()
        if tok.kind != "ident" or tok.text != word:
            self.fail(tok, f"expected {word!r}, got {tok.text or 'end of file'!r}")
        return tok

    def at_word(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.text == word

    def eat_word(self, word: str) -> bool:
        if self.at_word(word):
            self.next()
            return True
        return False

    def expect_int(self, what: str) -> int:
        tok = self.expect("int", what)
        return int(tok.text)

    def expect_ident(self, what: str) -> Token:
        return self.expect("ident", what)

    def expect_ref(self, what: str = "an action reference") -> ActionRef:
        tok = self.expect("ident", what)
        thimac, _, action = tok.text.rpartition(".")
        if not thimac or action not in _ACTION_NAMES:
            self.fail(tok, f"{tok.text!r} is not a dotted action reference")
        return ActionRef(thimac, ActionKind(action))

    # --- declarations ---

    def parse_document(self):
        self.expect_word("model")
        self.name = self.expect_ident("a model name").text
        while self.peek().kind != "eof":
            tok = self.peek()
            if tok.kind != "ident":
                self.fail(tok, f"expected a declaration, got {tok.text!r}")
            handler = {
                "thimac": self.parse_thimac,
                "flow": self.parse_flow,
                "trigger": self.parse_trigger,
                "event": self.parse_event,
                "behavior": self.parse_behavior,
                "priority": self.parse_priority,
                "initial": self.parse_initial,
                "schedule": self.parse_schedule,
            }.get(tok.text)
            if handler is None:
                self.fail(tok, f"unknown declaration {tok.text!r}")
            handler()

    def parse_thimac(self):
        self.expect_word("thimac")
        name_tok = self.expect_ident("a thimac id")
        tid = name_tok.text
        last = tid.rpartition(".")[2]
        if last in _ACTION_NAMES:
            self.fail(name_tok,
                      f"thimac id {tid!r} must not end in an action name")
        self.expect_word("kind")
        kind_tok = self.expect_ident("a thimac kind")
        if kind_tok.text not in _KIND_NAMES:
            self.fail(kind_tok, f"unknown thimac kind {kind_tok.text!r}")
        kind = ThimacKind(kind_tok.text)
        self.expect("lbrace", "'{'")
        actions = set()
        lo = hi = 0
        init = False if kind == ThimacKind.FLAG else 0
        duration = 0
        while self.peek().kind != "rbrace":
            member = self.expect_ident("a thimac member")
            if member.text == "actions":
                self.expect("colon", "':'")
                while True:
                    act = self.expect_ident("an action name")
                    if act.text not in _ACTION_NAMES:
                        self.fail(act, f"unknown action {act.text!r}")
                    actions.add(ActionKind(act.text))
                    if self.peek().kind != "comma":
                        break
                    self.next()
            elif member.text == "range":
                lo = self.expect_int("a range lower bound")
                self.expect("dotdot", "'..'")
                hi = self.expect_int("a range upper bound")
                self.expect_word("init")
                init = self.expect_int("an initial value")
            elif member.text == "init":
                val = self.expect_ident("true or false")
                if val.text not in ("true", "false"):
                    self.fail(val, f"expected true or false, got {val.text!r}")
                init = val.text == "true"
            elif member.text == "duration":
                duration = self.expect_int("a duration")
            else:
                self.fail(member, f"unknown thimac member {member.text!r}")
        self.expect("rbrace", "'}'")
        self.positions[("thimac", tid)] = (name_tok.line, name_tok.col)
        self.thimacs.append(Thimac(tid, kind, frozenset(actions),
                                   lo, hi, init, duration))

    def parse_flow(self):
        kw = self.expect_word("flow")
        src = self.expect_ref()
        self.expect("arrow", "'->'")
        dst = self.expect_ref()
        self.positions[("flow", len(self.flows))] = (kw.line, kw.col)
        self.flows.append(FlowEdge(src, dst))

    def parse_guard(self) -> tuple:
        atoms = []
        while True:
            tok = self.peek()
            if tok.kind != "ident":
                self.fail(tok, "expected a guard atom")
            if tok.text == "not":
                self.next()
                flag = self.expect_ident("a flag name")
                atoms.append(FlagTest(flag.text, negated=True))
            elif tok.text == "expired":
                self.next()
                timer = self.expect_ident("a timer name")
                atoms.append(TimerExpired(timer.text))
            else:
                name = self.next()
                if self.peek().kind == "cmp":
                    op = self.next().text
                    value = self.expect_int("a comparison value")
                    atoms.append(CounterCmp(name.text, op, value))
                else:
                    atoms.append(FlagTest(name.text))
            if not self.eat_word("and"):
                break
        return tuple(atoms)

    def parse_trigger(self):
        kw = self.expect_word("trigger")
        src = self.expect_ref()
        self.expect("arrow", "'->'")
        dst = self.expect_ref()
        effect = None
        if self.eat_word("effect"):
            eff = self.expect_ident("an effect name")
            if eff.text not in _EFFECT_NAMES:
                self.fail(eff, f"unknown effect {eff.text!r}")
            effect = Effect(eff.text)
        guard = ()
        if self.eat_word("when"):
            guard = self.parse_guard()
        self.positions[("trigger", len(self.triggers))] = (kw.line, kw.col)
        self.triggers.append(TriggerEdge(src, dst, effect, guard))

    def parse_event(self):
        self.expect_word("event")
        name_tok = self.expect_ident("an event id")
        label_tok = self.expect("string", "a label string")
        bookkeeping = self.eat_word("bookkeeping")
        displayed = self.eat_word("displayed")
        self.expect_word("region")
        self.expect("lbrace", "'{'")
        refs = set()
        while self.peek().kind != "rbrace":
            refs.add(self.expect_ref())
            if self.peek().kind == "comma":
                self.next()
        self.expect("rbrace", "'}'")
        self.positions[("event", name_tok.text)] = (name_tok.line, name_tok.col)
        self.events.append(Event(name_tok.text, frozenset(refs),
                                 _unescape(label_tok.text), bookkeeping, displayed))

    def parse_behavior(self):
        self.expect_word("behavior")
        self.expect("lbrace", "'{'")
        while self.peek().kind != "rbrace":
            kw = self.peek()
            src = self.expect_ident("an event id")
            self.expect("arrow", "'->'")
            dst = self.expect_ident("an event id")
            self.expect("semi", "';'")
            self.positions[("behavior", len(self.behavior))] = (kw.line, kw.col)
            self.behavior.append((src.text, dst.text))
        self.expect("rbrace", "'}'")

    def parse_priority(self):
        self.expect_word("priority")
        self.expect("lbracket", "'['")
        self.saw_priority = True
        while self.peek().kind != "rbracket":
            tok = self.expect_ident("an event id")
            self.positions[("priority", len(self.priority))] = (tok.line, tok.col)
            self.priority.append(tok.text)
            if self.peek().kind == "comma":
                self.next()
        self.expect("rbracket", "']'")

    def parse_initial(self):
        self.expect_word("initial")
        self.expect("lbrace", "'{'")
        while self.peek().kind != "rbrace":
            name_tok = self.expect_ident("a store id")
            eq = self.expect("cmp", "'='")
            if eq.text != "=":
                self.fail(eq, f"expected '=', got {eq.text!r}")
            tok = self.next()
            if tok.kind == "int":
                value = int(tok.text)
            elif tok.kind == "ident" and tok.text in ("true", "false"):
                value = tok.text == "true"
            else:
                self.fail(tok, f"expected a value, got {tok.text!r}")
            self.expect("semi", "';'")
            self.positions[("initial", name_tok.text)] = (name_tok.line, name_tok.col)
            self.initial[name_tok.text] = value
        self.expect("rbrace", "'}'")

    def parse_schedule(self):
        self.expect_word("schedule")
        self.expect("lbrace", "'{'")
        while self.peek().kind != "rbrace":
            kw = self.expect_word("at")
            tick = self.expect_int("a tick number")
            self.expect_word("inject")
            target = self.expect_ident("a thimac id")
            label = self.expect("string", "a token label")
            self.expect("semi", "';'")
            self.positions[("schedule", len(self.schedule))] = (kw.line, kw.col)
            self.schedule.append(Injection(tick, target.text,
                                           _unescape(label.text)))
        self.expect("rbrace", "'}'")

    def build(self) -> ModelBundle:
        model = StaticModel(tuple(self.thimacs), tuple(self.flows),
                            tuple(self.triggers), self.name)
        priority = tuple(self.priority)
        if not self.saw_priority:
            priority = tuple(e.id for e in self.events)
        return ModelBundle(model, tuple(self.events), tuple(self.behavior),
                           priority, self.initial, tuple(self.schedule))


def parse(text: str, file: str = "<input>") -> ParseResult:
    """Parse a document and validate the result.

    The bundle is present exactly when no error-severity diagnostics
    were produced; warnings alone do not suppress it.
    """
    tokens, diags = _lex(text, file)
    parser = _Parser(tokens, file, diags)
    try:
        parser.parse_document()
    except _ParseFailure:
        return ParseResult(None, diags)
    if diags:
        return ParseResult(None, diags)
    bundle = parser.build()
    diags.extend(validate_model(bundle, file, parser.positions))
    if has_errors(diags):
        return ParseResult(None, diags)
    return ParseResult(bundle, diags)


def parse_file(path) -> ParseResult:
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read(), str(path))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _thimac_block(t: Thimac) -> str:
    members = []
    if not t.is_store:
        acts = ", ".join(a.value for a in ACTION_ORDER if a in t.actions)
        members.append(f"  actions: {acts}")
    if t.kind == ThimacKind.COUNTER:
        members.append(f"  range {t.lo} .. {t.hi} init {t.init}")
    elif t.kind == ThimacKind.FLAG:
        members.append(f"  init {'true' if t.init else 'false'}")
    elif t.kind == ThimacKind.TIMER:
        members.append(f"  duration {t.duration}")
    body = "\n".join(members)
    if body:
        return f"thimac {t.id} kind {t.kind.value} {{\n{body}\n}}"
    return f"thimac {t.id} kind {t.kind.value} {{ }}"


def _trigger_line(t: TriggerEdge) -> str:
    line = f"trigger {t.src} -> {t.dst}"
    if t.effect is not None:
        line += f" effect {t.effect.value}"
    if t.guard:
        line += f" when {guard_text(t.guard)}"
    return line


def _event_line(e: Event) -> str:
    line = f"event {e.id} {_escape(e.label)}"
    if e.bookkeeping:
        line += " bookkeeping"
    if e.displayed:
        line += " displayed"
    refs = ", ".join(str(r) for r in sorted(e.region, key=str))
    return f"{line} region {{ {refs} }}"


def serialize(bundle: ModelBundle) -> str:
    """Emit the canonical text form of a bundle."""
    b = canonicalize(bundle)
    parts = [f"model {b.model.name}" if b.model.name else "model unnamed"]
    for t in b.model.thimacs:
        parts.append(_thimac_block(t))
    for f in b.model.flows:
        parts.append(f"flow {f.src} -> {f.dst}")
    for t in b.model.triggers:
        parts.append(_trigger_line(t))
    for e in b.events:
        parts.append(_event_line(e))
    if b.behavior:
        lines = "\n".join(f"  {src} -> {dst};" for src, dst in b.behavior)
        parts.append(f"behavior {{\n{lines}\n}}")
    if b.priority:
        parts.append(f"priority [ {', '.join(b.priority)} ]")
    if b.initial:
        lines = []
        for tid, value in b.initial.items():
            if isinstance(value, bool):
                text = "true" if value else "false"
            else:
                text = str(value)
            lines.append(f"  {tid} = {text};")
        parts.append("initial {\n" + "\n".join(lines) + "\n}")
    if b.schedule:
        lines = "\n".join(
            f"  at {inj.tick} inject {inj.thimac} {_escape(inj.label)};"
            for inj in b.schedule
        )
        parts.append(f"schedule {{\n{lines}\n}}")
    return "\n\n".join(parts) + "\n"
