"""Command-line front end.

    tm validate MODEL.tm
    tm run MODEL.tm [--ticks N] [--displayed]
    tm enumerate NAME=lo..hi NAME=a,b,c ...
    tm coverage MODEL.tm
    tm import-fsm MACHINE.fsm [--out MODEL.tm]
    tm project MACHINE.fsm MODEL.tm --mapping MAP.txt
    tm conform MODEL.tm TRACE.txt
    tm export-dot MODEL.tm [--layer static|events|behavior] [--out FILE]

Exit codes: 0 success, 1 model or trace error, 2 usage or unreadable
input.  Diagnostics go to stderr, one per line; results go to stdout.
"""

from __future__ import annotations

import argparse
import sys

from . import dsl
from .behavior import (
    ComponentStateDecl,
    behavior_graph,
    check_conformance,
    enumerate_states,
    event_coverage,
)
from .dot import LAYERS, export_dot
from .engine import (
    filter_displayed,
    format_trace_records,
    parse_trace_records,
    run,
)
from .fsmbridge import (
    fsm_to_tm,
    format_projection,
    parse_fsm,
    parse_state_mapping,
    project_states,
)
from .model import SEV_ERROR, TmError


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as handle:
        return handle.read()


def _emit(text: str, out) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _load_bundle(path: str):
    result = dsl.parse(_read(path), file=path)
    for d in result.diagnostics:
        print(d, file=sys.stderr)
    return result.bundle


def cmd_validate(args) -> int:
    return 0 if _load_bundle(args.model) is not None else 1


def cmd_run(args) -> int:
    bundle = _load_bundle(args.model)
    if bundle is None:
        return 1
    _cfg, trace = run(bundle, max_ticks=args.ticks)
    if args.displayed:
        trace = filter_displayed(bundle, trace)
    sys.stdout.write(format_trace_records(trace))
    return 0


def _parse_domain(parser, spec: str) -> ComponentStateDecl:
    name, sep, body = spec.partition("=")
    if not sep or not name or not body:
        parser.error(f"bad component spec {spec!r}; expected NAME=lo..hi "
                     f"or NAME=a,b,c")
    if ".." in body:
        lo_text, _, hi_text = body.partition("..")
        try:
            lo, hi = int(lo_text), int(hi_text)
        except ValueError:
            parser.error(f"bad integer range in {spec!r}")
        if hi < lo:
            parser.error(f"empty range in {spec!r}")
        return ComponentStateDecl(name, tuple(range(lo, hi + 1)))
    values = tuple(v.strip() for v in body.split(",") if v.strip())
    if not values:
        parser.error(f"empty domain in {spec!r}")
    return ComponentStateDecl(name, values)


def cmd_enumerate(args) -> int:
    decls = [_parse_domain(args.parser, spec) for spec in args.components]
    count, _states = enumerate_states(decls)
    print(f"{count} states")
    return 0


def cmd_coverage(args) -> int:
    bundle = _load_bundle(args.model)
    if bundle is None:
        return 1
    covered, uncovered = event_coverage(bundle)
    print(f"covered: {len(covered)}")
    print(f"uncovered: {len(uncovered)}")
    for ref in sorted(uncovered, key=str):
        print(f"  {ref}")
    return 0


def cmd_import_fsm(args) -> int:
    result = parse_fsm(_read(args.machine), file=args.machine)
    for d in result.diagnostics:
        print(d, file=sys.stderr)
    if result.spec is None:
        return 1
    _emit(dsl.serialize(fsm_to_tm(result.spec)), args.out)
    return 0


def cmd_project(args) -> int:
    result = parse_fsm(_read(args.machine), file=args.machine)
    for d in result.diagnostics:
        print(d, file=sys.stderr)
    if result.spec is None:
        return 1
    bundle = _load_bundle(args.model)
    if bundle is None:
        return 1
    mapping = parse_state_mapping(_read(args.mapping), file=args.mapping)
    sys.stdout.write(format_projection(
        project_states(result.spec, bundle, mapping)))
    return 0


def cmd_conform(args) -> int:
    bundle = _load_bundle(args.model)
    if bundle is None:
        return 1
    trace = parse_trace_records(_read(args.trace))
    violations = check_conformance(trace, behavior_graph(bundle))
    for v in violations:
        print(v)
    if violations:
        print(f"{len(violations)} violations")
        return 1
    print("conforms")
    return 0


def cmd_export_dot(args) -> int:
    bundle = _load_bundle(args.model)
    if bundle is None:
        return 1
    _emit(export_dot(bundle, layer=args.layer), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tm", description="Thing-machine modeling tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file")
    p.add_argument("model")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="execute a model and print its trace")
    p.add_argument("model")
    p.add_argument("--ticks", type=int, default=None, metavar="N",
                   help="stop after N ticks (default: run to quiescence)")
    p.add_argument("--displayed", action="store_true",
                   help="hide bookkeeping instances")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("enumerate",
                       help="count a declared component state space")
    p.add_argument("components", nargs="+", metavar="NAME=DOMAIN",
                   help="e.g. B1=0..3 or M1=idle,busy,blocked")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("coverage",
                       help="report actions no event region touches")
    p.add_argument("model")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("import-fsm",
                       help="translate a state machine file to a model")
    p.add_argument("machine")
    p.add_argument("--out", default=None, metavar="PATH")
    p.set_defaults(func=cmd_import_fsm)

    p = sub.add_parser("project",
                       help="judge a state-to-region mapping")
    p.add_argument("machine")
    p.add_argument("model")
    p.add_argument("--mapping", required=True, metavar="PATH")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("conform",
                       help="check a saved trace against the chronology")
    p.add_argument("model")
    p.add_argument("trace")
    p.set_defaults(func=cmd_conform)

    p = sub.add_parser("export-dot", help="render the model for graphviz")
    p.add_argument("model")
    p.add_argument("--layer", choices=LAYERS, default="static")
    p.add_argument("--out", default=None, metavar="PATH")
    p.set_defaults(func=cmd_export_dot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.parser = parser
    try:
        return args.func(args)
    except TmError as err:
        print(f"error: {err.code}: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
