"""Command-line driver: check, run, explore, verify, gen.

Exit codes: 0 success, 1 program errors (syntax, type, runtime stuck),
2 verification or protocol violations, 3 usage errors.  Diagnostics go to
stderr as ``file:line:col: kind: message``; machine output (``--json``) goes
to stdout with sorted keys, so identical argv and seeds give byte-identical
JSON apart from the ``version`` field.  Set ``RAY_COLOR=0`` to disable ANSI
color in pretty output.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .conformance import verify_program, verify_run
from .errors import Diagnostic, RayError, to_diagnostic
from .explorer import event_projections, explore
from .parser import parse_program
from .printer import pp_program
from .progen import GenConfig, generate_program
from .semantics import MUTATIONS, STUCK, RunResult, run_program
from .typecheck import publish_result_program, typecheck_program

VERSION = "0.1.0"

EXIT_OK = 0
EXIT_PROGRAM = 1
EXIT_VIOLATION = 2
EXIT_USAGE = 3


class _ArgumentParser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; the contract here reserves 2 for
    verification violations, so usage errors are remapped to 3."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> _ArgumentParser:
    top = _ArgumentParser(prog="ray", description=__doc__.splitlines()[0])
    top.add_argument("--version", action="version", version=f"ray {VERSION}")
    sub = top.add_subparsers(dest="command", required=True)

    def add_input(p):
        p.add_argument("file", help="program file (.ray), or - for stdin")
        p.add_argument("--strict-syntax", action="store_true",
                       help="reject primitive operators (+ - < == ! isSome get)")
        p.add_argument("--json", action="store_true", help="machine-readable output")

    check = sub.add_parser("check", help="parse and typecheck")
    add_input(check)

    run = sub.add_parser("run", help="run one schedule")
    add_input(run)
    run.add_argument("--policy", choices=("rr", "random"), default="rr")
    run.add_argument("--seed", type=int, default=0, help="random-policy seed")
    run.add_argument("--max-steps", type=int, default=10000)
    run.add_argument("--check", action="store_true",
                     help="verify well-formedness, typing, and heap evolution at every step")
    run.add_argument("--strict-await", action="store_true",
                     help="park awaits on a closed empty stream instead of delivering None")
    run.add_argument("--strict-evolution", action="store_true",
                     help="with --check: use the literal heap-evolution clause")
    run.add_argument("--publish-result", action="store_true",
                     help="streams publish their body's final value before closing")
    run.add_argument("--mutate", choices=MUTATIONS, metavar="NAME",
                     help="run a deliberately broken interpreter variant")
    run.add_argument("--trace", metavar="OUT.JSONL",
                     help="write the step trace as JSON lines")
    run.add_argument("--pretty", action="store_true",
                     help="render the trace with rule names and heap deltas")

    exp = sub.add_parser("explore", help="enumerate all schedules")
    add_input(exp)
    exp.add_argument("--max-depth", type=int, default=200)
    exp.add_argument("--max-states", type=int, default=20000)
    exp.add_argument("--check", action="store_true",
                     help="run conformance checks on every explored edge")
    exp.add_argument("--strict-await", action="store_true")
    exp.add_argument("--mutate", choices=MUTATIONS, metavar="NAME")

    ver = sub.add_parser("verify", help="checked runs over many schedules")
    add_input(ver)
    ver.add_argument("--seeds", type=int, default=10,
                     help="number of random schedules besides round-robin")
    ver.add_argument("--policy", choices=("rr", "random"),
                     help="verify a single schedule instead of a sweep")
    ver.add_argument("--seed", type=int, default=0, help="seed for --policy random")
    ver.add_argument("--max-steps", type=int, default=10000)
    ver.add_argument("--strict-await", action="store_true")
    ver.add_argument("--strict-evolution", action="store_true",
                     help="use the literal heap-evolution clause (flags queue "
                          "consumption on streams that still have parked waiters)")
    ver.add_argument("--mutate", choices=MUTATIONS, metavar="NAME")

    gen = sub.add_parser("gen", help="generate a well-typed random program")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", metavar="FILE.RAY", help="write here instead of stdout")
    gen.add_argument("--may-diverge", action="store_true",
                     help="allow unbounded loops (programs may not terminate)")
    return top


# ------------------------------------------------------------------ helpers

def _color_enabled() -> bool:
    if os.environ.get("RAY_COLOR") == "0":
        return False
    return sys.stdout.isatty()


def _emit_json(doc: dict) -> None:
    doc = dict(doc)
    doc["version"] = VERSION
    sys.stdout.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _diag_json(d: Diagnostic) -> dict:
    line, col = d.pos if d.pos is not None else (0, 0)
    return {"kind": d.kind, "message": d.message, "line": line, "col": col}


def _read_source(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _front_end(args) -> "tuple":
    """Parse and typecheck args.file; (program, diagnostics)."""
    text = _read_source(args.file)
    try:
        program = parse_program(text, strict_syntax=args.strict_syntax)
    except RayError as err:
        return None, [to_diagnostic(err)]
    return program, typecheck_program(program)


def _print_diags(diags, filename: str) -> None:
    for d in diags:
        sys.stderr.write(d.render(filename) + "\n")


def _halt_value(res: RunResult) -> str | None:
    """The main stack finishes with a single E-Halt whose note pins the
    rendered final value."""
    for t in res.trace:
        if t.rule == "E-Halt":
            return t.note.removeprefix("halt ")
    return None


def _projection_doc(events) -> dict:
    emitted, received = event_projections(events)
    return {
        "emitted": {f"o{oid}": list(seq) for oid, seq in emitted},
        "received": {f"o{c}<-o{s}": list(seq) for (c, s), seq in received},
    }


def _render_trace(res: RunResult) -> None:
    color = _color_enabled()
    cyan, dim, reset = ("\x1b[36m", "\x1b[2m", "\x1b[0m") if color else ("", "", "")
    for t in res.trace:
        line = f"[{t.step:4}] s{t.stack} {cyan}{t.rule:<16}{reset} {t.note}"
        if t.heap_delta:
            line += f"  {dim}| {'; '.join(t.heap_delta)}{reset}"
        print(line)


# ----------------------------------------------------------------- commands

def cmd_check(args) -> int:
    program, diags = _front_end(args)
    if args.json:
        _emit_json({
            "command": "check",
            "file": args.file,
            "ok": not diags,
            "errors": [_diag_json(d) for d in diags],
        })
    else:
        _print_diags(diags, args.file)
    return EXIT_OK if not diags else EXIT_PROGRAM


def cmd_run(args) -> int:
    program, diags = _front_end(args)
    if diags:
        _print_diags(diags, args.file)
        return EXIT_PROGRAM
    if args.publish_result:
        program = publish_result_program(program)
    res = run_program(
        program,
        policy=args.policy,
        seed=args.seed,
        max_steps=args.max_steps,
        strict_await=args.strict_await,
        mutation=args.mutate,
    )
    violations = None
    if args.check:
        report = verify_run(
            program,
            policy=args.policy,
            seed=args.seed,
            max_steps=args.max_steps,
            strict_await=args.strict_await,
            strict_evolution=args.strict_evolution,
            mutation=args.mutate,
        )
        violations = report["violations"]

    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for t in res.trace:
                fh.write(json.dumps(t.json(), sort_keys=True) + "\n")

    doc = {
        "command": "run",
        "file": args.file,
        "policy": args.policy,
        "seed": args.seed,
        "outcome": res.outcome,
        "steps": res.steps,
        "result": _halt_value(res),
        **_projection_doc(res.events),
    }
    if res.error is not None:
        doc["error"] = res.error
        doc["errorKind"] = res.error_kind
    if violations is not None:
        doc["violations"] = violations
        doc["ok"] = not violations

    if args.json:
        _emit_json(doc)
    else:
        if args.pretty:
            _render_trace(res)
        print(f"outcome: {res.outcome}")
        print(f"steps: {res.steps}")
        if doc["result"] is not None:
            print(f"result: {doc['result']}")
        for oid, seq in sorted(doc["emitted"].items()):
            print(f"emitted {oid}: {seq}")
        for key, seq in sorted(doc["received"].items()):
            print(f"received {key}: {seq}")
        if violations:
            print(f"violations: {len(violations)}")

    if res.outcome == STUCK:
        sys.stderr.write(f"{args.file}: {res.error_kind}: {res.error}\n")
        return EXIT_PROGRAM
    if violations:
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_explore(args) -> int:
    program, diags = _front_end(args)
    if diags:
        _print_diags(diags, args.file)
        return EXIT_PROGRAM
    res = explore(
        program,
        max_depth=args.max_depth,
        max_states=args.max_states,
        strict_await=args.strict_await,
        mutation=args.mutate,
        check_wf=args.check,
    )
    doc = {"command": "explore", "file": args.file, **res.json()}
    if args.json:
        _emit_json(doc)
    else:
        print(f"states: {res.states}")
        print(f"edges: {res.edges}")
        for outcome, n in sorted(res.outcomes().items()):
            print(f"outcome {outcome}: {n} terminal(s)")
        for t in res.terminals:
            print(f"  {t.json()}")
        for v in res.protocol_violations:
            print(f"protocol violation: {v}")
        for v in res.conformance_violations:
            print(f"conformance violation: {v}")
    if res.truncated is not None:
        sys.stderr.write(f"{args.file}: warning: exploration truncated by {res.truncated} limit\n")
    return EXIT_OK if res.ok else EXIT_VIOLATION


def cmd_verify(args) -> int:
    program, diags = _front_end(args)
    if diags:
        _print_diags(diags, args.file)
        return EXIT_PROGRAM
    if args.policy is not None:
        report = verify_run(
            program,
            policy=args.policy,
            seed=args.seed,
            max_steps=args.max_steps,
            strict_await=args.strict_await,
            strict_evolution=args.strict_evolution,
            mutation=args.mutate,
        )
        ok = not report["violations"]
        doc = {"command": "verify", "file": args.file, **report}
        summary = (f"policy {report['policy']} seed {report['seed']}: "
                   f"{report['outcome']} in {report['steps']} steps, "
                   f"{len(report['violations'])} violation(s)")
    else:
        report = verify_program(
            program,
            policies=args.seeds,
            max_steps=args.max_steps,
            strict_await=args.strict_await,
            strict_evolution=args.strict_evolution,
            mutation=args.mutate,
        )
        ok = report["ok"]
        doc = {"command": "verify", "file": args.file, **report}
        summary = (f"{len(report['runs'])} runs, "
                   f"{report['violationCount']} violation(s)")
    if args.json:
        _emit_json(doc)
    else:
        print(summary)
        for rule, n in sorted(doc["ruleCounts"].items()):
            print(f"  {rule}: {n}")
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_gen(args) -> int:
    if args.seed < 0:
        sys.stderr.write("ray gen: error: --seed must be non-negative\n")
        return EXIT_USAGE
    cfg = GenConfig(seed=args.seed, may_diverge=args.may_diverge)
    text = pp_program(generate_program(cfg))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


_COMMANDS = {
    "check": cmd_check,
    "run": cmd_run,
    "explore": cmd_explore,
    "verify": cmd_verify,
    "gen": cmd_gen,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as ex:
        return int(ex.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except OSError as err:
        target = getattr(err, "filename", None) or getattr(args, "file", "")
        sys.stderr.write(f"ray {args.command}: error: {target}: {err.strerror}\n")
        return EXIT_USAGE
    except RayError as err:
        sys.stderr.write(to_diagnostic(err).render(getattr(args, "file", "<input>")) + "\n")
        return EXIT_PROGRAM


if __name__ == "__main__":
    sys.exit(main())
