"""Reference interpreter and meta-theory workbench for a small calculus of
asynchronous observables: direct-style streams built with rasync/await/yield
on top of a class-based imperative core.

The pipeline is parse -> typecheck -> (optional ANF normalization) -> run.
Running is small-step over immutable machine states, so schedules can be
replayed, explored exhaustively, and checked step-by-step against the
well-formedness, typing, and heap-evolution invariants.
"""
from .anf import is_anf_program, normalize_expr, normalize_program
from .conformance import verify_program, verify_run
from .errors import Diagnostic, RayError
from .explorer import ExploreResult, explore
from .parser import parse_expr, parse_program
from .printer import pp_expr, pp_program, pretty_print
from .progen import GenConfig, generate_program, shrink_program
from .semantics import (
    DEADLOCK, FINISHED, MUTATIONS, STEP_LIMIT, STUCK, Machine, RunResult,
    run_machine, run_program,
)
from .typecheck import publish_result_program, typecheck_program

__version__ = "0.1.0"

__all__ = [
    "DEADLOCK",
    "Diagnostic",
    "ExploreResult",
    "FINISHED",
    "GenConfig",
    "MUTATIONS",
    "Machine",
    "RayError",
    "RunResult",
    "STEP_LIMIT",
    "STUCK",
    "__version__",
    "explore",
    "generate_program",
    "is_anf_program",
    "normalize_expr",
    "normalize_program",
    "parse_expr",
    "parse_program",
    "pp_expr",
    "pp_program",
    "pretty_print",
    "publish_result_program",
    "run_machine",
    "run_program",
    "shrink_program",
    "typecheck_program",
    "verify_program",
    "verify_run",
]
