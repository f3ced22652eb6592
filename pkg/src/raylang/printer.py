"""Pretty-printer.

The round-trip law `parse(pretty(p)) == p` (structural equality, positions
ignored) holds for every parseable program; tests enforce it on the corpus
and on generated programs.  Sequencing sugar is re-emitted: a let whose
binder is `_` prints as `rhs; body`.
"""
from __future__ import annotations

from .ast import (
    Assign, Await, BoolLit, ClassDecl, Expr, If, IntLit, Invoke, Let,
    MethodDecl, New, NullLit, PrimOp, Program, RAsync, Select, Type, Var,
    While, Yield,
)

# precedence levels, loosest to tightest; an operand position demanding
# level L parenthesizes any expression whose own level is below L
_LET, _CONTROL, _CMP, _ADD, _UNARY, _POSTFIX, _PRIMARY = range(7)


def _level(e: Expr) -> int:
    match e:
        case Let():
            return _LET
        case If() | While() | RAsync() | Await() | Yield() | New() | Assign():
            return _CONTROL
        case PrimOp(op=op):
            if op in ("<", "=="):
                return _CMP
            if op in ("+", "-"):
                return _ADD
            if op == "!":
                return _UNARY
            return _PRIMARY  # isSome(x) / get(x) read like calls
        case Select() | Invoke():
            return _POSTFIX
        case _:
            return _PRIMARY


def _pad(indent: int) -> str:
    return "  " * indent


def pp_type(t: Type) -> str:
    return str(t)


def pp_expr(e: Expr, level: int = _LET, indent: int = 0) -> str:
    s = _render(e, indent)
    if _level(e) < level:
        return f"({s})"
    return s


def _block(e: Expr, indent: int) -> str:
    inner = pp_expr(e, _LET, indent + 1)
    return "{\n" + _pad(indent + 1) + inner + "\n" + _pad(indent) + "}"


def _render(e: Expr, ind: int) -> str:
    match e:
        case BoolLit(v):
            return "true" if v else "false"
        case IntLit(v):
            return str(v)
        case NullLit():
            return "null"
        case Var(name):
            return name
        case Let("_", rhs, body):
            return f"{pp_expr(rhs, _CONTROL, ind)};\n{_pad(ind)}{pp_expr(body, _LET, ind)}"
        case Let(name, rhs, body):
            # a let-rhs that is itself a let must be parenthesized to reparse
            rhs_s = pp_expr(rhs, _CONTROL, ind) if not isinstance(rhs, Let) else f"({pp_expr(rhs, _LET, ind)})"
            return f"let {name} = {rhs_s} in\n{_pad(ind)}{pp_expr(body, _LET, ind)}"
        case If(c, t, f):
            return (
                f"if ({pp_expr(c, _LET, ind)}) {_block(t, ind)} else {_block(f, ind)}"
            )
        case While(c, b):
            return f"while ({pp_expr(c, _LET, ind)}) {_block(b, ind)}"
        case Select(r, fld):
            return f"{pp_expr(r, _POSTFIX, ind)}.{fld}"
        case Assign(r, fld, v):
            return f"{pp_expr(r, _POSTFIX, ind)}.{fld} = {pp_expr(v, _CONTROL, ind)}"
        case Invoke(r, m, args):
            inner = ", ".join(pp_expr(a, _LET, ind) for a in args)
            return f"{pp_expr(r, _POSTFIX, ind)}.{m}({inner})"
        case New(cls, args):
            inner = ", ".join(pp_expr(a, _LET, ind) for a in args)
            return f"new {cls}({inner})"
        case RAsync(elem, sources, body):
            inner = ", ".join(pp_expr(s, _LET, ind) for s in sources)
            return f"rasync[{pp_type(elem)}]({inner}) {_block(body, ind)}"
        case Await(s):
            return f"await({pp_expr(s, _LET, ind)})"
        case Yield(v):
            return f"yield({pp_expr(v, _LET, ind)})"
        case PrimOp("!", (a,)):
            return f"!{pp_expr(a, _UNARY, ind)}"
        case PrimOp(op, (a,)) if op in ("isSome", "get"):
            return f"{op}({pp_expr(a, _LET, ind)})"
        case PrimOp(op, (l, r)) if op in ("+", "-"):
            return f"{pp_expr(l, _ADD, ind)} {op} {pp_expr(r, _UNARY, ind)}"
        case PrimOp(op, (l, r)):
            return f"{pp_expr(l, _ADD, ind)} {op} {pp_expr(r, _ADD, ind)}"
        case _:
            raise AssertionError(f"unprintable expression {e!r}")


def pp_method(m: MethodDecl, ind: int) -> str:
    params = ", ".join(f"{p.name}: {pp_type(p.type)}" for p in m.params)
    body = pp_expr(m.body, _LET, ind + 2)
    return f"{_pad(ind)}def {m.name}({params}): {pp_type(m.ret)} =\n{_pad(ind + 2)}{body}"


def pp_class(c: ClassDecl) -> str:
    lines = [f"class {c.name} {{"]
    for f in c.fields:
        lines.append(f"  var {f.name}: {pp_type(f.type)}")
    for m in c.methods:
        lines.append(pp_method(m, 1))
    lines.append("}")
    return "\n".join(lines)


def pp_program(p: Program) -> str:
    parts = [pp_class(c) for c in p.classes]
    parts.append(pp_expr(p.main, _LET, 0))
    return "\n\n".join(parts) + "\n"


def pretty_print(p: Program) -> str:
    return pp_program(p)
