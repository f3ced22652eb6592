"""Abstract syntax for the observable calculus.

Every node is a frozen dataclass so expressions can live inside machine
states and be hashed for state-space memoization.  Source positions are
carried for diagnostics but excluded from equality, so a parsed program and
its pretty-printed reparse compare equal structurally.

Variable positions (conditions, receivers, arguments, await/yield payloads,
rasync sources) hold full expressions as parsed; the ANF pass narrows them
to `Var` nodes, which is what the machine and the type checker require.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

Pos = "tuple[int, int] | None"


def _pos():
    return dc_field(default=None, compare=False)


# ---------------------------------------------------------------------------
# types

@dataclass(frozen=True)
class Type:
    pass


@dataclass(frozen=True)
class BoolType(Type):
    def __str__(self) -> str:
        return "Boolean"


@dataclass(frozen=True)
class IntType(Type):
    def __str__(self) -> str:
        return "Int"


@dataclass(frozen=True)
class ClassType(Type):
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class ObsType(Type):
    elem: Type

    def __str__(self) -> str:
        return f"Observable[{self.elem}]"


@dataclass(frozen=True)
class OptionType(Type):
    """Internal type of awaited values; has no concrete syntax."""

    elem: Type

    def __str__(self) -> str:
        return f"Option[{self.elem}]"


@dataclass(frozen=True)
class NullType(Type):
    """Internal type of `null`, compatible with any reference or option type."""

    def __str__(self) -> str:
        return "Null"


BOOL = BoolType()
INT = IntType()
NULL_T = NullType()


def is_ref_like(t: Type) -> bool:
    return isinstance(t, (ClassType, ObsType, OptionType, NullType))


# ---------------------------------------------------------------------------
# expressions

@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class BoolLit(Expr):
    value: bool
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class IntLit(Expr):
    value: int
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class NullLit(Expr):
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class Var(Expr):
    name: str
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class Let(Expr):
    name: str
    rhs: Expr
    body: Expr
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class If(Expr):
    cond: Expr
    then: Expr
    els: Expr
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class While(Expr):
    cond: Expr
    body: Expr
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class Select(Expr):
    recv: Expr
    field: str
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class Assign(Expr):
    recv: Expr
    field: str
    value: Expr
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class Invoke(Expr):
    recv: Expr
    method: str
    args: tuple[Expr, ...]
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class New(Expr):
    cls: str
    args: tuple[Expr, ...]
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class RAsync(Expr):
    """rasync[elem](sources){ body }.

    When the whole form is the rhs of a `let x = ... in t`, the binder x is
    in scope inside `body` as well (bound to the new observable), which is
    how a stream can wire up consumers of itself before it produces.
    """

    elem: Type
    sources: tuple[Expr, ...]
    body: Expr
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class Await(Expr):
    source: Expr
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class Yield(Expr):
    value: Expr
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class PrimOp(Expr):
    """Built-in operator application: + - < == ! isSome get."""

    op: str
    args: tuple[Expr, ...]
    pos: tuple[int, int] | None = _pos()


PRIM_OPS = ("+", "-", "<", "==", "!", "isSome", "get")


# ---------------------------------------------------------------------------
# declarations

@dataclass(frozen=True)
class FieldDecl:
    name: str
    type: Type
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class Param:
    name: str
    type: Type
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class MethodDecl:
    name: str
    params: tuple[Param, ...]
    ret: Type
    body: Expr
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class ClassDecl:
    name: str
    fields: tuple[FieldDecl, ...]
    methods: tuple[MethodDecl, ...]
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class Program:
    classes: tuple[ClassDecl, ...]
    main: Expr


# ---------------------------------------------------------------------------
# structural helpers

def is_atom(e: Expr) -> bool:
    return isinstance(e, (Var, IntLit, BoolLit, NullLit))


def children(e: Expr) -> tuple[Expr, ...]:
    match e:
        case Let(_, rhs, body):
            return (rhs, body)
        case If(c, t, f):
            return (c, t, f)
        case While(c, b):
            return (c, b)
        case Select(r, _):
            return (r,)
        case Assign(r, _, v):
            return (r, v)
        case Invoke(r, _, args):
            return (r, *args)
        case New(_, args):
            return tuple(args)
        case RAsync(_, sources, body):
            return (*sources, body)
        case Await(s):
            return (s,)
        case Yield(v):
            return (v,)
        case PrimOp(_, args):
            return tuple(args)
        case _:
            return ()


def iter_exprs(e: Expr):
    """Yield e and every descendant expression, preorder."""
    stack = [e]
    while stack:
        cur = stack.pop()
        yield cur
        stack.extend(reversed(children(cur)))


def free_vars(e: Expr) -> frozenset[str]:
    match e:
        case Var(name):
            return frozenset((name,))
        case Let(name, RAsync() as rhs, body):
            # the binder is visible inside the rasync body (self reference)
            inner = free_vars(rhs.body) - {name}
            srcs = frozenset().union(*(free_vars(s) for s in rhs.sources)) if rhs.sources else frozenset()
            return srcs | inner | (free_vars(body) - {name})
        case Let(name, rhs, body):
            return free_vars(rhs) | (free_vars(body) - {name})
        case _:
            out: frozenset[str] = frozenset()
            for c in children(e):
                out = out | free_vars(c)
            return out


def rename_var(e: Expr, old: str, new: str) -> Expr:
    """Rename free occurrences of `old` to `new`; stops at rebinding lets."""
    match e:
        case Var(name, pos):
            return Var(new, pos) if name == old else e
        case Let(name, rhs, body, pos):
            if isinstance(rhs, RAsync) and name == old:
                # self binder shadows old in both the rasync body and the let body
                new_sources = tuple(rename_var(s, old, new) for s in rhs.sources)
                return Let(name, RAsync(rhs.elem, new_sources, rhs.body, rhs.pos), body, pos)
            new_rhs = rename_var(rhs, old, new)
            new_body = body if name == old else rename_var(body, old, new)
            return Let(name, new_rhs, new_body, pos)
        case If(c, t, f, pos):
            return If(rename_var(c, old, new), rename_var(t, old, new), rename_var(f, old, new), pos)
        case While(c, b, pos):
            return While(rename_var(c, old, new), rename_var(b, old, new), pos)
        case Select(r, fld, pos):
            return Select(rename_var(r, old, new), fld, pos)
        case Assign(r, fld, v, pos):
            return Assign(rename_var(r, old, new), fld, rename_var(v, old, new), pos)
        case Invoke(r, m, args, pos):
            return Invoke(rename_var(r, old, new), m, tuple(rename_var(a, old, new) for a in args), pos)
        case New(cls, args, pos):
            return New(cls, tuple(rename_var(a, old, new) for a in args), pos)
        case RAsync(elem, sources, body, pos):
            return RAsync(elem, tuple(rename_var(s, old, new) for s in sources), rename_var(body, old, new), pos)
        case Await(s, pos):
            return Await(rename_var(s, old, new), pos)
        case Yield(v, pos):
            return Yield(rename_var(v, old, new), pos)
        case PrimOp(op, args, pos):
            return PrimOp(op, tuple(rename_var(a, old, new) for a in args), pos)
        case _:
            return e


def all_names(p: Program) -> frozenset[str]:
    """Every identifier used anywhere; the freshener avoids these."""
    names: set[str] = set()

    def scan_expr(e: Expr):
        for sub in iter_exprs(e):
            match sub:
                case Var(name):
                    names.add(name)
                case Let(name, _, _):
                    names.add(name)
                case _:
                    pass

    for c in p.classes:
        names.add(c.name)
        for f in c.fields:
            names.add(f.name)
        for m in c.methods:
            names.add(m.name)
            for prm in m.params:
                names.add(prm.name)
            scan_expr(m.body)
    scan_expr(p.main)
    return frozenset(names)
