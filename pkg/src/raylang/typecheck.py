"""Type checker: class table construction and expression typing.

Judgments carry an environment Gamma (variable types) and Delta (a stack of
yield element types; rasync pushes one entry for its body).  Method bodies
and main are typed with an empty Delta, so yield is legal only lexically
inside an rasync body.  await types to Option of the stream's element type;
isSome/get eliminate options.  There is no subtyping; `null` types to an
internal bottom-ish NullType compatible with any reference or option type.

`typecheck_program` aggregates diagnostics across the class table, every
method, and main rather than stopping at the first error.

A second mode serves the runtime conformance checks: with `residual=True`
on the environment, member access on a null-typed receiver types to an
internal FaultType instead of erroring.  A frame whose next move is a null
fault is still a well-typed frame; the fault surfaces as a runtime error,
not a typing violation.  FaultType is accepted everywhere and never appears
in source typing.
"""
from __future__ import annotations

from dataclasses import dataclass

from .ast import (
    BOOL, INT, NULL_T, Assign, Await, BoolLit, BoolType, ClassDecl, ClassType,
    Expr, If, IntLit, IntType, Invoke, Let, MethodDecl, New, NullLit, NullType,
    ObsType, OptionType, Param, PrimOp, Program, RAsync, Select, Type, Var,
    While, Yield, is_ref_like,
)
from .errors import (
    Diagnostic, DuplicateNameError, RayError, TypeMismatchError,
    UnboundVariableError, UnknownMemberError, UnknownTypeError,
    YieldOutsideRasyncError, to_diagnostic,
)


@dataclass(frozen=True)
class ClassTable:
    classes: "tuple[ClassDecl, ...]"

    def lookup(self, name: str) -> ClassDecl | None:
        for c in self.classes:
            if c.name == name:
                return c
        return None

    def has_class(self, name: str) -> bool:
        return self.lookup(name) is not None

    def fields(self, cname: str) -> tuple:
        c = self.lookup(cname)
        return c.fields if c else ()

    def ftype(self, cname: str, fname: str, pos=None) -> Type:
        for f in self.fields(cname):
            if f.name == fname:
                return f.type
        raise UnknownMemberError(f"class {cname} has no field {fname}", pos)

    def method(self, cname: str, mname: str, pos=None) -> MethodDecl:
        c = self.lookup(cname)
        if c is not None:
            for m in c.methods:
                if m.name == mname:
                    return m
        raise UnknownMemberError(f"class {cname} has no method {mname}", pos)

    def mtype(self, cname: str, mname: str, pos=None) -> tuple[tuple[Type, ...], Type]:
        m = self.method(cname, mname, pos)
        return tuple(p.type for p in m.params), m.ret

    def mbody(self, cname: str, mname: str, pos=None) -> tuple[tuple[Param, ...], Expr]:
        m = self.method(cname, mname, pos)
        return m.params, m.body


def build_class_table(p: Program) -> tuple[ClassTable, list[Diagnostic]]:
    diags: list[Diagnostic] = []
    names: set[str] = set()
    for c in p.classes:
        if c.name in names:
            diags.append(Diagnostic("duplicate name", f"class {c.name} declared twice", c.pos))
        names.add(c.name)

    def validate(t: Type, pos) -> None:
        match t:
            case BoolType() | IntType():
                pass
            case ClassType(name):
                if name not in names:
                    diags.append(Diagnostic("unknown type", f"unknown type {name}", pos))
            case ObsType(elem):
                validate(elem, pos)
            case _:
                diags.append(Diagnostic("unknown type", f"type {t} is not declarable", pos))

    for c in p.classes:
        fnames: set[str] = set()
        for f in c.fields:
            if f.name in fnames:
                diags.append(Diagnostic("duplicate name", f"field {f.name} declared twice", f.pos))
            fnames.add(f.name)
            validate(f.type, f.pos)
        mnames: set[str] = set()
        for m in c.methods:
            if m.name in mnames:
                diags.append(Diagnostic("duplicate name", f"method {m.name} declared twice", m.pos))
            mnames.add(m.name)
            pnames: set[str] = set()
            for prm in m.params:
                if prm.name in pnames or prm.name == "this":
                    diags.append(
                        Diagnostic("duplicate name", f"parameter {prm.name} declared twice", prm.pos)
                    )
                pnames.add(prm.name)
                validate(prm.type, prm.pos)
            validate(m.ret, m.pos)
    return ClassTable(p.classes), diags


@dataclass(frozen=True)
class FaultType:
    """Residual type of an expression that can only fault (see module doc)."""

    def __str__(self) -> str:
        return "<fault>"


FAULT = FaultType()


@dataclass(frozen=True)
class TypeEnv:
    gamma: "tuple[tuple[str, Type], ...]" = ()
    delta: "tuple[Type, ...]" = ()
    residual: bool = False

    def lookup(self, name: str) -> Type | None:
        for n, t in reversed(self.gamma):
            if n == name:
                return t
        return None

    def bind(self, name: str, t: Type) -> "TypeEnv":
        return TypeEnv(self.gamma + ((name, t),), self.delta, self.residual)

    def push_yield(self, t: Type) -> "TypeEnv":
        return TypeEnv(self.gamma, (t,) + self.delta, self.residual)


def compat(expected: Type, actual: Type) -> bool:
    """Exact equality, except null is accepted anywhere a reference may go."""
    if expected == actual:
        return True
    if isinstance(actual, FaultType):
        return True
    if isinstance(actual, NullType) and is_ref_like(expected):
        return True
    if isinstance(expected, OptionType) and isinstance(actual, OptionType):
        return compat(expected.elem, actual.elem)
    return False


def join(a: Type, b: Type, pos=None) -> Type:
    if a == b:
        return a
    if isinstance(a, FaultType):
        return b
    if isinstance(b, FaultType):
        return a
    if isinstance(a, NullType) and is_ref_like(b):
        return b
    if isinstance(b, NullType) and is_ref_like(a):
        return a
    if isinstance(a, OptionType) and isinstance(b, OptionType):
        return OptionType(join(a.elem, b.elem, pos))
    raise TypeMismatchError(f"branches have incompatible types {a} and {b}", pos)


def type_expr(env: TypeEnv, ct: ClassTable, e: Expr) -> Type:
    match e:
        case BoolLit():
            return BOOL
        case IntLit():
            return INT
        case NullLit():
            return NULL_T
        case Var(name, pos):
            t = env.lookup(name)
            if t is None:
                raise UnboundVariableError(f"unbound variable {name}", pos)
            return t
        case Let(name, RAsync() as r, body, _):
            obs_t = _type_rasync(env, ct, r, self_name=name)
            return type_expr(env.bind(name, obs_t), ct, body)
        case Let(name, rhs, body, _):
            t = type_expr(env, ct, rhs)
            return type_expr(env.bind(name, t), ct, body)
        case If(c, t, f, pos):
            ct_ = type_expr(env, ct, c)
            if isinstance(ct_, FaultType):
                return FAULT
            if ct_ != BOOL:
                raise TypeMismatchError(f"condition must be Boolean, got {ct_}", pos)
            return join(type_expr(env, ct, t), type_expr(env, ct, f), pos)
        case While(c, b, pos):
            ct_ = type_expr(env, ct, c)
            if isinstance(ct_, FaultType):
                return FAULT
            if ct_ != BOOL:
                raise TypeMismatchError(f"loop condition must be Boolean, got {ct_}", pos)
            type_expr(env, ct, b)
            return BOOL
        case Select(r, fld, pos):
            rt = type_expr(env, ct, r)
            if isinstance(rt, FaultType):
                return FAULT
            if isinstance(rt, NullType):
                if env.residual:
                    return FAULT
                raise TypeMismatchError("selection on a null-typed expression", pos)
            if not isinstance(rt, ClassType):
                raise TypeMismatchError(f"selection on non-object type {rt}", pos)
            if not ct.has_class(rt.name):
                raise UnknownTypeError(f"unknown type {rt.name}", pos)
            return ct.ftype(rt.name, fld, pos)
        case Assign(r, fld, v, pos):
            rt = type_expr(env, ct, r)
            if isinstance(rt, FaultType):
                type_expr(env, ct, v)
                return FAULT
            if isinstance(rt, NullType):
                if env.residual:
                    type_expr(env, ct, v)
                    return FAULT
                raise TypeMismatchError("assignment to a field of a null-typed expression", pos)
            if not isinstance(rt, ClassType):
                raise TypeMismatchError(f"field assignment on non-object type {rt}", pos)
            ft = ct.ftype(rt.name, fld, pos)
            vt = type_expr(env, ct, v)
            if not compat(ft, vt):
                raise TypeMismatchError(f"cannot assign {vt} to field {fld}: {ft}", pos)
            return vt
        case Invoke(r, m, args, pos):
            rt = type_expr(env, ct, r)
            if isinstance(rt, FaultType):
                for a in args:
                    type_expr(env, ct, a)
                return FAULT
            if isinstance(rt, NullType):
                if env.residual:
                    for a in args:
                        type_expr(env, ct, a)
                    return FAULT
                raise TypeMismatchError("method call on a null-typed expression", pos)
            if not isinstance(rt, ClassType):
                raise TypeMismatchError(f"method call on non-object type {rt}", pos)
            ptypes, ret = ct.mtype(rt.name, m, pos)
            if len(args) != len(ptypes):
                raise TypeMismatchError(
                    f"method {m} expects {len(ptypes)} arguments, got {len(args)}", pos
                )
            for a, pt in zip(args, ptypes):
                at = type_expr(env, ct, a)
                if not compat(pt, at):
                    raise TypeMismatchError(f"argument of type {at} where {pt} expected", pos)
            return ret
        case New(cls, args, pos):
            if not ct.has_class(cls):
                raise UnknownTypeError(f"unknown class {cls}", pos)
            flds = ct.fields(cls)
            if len(args) != len(flds):
                raise TypeMismatchError(
                    f"class {cls} has {len(flds)} fields, got {len(args)} arguments", pos
                )
            for a, f in zip(args, flds):
                at = type_expr(env, ct, a)
                if not compat(f.type, at):
                    raise TypeMismatchError(
                        f"field {f.name} of {cls} has type {f.type}, got {at}", pos
                    )
            return ClassType(cls)
        case RAsync():
            return _type_rasync(env, ct, e, self_name=None)
        case Await(s, pos):
            st = type_expr(env, ct, s)
            if isinstance(st, FaultType) or (env.residual and isinstance(st, NullType)):
                return FAULT
            if not isinstance(st, ObsType):
                raise TypeMismatchError(f"await expects an Observable, got {st}", pos)
            return OptionType(st.elem)
        case Yield(v, pos):
            if not env.delta:
                raise YieldOutsideRasyncError("yield outside an rasync body", pos)
            want = env.delta[0]
            vt = type_expr(env, ct, v)
            if not compat(want, vt):
                raise TypeMismatchError(f"yield of {vt} where {want} expected", pos)
            return want
        case PrimOp(op, args, pos):
            return _type_primop(env, ct, op, args, pos)
        case _:
            raise TypeMismatchError(f"cannot type expression {e!r}", getattr(e, "pos", None))


def _type_rasync(env: TypeEnv, ct: ClassTable, e: RAsync, self_name: str | None) -> Type:
    faulty = False
    for s in e.sources:
        st = type_expr(env, ct, s)
        if isinstance(st, FaultType) or (env.residual and isinstance(st, NullType)):
            faulty = True
            continue
        if not isinstance(st, ObsType):
            raise TypeMismatchError(f"rasync source must be an Observable, got {st}", e.pos)
    _validate_surface_type(ct, e.elem, e.pos)
    body_env = env.push_yield(e.elem)
    if self_name is not None:
        body_env = body_env.bind(self_name, ObsType(e.elem))
    type_expr(body_env, ct, e.body)  # body result type is unconstrained and discarded
    return FAULT if faulty else ObsType(e.elem)


def _validate_surface_type(ct: ClassTable, t: Type, pos) -> None:
    match t:
        case BoolType() | IntType():
            pass
        case ClassType(name):
            if not ct.has_class(name):
                raise UnknownTypeError(f"unknown type {name}", pos)
        case ObsType(elem):
            _validate_surface_type(ct, elem, pos)
        case _:
            raise UnknownTypeError(f"type {t} is not declarable", pos)


def _type_primop(env: TypeEnv, ct: ClassTable, op: str, args: tuple[Expr, ...], pos) -> Type:
    ts = tuple(type_expr(env, ct, a) for a in args)
    if any(isinstance(t, FaultType) for t in ts):
        return FAULT
    match op, ts:
        case ("+" | "-", (IntType(), IntType())):
            return INT
        case ("<", (IntType(), IntType())):
            return BOOL
        case ("==", (IntType(), IntType())) | ("==", (BoolType(), BoolType())):
            return BOOL
        case ("!", (BoolType(),)):
            return BOOL
        case ("isSome", (OptionType(),)):
            return BOOL
        case ("get", (OptionType(elem),)):
            return elem
        case _:
            raise TypeMismatchError(f"operator {op} not applicable to {', '.join(map(str, ts))}", pos)


def typecheck_program(p: Program) -> list[Diagnostic]:
    """Aggregate diagnostics for the whole program; empty means well typed."""
    ct, diags = build_class_table(p)
    for c in p.classes:
        for m in c.methods:
            env = TypeEnv()
            env = env.bind("this", ClassType(c.name))
            for prm in m.params:
                env = env.bind(prm.name, prm.type)
            try:
                bt = type_expr(env, ct, m.body)
                if not compat(m.ret, bt):
                    raise TypeMismatchError(
                        f"method {m.name} declares {m.ret} but its body has type {bt}", m.pos
                    )
            except RayError as err:
                diags.append(to_diagnostic(err))
    try:
        type_expr(TypeEnv(), ct, p.main)
    except RayError as err:
        diags.append(to_diagnostic(err))
    return diags


# ---------------------------------------------------------------------------
# publish-result desugaring

def publish_result_program(p: Program) -> Program:
    """Rewrite every rasync body whose result type matches the declared
    element type so the final value is published before the stream closes:
    the body `e` becomes `let r = e in let u = yield(r) in r`.

    Bodies of a different type are left alone; the stream still just closes.
    The input must already typecheck."""
    ct, _ = build_class_table(p)
    counter = [0]

    def fresh() -> str:
        counter[0] += 1
        return f"$pub{counter[0]}"

    def rewrite_rasync(env: TypeEnv, r: RAsync, self_name: str | None) -> RAsync:
        body_env = env.push_yield(r.elem)
        if self_name is not None:
            body_env = body_env.bind(self_name, ObsType(r.elem))
        body = walk(body_env, r.body)
        t = type_expr(body_env, ct, body)
        if not isinstance(t, FaultType) and compat(r.elem, t):
            rv, uv = fresh(), fresh()
            body = Let(rv, body, Let(uv, Yield(Var(rv)), Var(rv)))
        return RAsync(r.elem, r.sources, body, r.pos)

    def walk(env: TypeEnv, e: Expr) -> Expr:
        match e:
            case Let(name, RAsync() as r, body, pos):
                r2 = rewrite_rasync(env, r, name)
                body2 = walk(env.bind(name, ObsType(r.elem)), body)
                return Let(name, r2, body2, pos)
            case Let(name, rhs, body, pos):
                rhs2 = walk(env, rhs)
                t = type_expr(env, ct, rhs2)
                return Let(name, rhs2, walk(env.bind(name, t), body), pos)
            case RAsync() as r:
                return rewrite_rasync(env, r, None)
            case If(c, th, el, pos):
                return If(walk(env, c), walk(env, th), walk(env, el), pos)
            case While(c, b, pos):
                return While(walk(env, c), walk(env, b), pos)
            case Select(recv, fld, pos):
                return Select(walk(env, recv), fld, pos)
            case Assign(recv, fld, v, pos):
                return Assign(walk(env, recv), fld, walk(env, v), pos)
            case Invoke(recv, m, args, pos):
                return Invoke(walk(env, recv), m, tuple(walk(env, a) for a in args), pos)
            case New(cname, args, pos):
                return New(cname, tuple(walk(env, a) for a in args), pos)
            case Await(src, pos):
                return Await(walk(env, src), pos)
            case Yield(v, pos):
                return Yield(walk(env, v), pos)
            case PrimOp(op, args, pos):
                return PrimOp(op, tuple(walk(env, a) for a in args), pos)
            case _:
                return e

    classes = []
    for c in p.classes:
        methods = []
        for m in c.methods:
            env = TypeEnv().bind("this", ClassType(c.name))
            for prm in m.params:
                env = env.bind(prm.name, prm.type)
            methods.append(MethodDecl(m.name, m.params, m.ret, walk(env, m.body), m.pos))
        classes.append(ClassDecl(c.name, c.fields, tuple(methods), c.pos))
    return Program(tuple(classes), walk(TypeEnv(), p.main))
