"""A-normal-form pass.

After `normalize_program`:

- every condition, receiver, argument, source, and payload position holds a
  plain variable;
- compound forms appear only as the rhs of a let;
- no let appears in rhs position (nested lets are spliced, renaming
  embedded binders to avoid capture);
- every body (main, method bodies, rasync bodies, branch and loop bodies)
  is a let chain ending in a variable, so every return-like rule fires on a
  variable (literal tails get a fresh binder);
- while conditions are variables: a compound condition is evaluated before
  the loop and re-evaluated at the end of the loop body, rebinding the same
  condition variable (the machine re-reads only that variable on the back
  edge).

Fresh names come from the reserved `$t<n>` namespace, skipping anything the
program already uses, so normalization is idempotent and capture-free.
"""
from __future__ import annotations

from .ast import (
    Assign, Await, BoolLit, ClassDecl, Expr, If, IntLit, Invoke, Let,
    MethodDecl, New, NullLit, PrimOp, Program, RAsync, Select, Var, While,
    Yield, all_names, is_atom, rename_var,
)

Binding = "tuple[str, Expr]"


class _Normalizer:
    def __init__(self, used: frozenset[str]):
        self.used = set(used)
        self.counter = 0

    def fresh(self) -> str:
        while True:
            name = f"$t{self.counter}"
            self.counter += 1
            if name not in self.used:
                self.used.add(name)
                return name

    # -- entry points --------------------------------------------------------

    def body(self, e: Expr) -> Expr:
        """Normalize a body: a let spine (names preserved) ending in a variable."""
        binds: list[tuple[str, Expr]] = []
        cur = e
        while isinstance(cur, Let):
            binds.append((cur.name, self.rhs(cur.rhs, binds)))
            cur = cur.body
        tail = self.var(cur, binds)
        out: Expr = tail
        for name, rhs in reversed(binds):
            out = Let(name, rhs, out)
        return out

    # -- positions -----------------------------------------------------------

    def atom(self, e: Expr, binds: list) -> Expr:
        if is_atom(e):
            return e
        r = self.rhs(e, binds)
        if is_atom(r):
            return r
        name = self.fresh()
        binds.append((name, r))
        return Var(name, e.pos)

    def var(self, e: Expr, binds: list) -> Expr:
        """Like atom, but literals are also bound (positions demand variables)."""
        if isinstance(e, Var):
            return e
        r = self.rhs(e, binds)
        if isinstance(r, Var):
            return r
        name = self.fresh()
        binds.append((name, r))
        return Var(name, e.pos)

    def rhs(self, e: Expr, binds: list) -> Expr:
        """Normalize e into a bindable rhs, emitting prerequisite bindings."""
        match e:
            case _ if is_atom(e):
                return e
            case Let(x, rhs, body):
                # embedded let: splice with a fresh binder to avoid capture
                x2 = self.fresh()
                if isinstance(rhs, RAsync):
                    # the binder names the observable inside its own body
                    rhs = RAsync(rhs.elem, rhs.sources, rename_var(rhs.body, x, x2), rhs.pos)
                r = self.rhs(rhs, binds)
                binds.append((x2, r))
                return self.rhs(rename_var(body, x, x2), binds)
            case If(c, t, f, pos):
                return If(self.var(c, binds), self.body(t), self.body(f), pos)
            case While():
                return self.while_(e, binds)
            case Select(r, fld, pos):
                return Select(self.var(r, binds), fld, pos)
            case Assign(r, fld, v, pos):
                rv = self.var(r, binds)
                return Assign(rv, fld, self.var(v, binds), pos)
            case Invoke(r, m, args, pos):
                rv = self.var(r, binds)
                return Invoke(rv, m, tuple(self.var(a, binds) for a in args), pos)
            case New(cls, args, pos):
                return New(cls, tuple(self.var(a, binds) for a in args), pos)
            case RAsync(elem, sources, body, pos):
                srcs = tuple(self.var(s, binds) for s in sources)
                return RAsync(elem, srcs, self.body(body), pos)
            case Await(s, pos):
                return Await(self.var(s, binds), pos)
            case Yield(v, pos):
                return Yield(self.var(v, binds), pos)
            case PrimOp(op, args, pos):
                return PrimOp(op, tuple(self.var(a, binds) for a in args), pos)
            case _:
                raise AssertionError(f"unnormalizable expression {e!r}")

    def while_(self, e: While, binds: list) -> Expr:
        if isinstance(e.cond, Var):
            # the source rebinds the condition variable itself
            return While(e.cond, self.body(e.body), e.pos)
        # evaluate the condition before the loop, re-evaluate at the back edge
        pre: list[tuple[str, Expr]] = []
        cond_rhs = self.rhs(e.cond, pre)
        cv = self.fresh()
        binds.extend(pre)
        binds.append((cv, cond_rhs))

        body_binds: list[tuple[str, Expr]] = []
        body_cur = e.body
        while isinstance(body_cur, Let):
            body_binds.append((body_cur.name, self.rhs(body_cur.rhs, body_binds)))
            body_cur = body_cur.body
        self.atom(body_cur, body_binds)  # keep the body's final value evaluation
        # re-evaluate the condition, rebinding cv
        re_binds: list[tuple[str, Expr]] = []
        re_rhs = self.rhs(e.cond, re_binds)
        body_binds.extend(re_binds)
        body_binds.append((cv, re_rhs))
        body_out: Expr = Var(cv, e.pos)
        for name, rhs in reversed(body_binds):
            body_out = Let(name, rhs, body_out)
        return While(Var(cv, e.pos), body_out, e.pos)


def normalize_program(p: Program) -> Program:
    n = _Normalizer(all_names(p))
    classes = []
    for c in p.classes:
        methods = tuple(
            MethodDecl(m.name, m.params, m.ret, n.body(m.body), m.pos) for m in c.methods
        )
        classes.append(ClassDecl(c.name, c.fields, methods, c.pos))
    return Program(tuple(classes), n.body(p.main))


def normalize_expr(e: Expr) -> Expr:
    """Normalize a standalone expression as a body (used by tests)."""
    used = all_names(Program((), e))
    return _Normalizer(used).body(e)


# ---------------------------------------------------------------------------
# ANF validation

def _anf_positions_ok(e: Expr) -> bool:
    """Non-let compound form with variable-only positions and body sub-chains."""
    match e:
        case _ if is_atom(e):
            return True
        case If(c, t, f):
            return isinstance(c, Var) and is_anf_body(t) and is_anf_body(f)
        case While(c, b):
            return isinstance(c, Var) and is_anf_body(b)
        case Select(r, _):
            return isinstance(r, Var)
        case Assign(r, _, v):
            return isinstance(r, Var) and isinstance(v, Var)
        case Invoke(r, _, args):
            return isinstance(r, Var) and all(isinstance(a, Var) for a in args)
        case New(_, args):
            return all(isinstance(a, Var) for a in args)
        case RAsync(_, sources, body):
            return all(isinstance(s, Var) for s in sources) and is_anf_body(body)
        case Await(s):
            return isinstance(s, Var)
        case Yield(v):
            return isinstance(v, Var)
        case PrimOp(_, args):
            return all(isinstance(a, Var) for a in args)
        case Let():
            return False
        case _:
            return False


def is_anf_body(e: Expr) -> bool:
    cur = e
    while isinstance(cur, Let):
        if isinstance(cur.rhs, Let):
            return False
        if not _anf_positions_ok(cur.rhs):
            return False
        cur = cur.body
    return isinstance(cur, Var)


def is_anf_program(p: Program) -> bool:
    for c in p.classes:
        for m in c.methods:
            if not is_anf_body(m.body):
                return False
    return is_anf_body(p.main)
