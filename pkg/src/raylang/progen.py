"""Seeded generator of well-typed programs, plus a greedy shrinker.

Generation is type-directed: every expression is built against a goal type
under the same scoping discipline the checker applies, so the output
typechecks by construction and no rejection sampling is needed.  Streams
are always wired "inside out" (consumers are created in the prologue of
their producer's body), which keeps every subscription target running at
subscribe time, and loops only ever step a literal-bounded counter, so
default-config programs finish under every schedule.

Two stream shapes appear often on purpose because the conformance harness
needs them to notice broken interpreters: a consumer that parks once, does
busy work while the producer runs ahead, and then drains its queue (a
wrong dequeue end changes what it sees), and a pair of consumers on one
source so a dropped publish leaves a visible gap.

`shrink_program` reduces a failing program by greedy let-dropping,
let-inlining, branch selection, and dead declaration removal, keeping
every intermediate candidate well-typed and still failing.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

from .ast import (
    BOOL, INT, Assign, Await, BoolLit, ClassDecl, ClassType, Expr, FieldDecl,
    If, IntLit, Invoke, Let, MethodDecl, New, NullLit, Param, PrimOp, Program,
    RAsync, Select, Var, While, Yield, is_atom, iter_exprs,
)
from .typecheck import typecheck_program


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    max_classes: int = 2
    max_methods: int = 2
    max_expr_depth: int = 3
    max_observables: int = 3
    max_loop_iters: int = 3
    strict_syntax: bool = False
    may_diverge: bool = False

    def __post_init__(self):
        for name in ("max_classes", "max_methods", "max_expr_depth",
                     "max_observables", "max_loop_iters"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


# ---------------------------------------------------------------------------
# generation

@dataclass
class _Scope:
    """What the generator may mention at the current program point."""

    ints: list[str]
    bools: list[str]
    objs: list[tuple[str, str]]  # (name, class name)
    sources: list[str]  # awaitable streams of the current async body
    depth: int = 0  # how many async bodies enclose this point

    def child(self) -> "_Scope":
        return _Scope(list(self.ints), list(self.bools), list(self.objs), [], self.depth + 1)


class _Gen:
    def __init__(self, cfg: GenConfig, rng: random.Random):
        self.cfg = cfg
        self.rng = rng
        self.classes: list[ClassDecl] = []
        self.counter = 0
        self.obs_left = cfg.max_observables

    def fresh(self, prefix: str) -> str:
        self.counter += 1
        return f"{prefix}{self.counter}"

    # -- random int/bool expressions ----------------------------------------

    def int_expr(self, sc: _Scope, depth: int) -> Expr:
        r = self.rng.random()
        if depth <= 0 or (self.cfg.strict_syntax and not (sc.ints and r < 0.5)):
            if sc.ints and r < 0.55:
                return Var(self.rng.choice(sc.ints))
            return IntLit(self.rng.randint(0, 9))
        if r < 0.30 and not self.cfg.strict_syntax:
            op = self.rng.choice(("+", "-"))
            return PrimOp(op, (self.int_expr(sc, depth - 1), self.int_expr(sc, depth - 1)))
        if r < 0.45 and sc.objs:
            name, cls = self.rng.choice(sc.objs)
            fld = self._int_field(cls)
            if fld is not None:
                return Select(Var(name), fld)
        if r < 0.60 and sc.objs:
            call = self._int_call(sc, depth)
            if call is not None:
                return call
        if r < 0.72 and not self.cfg.strict_syntax:
            return If(self.bool_expr(sc, depth - 1),
                      self.int_expr(sc, depth - 1), self.int_expr(sc, depth - 1))
        if sc.ints and r < 0.9:
            return Var(self.rng.choice(sc.ints))
        return IntLit(self.rng.randint(0, 9))

    def bool_expr(self, sc: _Scope, depth: int) -> Expr:
        if self.cfg.strict_syntax:
            if sc.bools and self.rng.random() < 0.6:
                return Var(self.rng.choice(sc.bools))
            return BoolLit(self.rng.random() < 0.5)
        r = self.rng.random()
        if depth > 0 and r < 0.5:
            op = self.rng.choice(("<", "=="))
            return PrimOp(op, (self.int_expr(sc, depth - 1), self.int_expr(sc, depth - 1)))
        if depth > 0 and r < 0.62:
            return PrimOp("!", (self.bool_expr(sc, depth - 1),))
        if sc.bools and r < 0.8:
            return Var(self.rng.choice(sc.bools))
        return BoolLit(self.rng.random() < 0.5)

    def _int_field(self, cls: str) -> str | None:
        c = next(c for c in self.classes if c.name == cls)
        flds = [f.name for f in c.fields if f.type == INT]
        return self.rng.choice(flds) if flds else None

    def _int_call(self, sc: _Scope, depth: int) -> Expr | None:
        name, cls = self.rng.choice(sc.objs)
        c = next(c for c in self.classes if c.name == cls)
        if not c.methods:
            return None
        m = self.rng.choice(c.methods)
        args = tuple(self.int_expr(sc, min(depth - 1, 1)) for _ in m.params)
        return Invoke(Var(name), m.name, args)

    # -- statement-shaped let bindings ---------------------------------------

    def filler(self, sc: _Scope, n: int) -> list[tuple[str, Expr]]:
        """n let bindings of assorted shapes; returns (name, rhs) pairs."""
        out: list[tuple[str, Expr]] = []
        for _ in range(n):
            r = self.rng.random()
            if r < 0.45 or not sc.objs:
                x = self.fresh("n")
                out.append((x, self.int_expr(sc, self.cfg.max_expr_depth)))
                sc.ints.append(x)
            elif r < 0.7:
                name, cls = self.rng.choice(sc.objs)
                fld = self._int_field(cls)
                if fld is None:
                    continue
                out.append((self.fresh("u"), Assign(Var(name), fld, self.int_expr(sc, 1))))
            else:
                call = self._int_call(sc, 2)
                if call is None:
                    continue
                x = self.fresh("n")
                out.append((x, call))
                sc.ints.append(x)
        return out

    def counted_loop(self, sc: _Scope, iters: int, inner: int) -> list[tuple[str, Expr]]:
        """A while loop stepping a fresh counter to a literal bound.  The
        core syntax has no comparison operator, so strict configurations
        use a flag the body lowers after one pass instead."""
        diverge = self.cfg.may_diverge and self.rng.random() < 0.25
        if self.cfg.strict_syntax:
            return self.flag_loop(sc, inner, diverge)
        i = self.fresh("i")
        sc.ints.append(i)
        mark = len(sc.ints)
        body_binds = self.filler(sc, inner)
        del sc.ints[mark:]  # loop-local names end with the loop body
        # the counter step is always the last binding before the back edge
        body: Expr = Let(i, PrimOp("+", (Var(i), IntLit(1))), IntLit(0))
        for name, rhs in reversed(body_binds):
            body = Let(name, rhs, body)
        cond: Expr = BoolLit(True) if diverge else PrimOp("<", (Var(i), IntLit(iters)))
        return [(i, IntLit(0)), (self.fresh("w"), While(cond, body))]

    def flag_loop(self, sc: _Scope, inner: int, diverge: bool) -> list[tuple[str, Expr]]:
        f = self.fresh("f")
        mark = len(sc.ints)
        body_binds = self.filler(sc, inner)
        del sc.ints[mark:]
        body: Expr = Let(f, BoolLit(diverge), Var(f))
        for name, rhs in reversed(body_binds):
            body = Let(name, rhs, body)
        return [(f, BoolLit(True)), (self.fresh("w"), While(Var(f), body))]

    def guarded_await(self, sc: _Scope, src: str) -> list[tuple[str, Expr]]:
        """await + isSome/get elimination; the None arm falls back to an int."""
        a = self.fresh("a")
        binds: list[tuple[str, Expr]] = [(a, Await(Var(src)))]
        if not self.cfg.strict_syntax:
            v = self.fresh("v")
            fallback = self.int_expr(sc, 1)
            binds.append((v, If(PrimOp("isSome", (Var(a),)), PrimOp("get", (Var(a),)), fallback)))
            sc.ints.append(v)
        return binds

    # -- class declarations ---------------------------------------------------

    def gen_classes(self) -> None:
        n = self.rng.randint(1, max(1, self.cfg.max_classes))
        for ci in range(n):
            cname = f"C{ci}"
            fields = [FieldDecl(f"f{ci}0", INT)]
            if self.rng.random() < 0.5:
                fields.append(FieldDecl(f"f{ci}1", INT))
            if self.rng.random() < 0.4:
                fields.append(FieldDecl(f"flag{ci}", BOOL))
            if ci > 0 or self.rng.random() < 0.55:
                # a reference field, usually initialized to null at New sites
                target = f"C{self.rng.randint(0, ci)}" if ci > 0 else cname
                fields.append(FieldDecl(f"link{ci}", ClassType(target)))
            # provisional entry so method bodies can look the class up
            self.classes.append(ClassDecl(cname, tuple(fields), ()))
            methods: list[MethodDecl] = []
            for mi in range(self.rng.randint(1, max(1, self.cfg.max_methods))):
                methods.append(self.gen_method(cname, fields, mi, methods))
                self.classes[-1] = ClassDecl(cname, tuple(fields), tuple(methods))

    def gen_method(self, cname: str, fields: list[FieldDecl], mi: int,
                   earlier: list[MethodDecl]) -> MethodDecl:
        params = tuple(Param(f"p{j}", INT) for j in range(self.rng.randint(0, 2)))
        sc = _Scope([p.name for p in params], [], [("this", cname)], [])
        int_fields = [f.name for f in fields if f.type == INT]
        binds: list[tuple[str, Expr]] = []
        if self.rng.random() < 0.7 and int_fields:
            fld = self.rng.choice(int_fields)
            binds.append((self.fresh("u"), Assign(Var("this"), fld, self.int_expr(sc, 2))))
        if self.rng.random() < 0.35 and not self.cfg.strict_syntax:
            binds.extend(self.counted_loop(sc, self.rng.randint(1, max(1, self.cfg.max_loop_iters)), 1))
        if earlier and self.rng.random() < 0.45:
            callee = self.rng.choice(earlier)
            x = self.fresh("n")
            binds.append((x, Invoke(Var("this"), callee.name,
                                    tuple(self.int_expr(sc, 1) for _ in callee.params))))
            sc.ints.append(x)
        ret = self.int_expr(sc, 2)
        body: Expr = ret
        for name, rhs in reversed(binds):
            body = Let(name, rhs, body)
        return MethodDecl(f"m{mi}", params, INT, body)

    # -- stream templates -------------------------------------------------------

    def consumer(self, sc: _Scope, src: str, yields: int, style: str) -> tuple[str, Expr]:
        """An rasync body that awaits `src`; returns (name, let-rhs)."""
        c = self.fresh("s")
        body_sc = sc.child()
        body_sc.sources.append(src)
        binds: list[tuple[str, Expr]] = []
        awaits = yields if self.rng.random() < 0.5 else yields + 1
        if style == "lagging":
            binds.extend(self.guarded_await(body_sc, src))
            binds.extend(self.counted_loop(body_sc, self.rng.randint(1, 2), 1))
            for _ in range(max(1, awaits - 1)):
                binds.extend(self.guarded_await(body_sc, src))
        else:
            for k in range(awaits):
                binds.extend(self.guarded_await(body_sc, src))
                if k == 0 and self.rng.random() < 0.4:
                    binds.extend(self.filler(body_sc, 1))
        tail = self.int_expr(body_sc, 1)
        body: Expr = tail
        for name, rhs in reversed(binds):
            body = Let(name, rhs, body)
        self.obs_left -= 1
        return c, RAsync(INT, (Var(src),), body)

    def relay(self, sc: _Scope, src: str, yields: int) -> tuple[str, Expr]:
        """A forwarding stream: awaits src and republishes each value."""
        f = self.fresh("s")
        body_sc = sc.child()
        body_sc.sources.append(src)
        binds: list[tuple[str, Expr]] = []
        inner_consumer = self.obs_left >= 2
        if inner_consumer:
            name, rhs = self.consumer(body_sc, f, yields, "eager")
            binds.append((name, rhs))
        for _ in range(yields):
            a = self.fresh("a")
            binds.append((a, Await(Var(src))))
            payload: Expr = (PrimOp("get", (Var(a),))
                             if not self.cfg.strict_syntax else IntLit(self.rng.randint(0, 9)))
            binds.append((self.fresh("y"), Yield(payload)))
        tail = self.int_expr(body_sc, 0)
        body: Expr = tail
        for name, rhs in reversed(binds):
            body = Let(name, rhs, body)
        self.obs_left -= 1
        return f, RAsync(INT, (Var(src),), body)

    def producer(self, sc: _Scope, shape: str) -> tuple[str, Expr]:
        """The outer stream: wires consumers in its prologue, then emits."""
        s = self.fresh("s")
        body_sc = sc.child()
        self.obs_left -= 1
        lagging = shape == "lagging"
        yields = 3 if lagging else self.rng.randint(1, 3)
        binds: list[tuple[str, Expr]] = []
        if shape == "pair" and self.obs_left >= 2:
            for style in ("eager", self.rng.choice(("eager", "lagging"))):
                name, rhs = self.consumer(body_sc, s, yields, style)
                binds.append((name, rhs))
        elif shape == "relay" and self.obs_left >= 1:
            name, rhs = self.relay(body_sc, s, yields)
            binds.append((name, rhs))
        elif self.obs_left >= 1:
            name, rhs = self.consumer(body_sc, s, yields, "lagging" if lagging else "eager")
            binds.append((name, rhs))
        if not lagging and self.rng.random() < 0.5 and not self.cfg.strict_syntax:
            binds.extend(self.filler(body_sc, 1))
        base = self.rng.randint(0, 20)
        step = self.rng.randint(1, 5)
        for j in range(yields):
            binds.append((self.fresh("y"), Yield(IntLit(base + j * step))))
            if not lagging and self.rng.random() < 0.35:
                binds.extend(self.filler(body_sc, 1))
        tail = self.int_expr(body_sc, 0)
        body: Expr = tail
        for name, rhs in reversed(binds):
            body = Let(name, rhs, body)
        return s, RAsync(INT, (), body)

    def two_producers(self, sc: _Scope) -> tuple[str, Expr]:
        """Nested independent emitters raced by one two-source consumer."""
        s0 = self.fresh("s")
        s1 = self.fresh("s")
        self.obs_left -= 3
        c = self.fresh("s")
        c_sc = sc.child()
        c_sc.sources.extend((s0, s1))
        first, second = (s0, s1) if self.rng.random() < 0.5 else (s1, s0)
        cbinds: list[tuple[str, Expr]] = []
        cbinds.extend(self.guarded_await(c_sc, first))
        cbinds.extend(self.guarded_await(c_sc, second))
        ctail = self.int_expr(c_sc, 1)
        cbody: Expr = ctail
        for name, rhs in reversed(cbinds):
            cbody = Let(name, rhs, cbody)

        inner_binds: list[tuple[str, Expr]] = [(c, RAsync(INT, (Var(s0), Var(s1)), cbody))]
        for _ in range(self.rng.randint(1, 2)):
            inner_binds.append((self.fresh("y"), Yield(IntLit(self.rng.randint(0, 30)))))
        inner_body: Expr = IntLit(0)
        for name, rhs in reversed(inner_binds):
            inner_body = Let(name, rhs, inner_body)

        outer_binds: list[tuple[str, Expr]] = [(s1, RAsync(INT, (), inner_body))]
        for _ in range(self.rng.randint(1, 2)):
            outer_binds.append((self.fresh("y"), Yield(IntLit(self.rng.randint(0, 30)))))
        outer_body: Expr = IntLit(0)
        for name, rhs in reversed(outer_binds):
            outer_body = Let(name, rhs, outer_body)
        return s0, RAsync(INT, (), outer_body)

    # -- whole program -----------------------------------------------------------

    def program(self) -> Program:
        self.gen_classes()
        sc = _Scope([], [], [], [])
        binds: list[tuple[str, Expr]] = []

        # sync prologue: objects, flags, arithmetic, a loop
        for ci, c in enumerate(self.classes):
            name = self.fresh("o")
            args = []
            for f in c.fields:
                if f.type == INT:
                    args.append(IntLit(self.rng.randint(0, 9)))
                elif f.type == BOOL:
                    args.append(BoolLit(self.rng.random() < 0.5))
                else:
                    prior = [n for n, cl in sc.objs if ClassType(cl) == f.type]
                    if prior and self.rng.random() < 0.4:
                        args.append(Var(self.rng.choice(prior)))
                    else:
                        args.append(NullLit())
            binds.append((name, New(c.name, tuple(args))))
            sc.objs.append((name, c.name))
        if self.rng.random() < 0.7:
            b = self.fresh("b")
            binds.append((b, self.bool_expr(sc, 1)))
            sc.bools.append(b)
        binds.extend(self.filler(sc, self.rng.randint(1, 3)))
        if self.rng.random() < 0.6 and not self.cfg.strict_syntax:
            binds.extend(self.counted_loop(
                sc, self.rng.randint(1, max(1, self.cfg.max_loop_iters)),
                self.rng.randint(1, 2)))

        # stream section
        if self.obs_left >= 1:
            r = self.rng.random()
            if r < 0.12:
                pass  # purely synchronous program
            elif r < 0.42 and self.obs_left >= 3:
                binds.append(self.two_producers(sc))
            elif r < 0.62 and self.obs_left >= 3:
                binds.append(self.producer(sc, "pair"))
            elif r < 0.80 and self.obs_left >= 2:
                binds.append(self.producer(sc, "relay"))
            elif r < 0.92 and self.obs_left >= 2:
                binds.append(self.producer(sc, "lagging"))
            else:
                binds.append(self.producer(sc, "plain"))

        binds.extend(self.filler(sc, 1))
        tail = self.int_expr(sc, 1)
        main: Expr = tail
        for name, rhs in reversed(binds):
            main = Let(name, rhs, main)
        return Program(tuple(self.classes), main)


def generate_program(cfg: GenConfig = GenConfig()) -> Program:
    """Deterministically derive a well-typed program from cfg.seed."""
    rng = random.Random(cfg.seed)
    return _Gen(cfg, rng).program()


# ---------------------------------------------------------------------------
# shrinking

def _expr_count(p: Program) -> int:
    n = sum(1 for _ in iter_exprs(p.main))
    for c in p.classes:
        for m in c.methods:
            n += sum(1 for _ in iter_exprs(m.body))
    return n


def _replace_node(e: Expr, target: Expr, repl: Expr) -> Expr:
    """Rebuild e with the node `target` (by identity) swapped for repl."""
    if e is target:
        return repl
    rebuilt = []
    changed = False
    match e:
        case Let(x, rhs, body, pos):
            r2, b2 = _replace_node(rhs, target, repl), _replace_node(body, target, repl)
            return e if r2 is rhs and b2 is body else Let(x, r2, b2, pos)
        case If(c, t, f, pos):
            c2, t2, f2 = (_replace_node(s, target, repl) for s in (c, t, f))
            return e if c2 is c and t2 is t and f2 is f else If(c2, t2, f2, pos)
        case While(c, b, pos):
            c2, b2 = _replace_node(c, target, repl), _replace_node(b, target, repl)
            return e if c2 is c and b2 is b else While(c2, b2, pos)
        case Select(r, fld, pos):
            r2 = _replace_node(r, target, repl)
            return e if r2 is r else Select(r2, fld, pos)
        case Assign(r, fld, v, pos):
            r2, v2 = _replace_node(r, target, repl), _replace_node(v, target, repl)
            return e if r2 is r and v2 is v else Assign(r2, fld, v2, pos)
        case Invoke(r, m, args, pos):
            r2 = _replace_node(r, target, repl)
            for a in args:
                a2 = _replace_node(a, target, repl)
                changed = changed or a2 is not a
                rebuilt.append(a2)
            return e if r2 is r and not changed else Invoke(r2, m, tuple(rebuilt), pos)
        case New(cls, args, pos):
            for a in args:
                a2 = _replace_node(a, target, repl)
                changed = changed or a2 is not a
                rebuilt.append(a2)
            return e if not changed else New(cls, tuple(rebuilt), pos)
        case RAsync(elem, sources, body, pos):
            for s in sources:
                s2 = _replace_node(s, target, repl)
                changed = changed or s2 is not s
                rebuilt.append(s2)
            b2 = _replace_node(body, target, repl)
            return e if b2 is body and not changed else RAsync(elem, tuple(rebuilt), b2, pos)
        case Await(s, pos):
            s2 = _replace_node(s, target, repl)
            return e if s2 is s else Await(s2, pos)
        case Yield(v, pos):
            v2 = _replace_node(v, target, repl)
            return e if v2 is v else Yield(v2, pos)
        case PrimOp(op, args, pos):
            for a in args:
                a2 = _replace_node(a, target, repl)
                changed = changed or a2 is not a
                rebuilt.append(a2)
            return e if not changed else PrimOp(op, tuple(rebuilt), pos)
        case _:
            return e


def _subst(e: Expr, name: str, atom: Expr) -> Expr:
    """Substitute an atom for free occurrences of name; respects shadowing."""
    match e:
        case Var(n):
            return atom if n == name else e
        case Let(x, rhs, body, pos):
            if isinstance(rhs, RAsync) and x == name:
                # the binder shadows name inside the rasync body and the let body
                srcs = tuple(_subst(s, name, atom) for s in rhs.sources)
                return Let(x, RAsync(rhs.elem, srcs, rhs.body, rhs.pos), body, pos)
            rhs2 = _subst(rhs, name, atom)
            body2 = body if x == name else _subst(body, name, atom)
            return Let(x, rhs2, body2, pos)
        case If(c, t, f, pos):
            return If(_subst(c, name, atom), _subst(t, name, atom), _subst(f, name, atom), pos)
        case While(c, b, pos):
            return While(_subst(c, name, atom), _subst(b, name, atom), pos)
        case Select(r, fld, pos):
            return Select(_subst(r, name, atom), fld, pos)
        case Assign(r, fld, v, pos):
            return Assign(_subst(r, name, atom), fld, _subst(v, name, atom), pos)
        case Invoke(r, m, args, pos):
            return Invoke(_subst(r, name, atom), m, tuple(_subst(a, name, atom) for a in args), pos)
        case New(cls, args, pos):
            return New(cls, tuple(_subst(a, name, atom) for a in args), pos)
        case RAsync(elem, sources, body, pos):
            return RAsync(elem, tuple(_subst(s, name, atom) for s in sources), _subst(body, name, atom), pos)
        case Await(s, pos):
            return Await(_subst(s, name, atom), pos)
        case Yield(v, pos):
            return Yield(_subst(v, name, atom), pos)
        case PrimOp(op, args, pos):
            return PrimOp(op, tuple(_subst(a, name, atom) for a in args), pos)
        case _:
            return e


def _edits(p: Program):
    """Candidate one-step reductions of p, larger cuts first."""
    # drop whole classes, then methods
    for ci, c in enumerate(p.classes):
        rest = p.classes[:ci] + p.classes[ci + 1:]
        yield Program(rest, p.main)
        for mi in range(len(c.methods)):
            c2 = ClassDecl(c.name, c.fields, c.methods[:mi] + c.methods[mi + 1:], c.pos)
            yield Program(p.classes[:ci] + (c2,) + p.classes[ci + 1:], p.main)

    def body_edits(body: Expr):
        for node in iter_exprs(body):
            match node:
                case Let(x, rhs, sub):
                    yield _replace_node(body, node, sub)  # drop the binding
                    if is_atom(rhs):
                        yield _replace_node(body, node, _subst(sub, x, rhs))
                case If(_, t, f):
                    yield _replace_node(body, node, t)
                    yield _replace_node(body, node, f)
                case _:
                    pass

    for main2 in body_edits(p.main):
        yield Program(p.classes, main2)
    for ci, c in enumerate(p.classes):
        for mi, m in enumerate(c.methods):
            for b2 in body_edits(m.body):
                m2 = MethodDecl(m.name, m.params, m.ret, b2, m.pos)
                c2 = ClassDecl(c.name, c.fields, c.methods[:mi] + (m2,) + c.methods[mi + 1:], c.pos)
                yield Program(p.classes[:ci] + (c2,) + p.classes[ci + 1:], p.main)


def shrink_program(p: Program, failing) -> Program:
    """Greedily minimize p while failing(p) holds and p stays well-typed."""
    if not failing(p):
        raise ValueError("shrink_program: the input does not satisfy the failing predicate")
    current = p
    improved = True
    while improved:
        improved = False
        size = _expr_count(current)
        for cand in _edits(current):
            if _expr_count(cand) >= size:
                continue
            if typecheck_program(cand):
                continue
            if failing(cand):
                current = cand
                improved = True
                break
    return current
