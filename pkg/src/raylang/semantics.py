"""Small-step interpreter with pluggable scheduling.

Three levels of reduction:

- frame steps rewrite a single frame (let-bound variables, literals, field
  reads, field writes, allocation, conditionals, loop unrolling, primitive
  operators);
- stack steps push/pop frames (method call and return, observable creation,
  the await family, draining a finished top-level frame);
- process steps pick a stack and may move frames between the process and
  the heap (scheduling, removing empty stacks, yield, observable return).

A Choice names one enabled process-level move; policies pick among enabled
choices.  Errors raised while applying a choice surface as the Stuck
outcome.  An event log (publishes, done marks, deliveries) is carried in
the state for observational reporting; it is invisible to the heap rules.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, replace

from .anf import normalize_program
from .ast import (
    Assign, Await, BoolLit, Expr, IntLit, Invoke, Let, New, NullLit, PrimOp,
    Program, RAsync, Select, Type, Var, While, If, Yield,
)
from .errors import (
    AwaitNotSubscribedError, ChoiceNotEnabledError, NotAnObservableError,
    NullDerefError, OptionGetOnNoneError, RayRuntimeError,
    SubscribeToDoneError,
)
from .runtime import (
    AsyncLabel, DoneState, Frame, Heap, ObsObj, PlainObj, RunningState,
    Stack, Sub, SyncLabel, SYNC, Value, VBool, VInt, VNone, VNull, VRef,
    VSome, V_FALSE, V_TRUE, V_NULL, bind_local, find_sub, heap_alloc,
    heap_delta, heap_get, heap_set, obs_ids_stack, remove_sub, render_value,
    replace_sub, resume, unsub_heap, waiter_owner,
)
from .typecheck import ClassTable, build_class_table

MUTATIONS = (
    "yield-keeps-waiters",
    "return-skips-unsub",
    "await2-dequeues-head",
    "yield-drops-publish",
    "resume-binds-raw-value",
)

FRAME_RULES = frozenset(
    ("E-Var", "E-Lit", "E-Field", "E-While", "E-Cond", "E-Assign", "E-New", "E-PrimOp")
)
STACK_RULES = frozenset(
    ("E-Method", "E-Return", "E-RAsync", "E-Await1", "E-Await2", "E-Await3",
     "E-Await4", "E-Halt")
)
PROCESS_RULES = frozenset(("E-Exit", "E-Yield", "E-RAsync-Return"))


# ------------------------------------------------------------------ state

Event = tuple  # ("pub", oid, Value) | ("done", oid) | ("deliver", consumer, src, Value)


@dataclass(frozen=True)
class State:
    heap: Heap
    stacks: tuple[Stack, ...]
    events: tuple[Event, ...] = ()


@dataclass(frozen=True)
class Choice:
    kind: str  # "exit" | "return" | "yield" | "schedule"
    stack: int


_KIND_ORDER = {"exit": 0, "return": 1, "yield": 2, "schedule": 3}


@dataclass(frozen=True)
class StepInfo:
    rule: str
    level: str  # "frame" | "stack" | "process"
    stack: int
    note: str
    heap_delta: tuple[str, ...]
    bound: frozenset[int]  # waiter-growth bound for the evolution check
    pre_stack: Stack
    post_stack: int | None  # index of the surviving stepped stack, if any
    new_stacks: tuple[int, ...]  # indices of stacks added by this step


@dataclass(frozen=True)
class TraceEntry:
    step: int
    rule: str
    stack: int
    choice: str
    heap_delta: tuple[str, ...]
    note: str

    def json(self) -> dict:
        return {
            "step": self.step,
            "rule": self.rule,
            "stack": self.stack,
            "choice": self.choice,
            "heapDelta": list(self.heap_delta),
            "note": self.note,
        }


FINISHED = "Finished"
DEADLOCK = "Deadlock"
STEP_LIMIT = "StepLimit"
STUCK = "Stuck"


@dataclass(frozen=True)
class RunResult:
    outcome: str
    steps: int
    state: State
    trace: tuple[TraceEntry, ...]
    error: str | None = None
    error_kind: str | None = None

    @property
    def events(self) -> tuple[Event, ...]:
        return self.state.events


# ------------------------------------------------------------- atom eval

def is_atom(e: Expr) -> bool:
    return isinstance(e, (Var, IntLit, BoolLit, NullLit))


def eval_atom(locs: Frame, e: Expr) -> Value:
    match e:
        case Var(name, pos):
            v = locs.lookup(name)
            if v is None:
                raise RayRuntimeError(f"unbound variable {name}", pos)
            return v
        case IntLit(n, _):
            return VInt(n)
        case BoolLit(b, _):
            return V_TRUE if b else V_FALSE
        case NullLit(_):
            return V_NULL
    raise RayRuntimeError(f"not an atom: {e!r}", e.pos)


def splice_body(body: Expr, binder: str, cont: Expr) -> Expr:
    """Rewrite `let binder = (body) in cont` into a flat let spine.

    No renaming: frame locals are one flat map, and rebinding an in-scope
    name is the language's mutation idiom (loop counters rely on it).
    """
    match body:
        case Let(a, r, b2, pos):
            return Let(a, r, splice_body(b2, binder, cont), pos)
        case _:
            return Let(binder, body, cont, body.pos)


def fresh_while_acc(f: Frame) -> str:
    names = {n for n, _ in f.locals}
    k = 1
    while f"$while_{k}" in names:
        k += 1
    return f"$while_{k}"


# ------------------------------------------------------------ frame step

def _plain_at(h: Heap, v: Value, what: str, pos) -> tuple[int, PlainObj]:
    match v:
        case VNull():
            raise NullDerefError(f"{what} on null", pos)
        case VRef(oid):
            obj = heap_get(h, oid, pos)
            if isinstance(obj, PlainObj):
                return oid, obj
            raise RayRuntimeError(f"{what} on an observable", pos)
    raise RayRuntimeError(f"{what} on a non-reference value", pos)


def eval_primop(op: str, vals: tuple[Value, ...], pos) -> Value:
    match op, vals:
        case ("+", (VInt(a), VInt(b))):
            return VInt(a + b)
        case ("-", (VInt(a), VInt(b))):
            return VInt(a - b)
        case ("<", (VInt(a), VInt(b))):
            return VBool(a < b)
        case ("==", (VInt(a), VInt(b))):
            return VBool(a == b)
        case ("==", (VBool(a), VBool(b))):
            return VBool(a == b)
        case ("!", (VBool(a),)):
            return VBool(not a)
        case ("isSome", (VSome(),)):
            return V_TRUE
        case ("isSome", (VNone(),)):
            return V_FALSE
        case ("get", (VSome(inner),)):
            return inner
        case ("get", (VNone(),)):
            raise OptionGetOnNoneError("get on None", pos)
    raise RayRuntimeError(
        f"operator {op} not applicable to {', '.join(render_value(v) for v in vals)}", pos
    )


def step_frame(h: Heap, f: Frame, ct: ClassTable) -> tuple[Heap, Frame, str, str] | None:
    """One frame-level reduction, or None if the redex is not frame-level."""
    match f.expr:
        case Let(x, Var() as y, t, _):
            v = eval_atom(f, y)
            return h, replace(f, locals=bind_local(f.locals, x, v), expr=t), "E-Var", f"{x} = {render_value(v)}"
        case Let(x, (IntLit() | BoolLit() | NullLit()) as lit, t, _):
            v = eval_atom(f, lit)
            return h, replace(f, locals=bind_local(f.locals, x, v), expr=t), "E-Lit", f"{x} = {render_value(v)}"
        case Let(x, Select(Var() as y, fld, pos), t, _):
            _, obj = _plain_at(h, eval_atom(f, y), "field selection", pos)
            v = obj.get_field(fld)
            if v is None:
                raise RayRuntimeError(f"object has no field {fld}", pos)
            return h, replace(f, locals=bind_local(f.locals, x, v), expr=t), "E-Field", f"{x} = {render_value(v)}"
        case Let(x, Assign(Var() as y, fld, Var() as z, pos), t, _):
            oid, obj = _plain_at(h, eval_atom(f, y), "field assignment", pos)
            if obj.get_field(fld) is None:
                raise RayRuntimeError(f"object has no field {fld}", pos)
            v = eval_atom(f, z)
            h2 = heap_set(h, oid, obj.set_field(fld, v))
            return h2, replace(f, locals=bind_local(f.locals, x, v), expr=t), "E-Assign", f"o{oid}.{fld} = {render_value(v)}"
        case Let(x, New(cls, args, pos), t, _):
            flds = ct.fields(cls)
            if len(flds) != len(args):
                raise RayRuntimeError(f"wrong arity constructing {cls}", pos)
            vals = tuple(eval_atom(f, a) for a in args)
            h2, oid = heap_alloc(h, PlainObj(cls, tuple((fd.name, v) for fd, v in zip(flds, vals))))
            return h2, replace(f, locals=bind_local(f.locals, x, VRef(oid)), expr=t), "E-New", f"{x} = o{oid}"
        case Let(x, PrimOp(op, args, pos), t, _):
            vals = tuple(eval_atom(f, a) for a in args)
            v = eval_primop(op, vals, pos)
            return h, replace(f, locals=bind_local(f.locals, x, v), expr=t), "E-PrimOp", f"{x} = {render_value(v)}"
        case Let(x, If(c, then, els, pos), t, _):
            cond = eval_atom(f, c)
            if not isinstance(cond, VBool):
                raise RayRuntimeError("condition is not a Boolean", pos)
            branch = then if cond.value else els
            return h, replace(f, expr=splice_body(branch, x, t)), "E-Cond", f"if {render_value(cond)}"
        case Let(x, While(c, body, pos) as loop, t, _):
            cond = eval_atom(f, c)
            if not isinstance(cond, VBool):
                raise RayRuntimeError("loop condition is not a Boolean", pos)
            if cond.value:
                acc = fresh_while_acc(f)
                unrolled = splice_body(body, acc, Let(x, loop, t, pos))
                return h, replace(f, expr=unrolled), "E-While", "while true"
            return h, replace(f, expr=Let(x, BoolLit(False, pos), t, pos)), "E-While", "while false"
    return None


# ------------------------------------------------------------ stack step

@dataclass(frozen=True)
class StackStep:
    heap: Heap
    stack: Stack
    rule: str
    note: str
    events: tuple[Event, ...] = ()
    parked: bool = False  # E-Await1: the top frame moved into the heap


def step_stack(
    h: Heap, fs: Stack, ct: ClassTable, strict_await: bool, mutation: str | None
) -> StackStep | None:
    if not fs:
        return None
    top = fs[0]
    e = top.expr

    if is_atom(e):
        if isinstance(top.label, AsyncLabel):
            return None  # E-RAsync-Return is a process-level move
        v = eval_atom(top, e)
        if len(fs) == 1:
            return StackStep(h, (), "E-Halt", f"halt {render_value(v)}")
        below = fs[1]
        if below.ret_var is None:
            raise RayRuntimeError("finished frame has no return target", e.pos)
        x = below.ret_var
        below2 = replace(below, locals=bind_local(below.locals, x, v), ret_var=None)
        return StackStep(h, (below2,) + fs[2:], "E-Return", f"return {render_value(v)} -> {x}")

    match e:
        case Let(x, Invoke(Var() as y, m, args, pos), t, _):
            recv = eval_atom(top, y)
            match recv:
                case VNull():
                    raise NullDerefError("method call on null", pos)
                case VRef(oid):
                    obj = heap_get(h, oid, pos)
                    if not isinstance(obj, PlainObj):
                        raise RayRuntimeError("method call on an observable", pos)
                case _:
                    raise RayRuntimeError("method call on a non-reference value", pos)
            try:
                params, body = ct.mbody(obj.cls, m, pos)
            except Exception:
                raise RayRuntimeError(f"class {obj.cls} has no method {m}", pos)
            if len(params) != len(args):
                raise RayRuntimeError(f"wrong arity calling {m}", pos)
            pairs = [(p.name, eval_atom(top, a)) for p, a in zip(params, args)]
            pairs.append(("this", recv))
            callee = Frame(tuple(sorted(pairs)), body, SYNC, None)
            caller = replace(top, expr=t, ret_var=x)
            return StackStep(h, (callee, caller) + fs[1:], "E-Method", f"call {obj.cls}.{m}")

        case Let(x, RAsync(elem, sources, body, pos), t, _):
            src_oids: list[int] = []
            for s in sources:
                sv = eval_atom(top, s)
                match sv:
                    case VNull():
                        raise NullDerefError("subscribe to null", pos)
                    case VRef(oid):
                        obj = heap_get(h, oid, pos)
                        if not isinstance(obj, ObsObj):
                            raise NotAnObservableError("subscribe to a plain object", pos)
                        if not obj.running:
                            raise SubscribeToDoneError(f"subscribe to done observable o{oid}", pos)
                        if oid not in src_oids:
                            src_oids.append(oid)
                    case _:
                        raise NotAnObservableError("subscribe to a non-reference value", pos)
            h2, o = heap_alloc(h, ObsObj(elem, RunningState((), ())))
            for p in src_oids:
                pobj = heap_get(h2, p)
                assert isinstance(pobj, ObsObj) and isinstance(pobj.state, RunningState)
                h2 = heap_set(
                    h2, p,
                    ObsObj(pobj.elem, RunningState(pobj.state.waiters, (Sub(o, ()),) + pobj.state.subs)),
                )
            locs = bind_local(top.locals, x, VRef(o))
            body_frame = Frame(locs, body, AsyncLabel(o, tuple(src_oids)), None)
            cont = replace(top, locals=locs, expr=t)
            srcs = ",".join(f"o{p}" for p in src_oids)
            return StackStep(h2, (body_frame, cont) + fs[1:], "E-RAsync", f"new observable o{o} sources=[{srcs}]")

        case Let(x, Await(Var() as y, pos), t, _):
            sv = eval_atom(top, y)
            match sv:
                case VNull():
                    raise NullDerefError("await on null", pos)
                case VRef(oid):
                    obj = heap_get(h, oid, pos)
                    if not isinstance(obj, ObsObj):
                        raise NotAnObservableError("await on a plain object", pos)
                case _:
                    raise NotAnObservableError("await on a non-reference value", pos)
            if not isinstance(top.label, AsyncLabel):
                return None  # synchronous frames have no await rule: blocked
            me = top.label.owner
            if oid not in top.label.sources:
                raise AwaitNotSubscribedError(
                    f"observable o{me} never subscribed to o{oid}", pos
                )
            match obj.state:
                case RunningState(waiters, subs):
                    entry = find_sub(subs, me)
                    if entry is None:
                        raise AwaitNotSubscribedError(
                            f"o{me} has no subscription entry in o{oid}", pos
                        )
                    if entry.queue:
                        if mutation == "await2-dequeues-head":
                            v, q2 = entry.queue[0], entry.queue[1:]
                        else:
                            v, q2 = entry.queue[-1], entry.queue[:-1]
                        delivered: Value = VSome(v)
                        h2 = heap_set(
                            h, oid, ObsObj(obj.elem, RunningState(waiters, replace_sub(subs, Sub(me, q2))))
                        )
                        f2 = replace(top, locals=bind_local(top.locals, x, delivered), expr=t)
                        return StackStep(
                            h2, (f2,) + fs[1:], "E-Await2",
                            f"{x} = {render_value(delivered)} from o{oid} queue",
                            events=(("deliver", me, oid, delivered),),
                        )
                    h2 = heap_set(
                        h, oid, ObsObj(obj.elem, RunningState((top,) + waiters, remove_sub(subs, me)))
                    )
                    return StackStep(
                        h2, fs[1:], "E-Await1", f"o{me} parks in o{oid}", parked=True
                    )
                case DoneState(subs):
                    entry = find_sub(subs, me)
                    if entry is not None and entry.queue:
                        v, q2 = entry.queue[-1], entry.queue[:-1]
                        delivered = VSome(v)
                        h2 = heap_set(h, oid, ObsObj(obj.elem, DoneState(replace_sub(subs, Sub(me, q2)))))
                        f2 = replace(top, locals=bind_local(top.locals, x, delivered), expr=t)
                        return StackStep(
                            h2, (f2,) + fs[1:], "E-Await3",
                            f"{x} = {render_value(delivered)} from done o{oid} queue",
                            events=(("deliver", me, oid, delivered),),
                        )
                    if strict_await:
                        return None  # blocked forever: done and nothing queued
                    delivered = VNone(obj.elem)
                    f2 = replace(top, locals=bind_local(top.locals, x, delivered), expr=t)
                    return StackStep(
                        h, (f2,) + fs[1:], "E-Await4",
                        f"{x} = None (o{oid} done, queue empty)",
                        events=(("deliver", me, oid, delivered),),
                    )

        case Let(_, Yield(_, _), _, _):
            return None  # process-level move

    out = step_frame(h, top, ct)
    if out is None:
        raise RayRuntimeError("no rule applies to this frame", getattr(e, "pos", None))
    h2, f2, rule, note = out
    return StackStep(h2, (f2,) + fs[1:], rule, note)


# ---------------------------------------------------------------- machine

class Machine:
    """Bundles the class table and mode flags; all stepping is pure."""

    def __init__(
        self,
        program: Program,
        strict_await: bool = False,
        mutation: str | None = None,
        normalize: bool = True,
    ):
        if mutation is not None and mutation not in MUTATIONS:
            raise ValueError(f"unknown mutation {mutation}")
        self.program = normalize_program(program) if normalize else program
        self.class_table, diags = build_class_table(self.program)
        if diags:
            raise ValueError(f"malformed class table: {diags[0].message}")
        self.strict_await = strict_await
        self.mutation = mutation

    def initial_state(self) -> State:
        main = Frame((), self.program.main, SYNC, None)
        return State(heap=(), stacks=((main,),), events=())

    # -- choice enumeration

    def _stack_choice(self, state: State, i: int) -> Choice | None:
        fs = state.stacks[i]
        if not fs:
            return Choice("exit", i)
        top = fs[0]
        e = top.expr
        if is_atom(e):
            if isinstance(top.label, AsyncLabel):
                return Choice("return", i)
            return Choice("schedule", i)
        match e:
            case Let(_, Yield(_, _), _, _):
                if isinstance(top.label, AsyncLabel):
                    return Choice("yield", i)
                return None  # yield outside an observable body: blocked
            case Let(_, Await(Var(y, _), _), _, _):
                v = top.lookup(y)
                if not isinstance(v, VRef):
                    return Choice("schedule", i)  # stepping raises an error
                if not (0 <= v.oid < len(state.heap)):
                    return Choice("schedule", i)
                obj = state.heap[v.oid]
                if not isinstance(obj, ObsObj):
                    return Choice("schedule", i)
                if not isinstance(top.label, AsyncLabel):
                    return None  # synchronous await: blocked
                if v.oid not in top.label.sources:
                    return Choice("schedule", i)  # raises AwaitNotSubscribed
                match obj.state:
                    case RunningState():
                        return Choice("schedule", i)
                    case DoneState(subs):
                        entry = find_sub(subs, top.label.owner)
                        if entry is not None and entry.queue:
                            return Choice("schedule", i)
                        if self.strict_await:
                            return None  # blocked: done and drained
                        return Choice("schedule", i)
        return Choice("schedule", i)

    def enabled_choices(self, state: State) -> tuple[Choice, ...]:
        out = []
        for i in range(len(state.stacks)):
            c = self._stack_choice(state, i)
            if c is not None:
                out.append(c)
        out.sort(key=lambda c: (c.stack, _KIND_ORDER[c.kind]))
        return tuple(out)

    # -- applying one choice

    def apply(self, state: State, choice: Choice) -> tuple[State, StepInfo]:
        i = choice.stack
        if not (0 <= i < len(state.stacks)):
            raise ChoiceNotEnabledError(f"no stack {i}")
        h = state.heap
        fs = state.stacks[i]
        bound = obs_ids_stack(fs)

        if choice.kind == "exit":
            if fs:
                raise ChoiceNotEnabledError("exit on a non-empty stack")
            stacks = state.stacks[:i] + state.stacks[i + 1:]
            info = StepInfo(
                rule="E-Exit", level="process", stack=i, note="stack removed",
                heap_delta=(), bound=bound, pre_stack=fs, post_stack=None, new_stacks=(),
            )
            return State(h, stacks, state.events), info

        if choice.kind == "return":
            return self._apply_rasync_return(state, i)

        if choice.kind == "yield":
            return self._apply_yield(state, i)

        if choice.kind == "schedule":
            out = step_stack(h, fs, self.class_table, self.strict_await, self.mutation)
            if out is None:
                raise ChoiceNotEnabledError("stack has no enabled move")
            stacks = state.stacks[:i] + (out.stack,) + state.stacks[i + 1:]
            level = "frame" if out.rule in FRAME_RULES else "stack"
            info = StepInfo(
                rule=out.rule, level=level, stack=i, note=out.note,
                heap_delta=tuple(heap_delta(h, out.heap)),
                bound=frozenset() if level == "frame" else bound,
                pre_stack=fs, post_stack=i, new_stacks=(),
            )
            return State(out.heap, stacks, state.events + out.events), info

        raise ChoiceNotEnabledError(f"unknown choice kind {choice.kind}")

    def _apply_yield(self, state: State, i: int) -> tuple[State, StepInfo]:
        h = state.heap
        fs = state.stacks[i]
        if not fs:
            raise ChoiceNotEnabledError("yield on an empty stack")
        top = fs[0]
        match top.expr:
            case Let(x, Yield(Var(z, _), pos), t, _):
                pass
            case _:
                raise ChoiceNotEnabledError("top frame is not at a yield")
        if not isinstance(top.label, AsyncLabel):
            raise ChoiceNotEnabledError("yield outside an observable body")
        o = top.label.owner
        v = eval_atom(top, Var(z, pos))
        obj = heap_get(h, o, pos)
        if not isinstance(obj, ObsObj) or not isinstance(obj.state, RunningState):
            raise RayRuntimeError(f"owner o{o} is not running", pos)
        waiters, subs = obj.state.waiters, obj.state.subs

        resume_val: Value = v if self.mutation == "resume-binds-raw-value" else VSome(v)
        resumed = resume(waiters, resume_val)
        if self.mutation == "yield-drops-publish":
            pub_subs = subs
        else:
            pub_subs = tuple(Sub(s.sid, (v,) + s.queue) for s in subs)
        readd = tuple(Sub(waiter_owner(f), ()) for f in waiters)
        new_waiters = waiters if self.mutation == "yield-keeps-waiters" else ()
        h2 = heap_set(h, o, ObsObj(obj.elem, RunningState(new_waiters, pub_subs + readd)))

        f2 = replace(top, locals=bind_local(top.locals, x, v), expr=t)
        stacks = state.stacks[:i] + ((f2,) + fs[1:],) + state.stacks[i + 1:]
        base = len(stacks)
        stacks = stacks + tuple((r,) for r in resumed)
        events: tuple[Event, ...] = (("pub", o, v),)
        for f, r in zip(waiters, resumed):
            events += (("deliver", waiter_owner(f), o, resume_val),)
        resumed_ids = ",".join(f"o{waiter_owner(f)}" for f in waiters)
        info = StepInfo(
            rule="E-Yield", level="process", stack=i,
            note=f"publish {render_value(v)} from o{o}; resumed [{resumed_ids}]",
            heap_delta=tuple(heap_delta(h, h2)), bound=obs_ids_stack(fs),
            pre_stack=fs, post_stack=i,
            new_stacks=tuple(range(base, base + len(resumed))),
        )
        return State(h2, stacks, state.events + events), info

    def _apply_rasync_return(self, state: State, i: int) -> tuple[State, StepInfo]:
        h = state.heap
        fs = state.stacks[i]
        if not fs:
            raise ChoiceNotEnabledError("return on an empty stack")
        top = fs[0]
        if not is_atom(top.expr) or not isinstance(top.label, AsyncLabel):
            raise ChoiceNotEnabledError("top frame is not a finished observable body")
        eval_atom(top, top.expr)  # the body's value is discarded but must exist
        o = top.label.owner
        obj = heap_get(h, o, top.expr.pos)
        if not isinstance(obj, ObsObj) or not isinstance(obj.state, RunningState):
            raise RayRuntimeError(f"owner o{o} is not running", top.expr.pos)
        waiters, subs = obj.state.waiters, obj.state.subs

        resumed = resume(waiters, VNone(obj.elem))
        readd = tuple(Sub(waiter_owner(f), ()) for f in waiters)
        h2 = heap_set(h, o, ObsObj(obj.elem, DoneState(subs + readd)))
        if self.mutation != "return-skips-unsub":
            h2 = unsub_heap(h2, top.label.sources, o)

        stacks = state.stacks[:i] + (fs[1:],) + state.stacks[i + 1:]
        base = len(stacks)
        stacks = stacks + tuple((r,) for r in resumed)
        events: tuple[Event, ...] = (("done", o),)
        for f in waiters:
            events += (("deliver", waiter_owner(f), o, VNone(obj.elem)),)
        resumed_ids = ",".join(f"o{waiter_owner(f)}" for f in waiters)
        info = StepInfo(
            rule="E-RAsync-Return", level="process", stack=i,
            note=f"o{o} done; resumed [{resumed_ids}]",
            heap_delta=tuple(heap_delta(h, h2)), bound=obs_ids_stack(fs),
            pre_stack=fs, post_stack=i,
            new_stacks=tuple(range(base, base + len(resumed))),
        )
        return State(h2, stacks, state.events + events), info


# ---------------------------------------------------------------- policies

class RoundRobinPolicy:
    """Cycles through stacks, taking the next enabled one at or after the
    cursor."""

    name = "rr"

    def __init__(self):
        self.cursor = 0

    def choose(self, choices: tuple[Choice, ...], state: State) -> Choice:
        for c in choices:
            if c.stack >= self.cursor:
                self.cursor = c.stack + 1
                return c
        c = choices[0]
        self.cursor = c.stack + 1
        return c


class RandomPolicy:
    name = "random"

    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)

    def choose(self, choices: tuple[Choice, ...], state: State) -> Choice:
        return choices[self.rng.randrange(len(choices))]


class ScriptPolicy:
    """Follows a fixed sequence of stack indices; raises if the scripted
    stack has no enabled choice.  Used by rule-level tests."""

    name = "script"

    def __init__(self, indices: "list[int]"):
        self.indices = list(indices)
        self.at = 0

    def choose(self, choices: tuple[Choice, ...], state: State) -> Choice:
        if self.at >= len(self.indices):
            raise ChoiceNotEnabledError("script exhausted")
        want = self.indices[self.at]
        self.at += 1
        for c in choices:
            if c.stack == want:
                return c
        raise ChoiceNotEnabledError(f"scripted stack {want} has no enabled choice")


def make_policy(name: str, seed: int = 0):
    if name in ("rr", "round-robin"):
        return RoundRobinPolicy()
    if name == "random":
        return RandomPolicy(seed)
    raise ValueError(f"unknown policy {name}")


# ---------------------------------------------------------------- running

def run_machine(
    machine: Machine,
    policy,
    max_steps: int = 10000,
    state: State | None = None,
    want_trace: bool = True,
) -> RunResult:
    st = machine.initial_state() if state is None else state
    trace: list[TraceEntry] = []
    steps = 0
    while True:
        if not st.stacks:
            return RunResult(FINISHED, steps, st, tuple(trace))
        choices = machine.enabled_choices(st)
        if not choices:
            return RunResult(DEADLOCK, steps, st, tuple(trace))
        if steps >= max_steps:
            return RunResult(STEP_LIMIT, steps, st, tuple(trace))
        choice = policy.choose(choices, st)
        try:
            st2, info = machine.apply(st, choice)
        except RayRuntimeError as err:
            if want_trace:
                trace.append(TraceEntry(steps, "stuck", choice.stack, choice.kind, (), err.message))
            return RunResult(STUCK, steps, st, tuple(trace), error=err.message, error_kind=err.kind)
        steps += 1
        if want_trace:
            trace.append(
                TraceEntry(steps, info.rule, info.stack, choice.kind, info.heap_delta, info.note)
            )
        st = st2


def run_program(
    program: Program,
    policy: str = "rr",
    seed: int = 0,
    max_steps: int = 10000,
    strict_await: bool = False,
    mutation: str | None = None,
) -> RunResult:
    machine = Machine(program, strict_await=strict_await, mutation=mutation)
    return run_machine(machine, make_policy(policy, seed), max_steps=max_steps)
