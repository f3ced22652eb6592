"""Run-time domains: values, frames, frame stacks, and the heap.

Values are immutable. Frames pair a flat local-variable map with the
expression left to reduce; a label marks a frame as synchronous or as the
body of an observable (carrying the owner id and the ids it subscribed to),
and `ret_var` on a caller frame names the variable that receives the value
of the frame pushed above it.

Observables live in the heap as `running(waiters, subscribers)` or
`done(subscribers)`. A waiter is a single parked frame whose expression is
`let x = await(y) in t`; a subscriber is a pair of the subscribed
observable's id and a FIFO queue of pending events (enqueued at index 0,
dequeued from the end).
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace

from .ast import (
    Await, ClassType, Expr, Let, NullType, ObsType, OptionType, Type, Var,
    BOOL, INT, NULL_T,
)
from .errors import DanglingRefError, MalformedWaiterError


# ---------------------------------------------------------------- values

@dataclass(frozen=True)
class VBool:
    value: bool


@dataclass(frozen=True)
class VInt:
    value: int


@dataclass(frozen=True)
class VNull:
    pass


@dataclass(frozen=True)
class VRef:
    oid: int


@dataclass(frozen=True)
class VSome:
    value: "Value"


@dataclass(frozen=True)
class VNone:
    elem: Type


Value = VBool | VInt | VNull | VRef | VSome | VNone

V_TRUE = VBool(True)
V_FALSE = VBool(False)
V_NULL = VNull()


def render_value(v: Value) -> str:
    match v:
        case VBool(b):
            return "true" if b else "false"
        case VInt(n):
            return str(n)
        case VNull():
            return "null"
        case VRef(oid):
            return f"o{oid}"
        case VSome(inner):
            return f"Some({render_value(inner)})"
        case VNone():
            return "None"
    raise TypeError(f"not a value: {v!r}")


def value_json(v: Value):
    match v:
        case VBool(b):
            return b
        case VInt(n):
            return n
        case VNull():
            return None
        case VRef(oid):
            return {"ref": oid}
        case VSome(inner):
            return {"some": value_json(inner)}
        case VNone(elem):
            return {"none": str(elem)}
    raise TypeError(f"not a value: {v!r}")


# ---------------------------------------------------------------- frames

@dataclass(frozen=True)
class SyncLabel:
    pass


@dataclass(frozen=True)
class AsyncLabel:
    owner: int
    sources: tuple[int, ...]


Label = SyncLabel | AsyncLabel

SYNC = SyncLabel()


@dataclass(frozen=True)
class Frame:
    locals: tuple[tuple[str, Value], ...]
    expr: Expr
    label: Label = SYNC
    ret_var: str | None = None

    def lookup(self, name: str) -> Value | None:
        for n, v in self.locals:
            if n == name:
                return v
        return None

    def bind(self, name: str, value: Value) -> "Frame":
        return replace(self, locals=bind_local(self.locals, name, value))

    def with_expr(self, e: Expr) -> "Frame":
        return replace(self, expr=e)


def bind_local(
    locs: tuple[tuple[str, Value], ...], name: str, value: Value
) -> tuple[tuple[str, Value], ...]:
    """Insert or replace a binding, keeping entries sorted by name."""
    out: list[tuple[str, Value]] = []
    placed = False
    for n, v in locs:
        if n == name:
            out.append((name, value))
            placed = True
        elif not placed and n > name:
            out.append((name, value))
            out.append((n, v))
            placed = True
        else:
            out.append((n, v))
    if not placed:
        out.append((name, value))
    return tuple(out)


def make_locals(pairs: "list[tuple[str, Value]]") -> tuple[tuple[str, Value], ...]:
    locs: tuple[tuple[str, Value], ...] = ()
    for n, v in pairs:
        locs = bind_local(locs, n, v)
    return locs


Stack = tuple[Frame, ...]  # index 0 is the top (next to reduce)


def obs_ids_frame(f: Frame) -> frozenset[int]:
    match f.label:
        case AsyncLabel(owner, _):
            return frozenset((owner,))
        case _:
            return frozenset()


def obs_ids_stack(fs: Stack) -> frozenset[int]:
    ids: frozenset[int] = frozenset()
    for f in fs:
        ids |= obs_ids_frame(f)
    return ids


# ---------------------------------------------------------------- heap

@dataclass(frozen=True)
class PlainObj:
    cls: str
    fields: tuple[tuple[str, Value], ...]  # declaration order

    def get_field(self, name: str) -> Value | None:
        for n, v in self.fields:
            if n == name:
                return v
        return None

    def set_field(self, name: str, value: Value) -> "PlainObj":
        return PlainObj(
            self.cls,
            tuple((n, value if n == name else v) for n, v in self.fields),
        )


@dataclass(frozen=True)
class Sub:
    """One subscription entry: the subscriber's id and its pending queue.

    The queue is FIFO: new events go in at index 0, consumption takes the
    last element.
    """
    sid: int
    queue: tuple[Value, ...] = ()


@dataclass(frozen=True)
class RunningState:
    waiters: tuple[Frame, ...] = ()
    subs: tuple[Sub, ...] = ()


@dataclass(frozen=True)
class DoneState:
    subs: tuple[Sub, ...] = ()


ObsState = RunningState | DoneState


@dataclass(frozen=True)
class ObsObj:
    elem: Type
    state: ObsState

    @property
    def running(self) -> bool:
        return isinstance(self.state, RunningState)


HeapObj = PlainObj | ObsObj
Heap = tuple[HeapObj, ...]  # object id = index

EMPTY_HEAP: Heap = ()


def heap_get(h: Heap, oid: int, pos=None) -> HeapObj:
    if 0 <= oid < len(h):
        return h[oid]
    raise DanglingRefError(f"dangling reference o{oid}", pos)


def heap_set(h: Heap, oid: int, obj: HeapObj) -> Heap:
    return h[:oid] + (obj,) + h[oid + 1:]


def heap_alloc(h: Heap, obj: HeapObj) -> tuple[Heap, int]:
    return h + (obj,), len(h)


def find_sub(subs: tuple[Sub, ...], sid: int) -> Sub | None:
    for s in subs:
        if s.sid == sid:
            return s
    return None


def replace_sub(subs: tuple[Sub, ...], entry: Sub) -> tuple[Sub, ...]:
    return tuple(entry if s.sid == entry.sid else s for s in subs)


def remove_sub(subs: tuple[Sub, ...], sid: int) -> tuple[Sub, ...]:
    return tuple(s for s in subs if s.sid != sid)


# ------------------------------------------------------------- auxiliaries

def waiter_shape(f: Frame) -> tuple[str, Expr, str]:
    """Destructure a parked frame, which must look like
    `let x = await(y) in t` under an async label.  Returns (x, t, y)."""
    if not isinstance(f.label, AsyncLabel):
        raise MalformedWaiterError("parked frame lacks an async label", f.expr.pos)
    match f.expr:
        case Let(x, Await(Var(y, _), _), t, _):
            return x, t, y
    raise MalformedWaiterError("parked frame is not blocked on await", f.expr.pos)


def resume(waiters: tuple[Frame, ...], v: Value) -> tuple[Frame, ...]:
    """Rebind each parked frame's await variable to v and return the frames
    ready to run again (labels preserved)."""
    out = []
    for f in waiters:
        x, t, _ = waiter_shape(f)
        out.append(replace(f, locals=bind_local(f.locals, x, v), expr=t))
    return tuple(out)


def waiter_owner(f: Frame) -> int:
    label = f.label
    if not isinstance(label, AsyncLabel):
        raise MalformedWaiterError("parked frame lacks an async label", f.expr.pos)
    return label.owner


def unsub_heap(h: Heap, sources: tuple[int, ...], oid: int) -> Heap:
    """Remove oid's subscription entries from every observable in sources."""
    for p in sources:
        obj = heap_get(h, p)
        if not isinstance(obj, ObsObj):
            continue
        match obj.state:
            case RunningState(waiters, subs):
                h = heap_set(h, p, ObsObj(obj.elem, RunningState(waiters, remove_sub(subs, oid))))
            case DoneState(subs):
                h = heap_set(h, p, ObsObj(obj.elem, DoneState(remove_sub(subs, oid))))
    return h


def value_type(h: Heap, v: Value, pos=None) -> Type:
    match v:
        case VBool():
            return BOOL
        case VInt():
            return INT
        case VNull():
            return NULL_T
        case VRef(oid):
            obj = heap_get(h, oid, pos)
            if isinstance(obj, PlainObj):
                return ClassType(obj.cls)
            return ObsType(obj.elem)
        case VSome(inner):
            return OptionType(value_type(h, inner, pos))
        case VNone(elem):
            return OptionType(elem)
    raise TypeError(f"not a value: {v!r}")


# ------------------------------------------------------------- rendering

def render_obj(obj: HeapObj) -> str:
    match obj:
        case PlainObj(cls, fields):
            inner = ",".join(f"{n}={render_value(v)}" for n, v in fields)
            return f"{cls}{{{inner}}}"
        case ObsObj(elem, RunningState(waiters, subs)):
            w = ",".join(f"o{waiter_owner(f)}" for f in waiters)
            return f"Obs[{elem}] running w=[{w}] s=[{render_subs(subs)}]"
        case ObsObj(elem, DoneState(subs)):
            return f"Obs[{elem}] done s=[{render_subs(subs)}]"
    raise TypeError(f"not a heap object: {obj!r}")


def render_subs(subs: tuple[Sub, ...]) -> str:
    return ",".join(
        f"o{s.sid}:[{','.join(render_value(v) for v in s.queue)}]" for s in subs
    )


def heap_delta(old: Heap, new: Heap) -> list[str]:
    """Human-readable per-object differences, allocation first."""
    out = []
    for oid in range(len(old)):
        if oid < len(new) and new[oid] != old[oid]:
            out.append(f"o{oid}: {render_obj(old[oid])} -> {render_obj(new[oid])}")
    for oid in range(len(old), len(new)):
        out.append(f"alloc o{oid} = {render_obj(new[oid])}")
    return out


def frame_json(f: Frame) -> dict:
    match f.label:
        case SyncLabel():
            label = "s"
        case AsyncLabel(owner, sources):
            label = {"owner": owner, "sources": list(sources)}
    d = {
        "locals": {n: value_json(v) for n, v in f.locals},
        "label": label,
    }
    if f.ret_var is not None:
        d["retVar"] = f.ret_var
    return d


def obj_json(obj: HeapObj) -> dict:
    match obj:
        case PlainObj(cls, fields):
            return {"class": cls, "fields": {n: value_json(v) for n, v in fields}}
        case ObsObj(elem, RunningState(waiters, subs)):
            return {
                "elem": str(elem),
                "state": "running",
                "waiters": [waiter_owner(f) for f in waiters],
                "subs": [{"id": s.sid, "queue": [value_json(v) for v in s.queue]} for s in subs],
            }
        case ObsObj(elem, DoneState(subs)):
            return {
                "elem": str(elem),
                "state": "done",
                "subs": [{"id": s.sid, "queue": [value_json(v) for v in s.queue]} for s in subs],
            }
    raise TypeError(f"not a heap object: {obj!r}")
