"""Exhaustive interleaving exploration.

Breadth-first search over machine states, trying every enabled choice at
every state.  States are canonicalized before memoization: object ids are
renamed in first-touch order over a deterministic walk (stacks, then the
heap objects they reach, then the rest of the heap in allocation order), so
interleavings that allocate the same objects in different orders collapse
into one state.

Identity also includes the observable event history, projected per stream:
the publish/done sequence of each observable and the delivery sequence of
each (consumer, source) pair.  Cross-stream interleaving of events is
deliberately dropped from the identity; the per-stream sequences are what
terminal reports promise.

Every edge is checked against the observable protocol: a done observable
never reverts to running and its queues never grow.  Optional per-edge
conformance checking (well-formedness, typing, heap evolution) is available
for harness-style runs.  Stuck edges (runtime errors) are terminal.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

from .errors import RayRuntimeError
from .printer import pp_expr
from .runtime import (
    AsyncLabel, DoneState, Frame, Heap, HeapObj, ObsObj, PlainObj,
    RunningState, Stack, Sub, Value, VRef, VSome, render_value,
)
from .semantics import Event, Machine, State


# --------------------------------------------------------- canonical form

def _touch(oid: int, mapping: dict[int, int], order: list[int]) -> None:
    if oid not in mapping:
        mapping[oid] = len(mapping)
        order.append(oid)


def _walk_value(v: Value, mapping, order) -> None:
    match v:
        case VRef(oid):
            _touch(oid, mapping, order)
        case VSome(inner):
            _walk_value(inner, mapping, order)


def _walk_frame(f: Frame, mapping, order) -> None:
    for _, v in f.locals:
        _walk_value(v, mapping, order)
    if isinstance(f.label, AsyncLabel):
        _touch(f.label.owner, mapping, order)
        for s in f.label.sources:
            _touch(s, mapping, order)


def _rename_value(v: Value, mapping) -> Value:
    match v:
        case VRef(oid):
            return VRef(mapping[oid])
        case VSome(inner):
            return VSome(_rename_value(inner, mapping))
    return v


def _rename_frame(f: Frame, mapping) -> Frame:
    locs = tuple((n, _rename_value(v, mapping)) for n, v in f.locals)
    label = f.label
    if isinstance(label, AsyncLabel):
        label = AsyncLabel(mapping[label.owner], tuple(mapping[s] for s in label.sources))
    return Frame(locs, f.expr, label, f.ret_var)


def _rename_obj(obj: HeapObj, mapping) -> HeapObj:
    if isinstance(obj, PlainObj):
        return PlainObj(obj.cls, tuple((n, _rename_value(v, mapping)) for n, v in obj.fields))
    assert isinstance(obj, ObsObj)

    def subs(ss: tuple[Sub, ...]) -> tuple[Sub, ...]:
        return tuple(
            Sub(mapping[s.sid], tuple(_rename_value(v, mapping) for v in s.queue)) for s in ss
        )

    match obj.state:
        case RunningState(waiters, ss):
            st = RunningState(tuple(_rename_frame(f, mapping) for f in waiters), subs(ss))
        case DoneState(ss):
            st = DoneState(subs(ss))
    return ObsObj(obj.elem, st)


def _rename_event(ev: Event, mapping) -> Event:
    match ev:
        case ("pub", oid, v):
            return ("pub", mapping[oid], _rename_value(v, mapping))
        case ("done", oid):
            return ("done", mapping[oid])
        case ("deliver", c, src, v):
            return ("deliver", mapping[c], mapping[src], _rename_value(v, mapping))
    return ev


def event_projections(events: tuple[Event, ...]):
    """Per-stream views of the event history: what each observable emitted
    and what each consumer received from each of its sources."""
    emitted: dict[int, list[str]] = {}
    received: dict[tuple[int, int], list[str]] = {}
    for ev in events:
        match ev:
            case ("pub", oid, v):
                emitted.setdefault(oid, []).append(render_value(v))
            case ("done", oid):
                emitted.setdefault(oid, []).append("done")
            case ("deliver", c, src, v):
                received.setdefault((c, src), []).append(render_value(v))
    return (
        tuple(sorted((oid, tuple(seq)) for oid, seq in emitted.items())),
        tuple(sorted((key, tuple(seq)) for key, seq in received.items())),
    )


@lru_cache(maxsize=None)
def _expr_sig(e) -> str:
    return pp_expr(e)


def _frame_sig(f: Frame) -> tuple:
    """Renaming-independent shape of a frame: program text, local names,
    return slot, label arity. Values are excluded on purpose (they hold
    object ids)."""
    srcs = len(f.label.sources) if isinstance(f.label, AsyncLabel) else -1
    return (_expr_sig(f.expr), tuple(n for n, _ in f.locals), f.ret_var or "", srcs)


def _stack_sig(fs: Stack) -> tuple:
    return tuple(_frame_sig(f) for f in fs)


def canonicalize(state: State) -> tuple[State, tuple]:
    """Rename object ids into first-touch order; return the renamed state
    and its hashable identity (heap, stacks, event projections).

    Stacks are put in a structural order first, so states that differ only
    by stack permutation share one identity (scheduling choices are
    per-stack, so permuted states have isomorphic futures). The renamed
    state is the identity's witness; exploration expands the original
    states so reported ids stay in allocation order."""
    stacks_in = tuple(sorted(state.stacks, key=_stack_sig))
    mapping: dict[int, int] = {}
    order: list[int] = []
    for fs in stacks_in:
        for f in fs:
            _walk_frame(f, mapping, order)
    i = 0
    while i < len(order):
        obj = state.heap[order[i]]
        i += 1
        if isinstance(obj, PlainObj):
            for _, v in obj.fields:
                _walk_value(v, mapping, order)
        else:
            assert isinstance(obj, ObsObj)
            if isinstance(obj.state, RunningState):
                for f in obj.state.waiters:
                    _walk_frame(f, mapping, order)
            for s in obj.state.subs:
                _touch(s.sid, mapping, order)
                for v in s.queue:
                    _walk_value(v, mapping, order)
    for oid in range(len(state.heap)):
        _touch(oid, mapping, order)

    new_heap: list[HeapObj | None] = [None] * len(state.heap)
    for oid in range(len(state.heap)):
        new_heap[mapping[oid]] = _rename_obj(state.heap[oid], mapping)
    heap = tuple(new_heap)
    stacks = tuple(tuple(_rename_frame(f, mapping) for f in fs) for fs in stacks_in)
    events = tuple(_rename_event(ev, mapping) for ev in state.events)
    canon = State(heap, stacks, events)
    key = (heap, stacks, event_projections(events))
    return canon, key


# ----------------------------------------------------------- protocol law

def check_protocol_edge(old: Heap, new: Heap) -> list[str]:
    """A done observable never reverts and never publishes (queues of a done
    observable only shrink by consumption)."""
    out: list[str] = []
    for oid in range(min(len(old), len(new))):
        o_, n_ = old[oid], new[oid]
        if not (isinstance(o_, ObsObj) and isinstance(o_.state, DoneState)):
            continue
        if not isinstance(n_, ObsObj):
            out.append(f"protocol: o{oid} stopped being an observable")
            continue
        if isinstance(n_.state, RunningState):
            out.append(f"protocol: o{oid} reverted from done to running")
            continue
        olds = {s.sid: s.queue for s in o_.state.subs}
        for s in n_.state.subs:
            if s.sid in olds and len(s.queue) > len(olds[s.sid]):
                out.append(f"protocol: done o{oid} published into o{s.sid}'s queue")
    return out


# ----------------------------------------------------------------- result

@dataclass
class Terminal:
    outcome: str  # Finished | Deadlock | Stuck
    count: int
    emitted: tuple  # per-observable publish/done sequences
    received: tuple  # per-(consumer, source) delivery sequences
    depth: int
    error: str | None = None

    def json(self) -> dict:
        return {
            "outcome": self.outcome,
            "count": self.count,
            "depth": self.depth,
            "emitted": {f"o{oid}": list(seq) for oid, seq in self.emitted},
            "received": {f"o{c}<-o{s}": list(seq) for (c, s), seq in self.received},
            **({"error": self.error} if self.error else {}),
        }


@dataclass
class ExploreResult:
    states: int
    edges: int
    terminals: list[Terminal]
    deadlock_traces: list[list[str]]
    protocol_violations: list[str]
    conformance_violations: list[str]
    rule_counts: dict[str, int]
    truncated: str | None  # None, or which limit stopped the search
    max_depth_seen: int

    @property
    def ok(self) -> bool:
        return not self.protocol_violations and not self.conformance_violations

    def outcomes(self) -> dict[str, int]:
        out: Counter[str] = Counter()
        for t in self.terminals:
            out[t.outcome] += t.count
        return dict(out)

    def json(self) -> dict:
        return {
            "states": self.states,
            "edges": self.edges,
            "outcomes": self.outcomes(),
            "terminals": [t.json() for t in self.terminals],
            "deadlockTraces": self.deadlock_traces,
            "protocolViolations": self.protocol_violations,
            "conformanceViolations": self.conformance_violations,
            "ruleCounts": dict(sorted(self.rule_counts.items())),
            "truncated": self.truncated,
            "maxDepth": self.max_depth_seen,
        }


# ------------------------------------------------------------------ search

def explore(
    program,
    max_depth: int = 200,
    max_states: int = 20000,
    strict_await: bool = False,
    mutation: str | None = None,
    check_wf: bool = False,
    machine: Machine | None = None,
) -> ExploreResult:
    m = machine if machine is not None else Machine(
        program, strict_await=strict_await, mutation=mutation
    )
    if check_wf:
        from . import conformance

    start = m.initial_state()
    _, key0 = canonicalize(start)
    seen: dict = {key0: 0}
    parents: dict = {key0: None}  # key -> (parent key, rule)
    frontier: list[tuple[State, tuple]] = [(start, key0)]

    terminals: dict = {}
    deadlock_traces: list[list[str]] = []
    protocol_violations: list[str] = []
    conformance_violations: list[str] = []
    rule_counts: Counter[str] = Counter()
    edges = 0
    depth = 0
    truncated: str | None = None

    def record_terminal(outcome: str, st: State, d: int, error: str | None = None):
        emitted, received = event_projections(st.events)
        tkey = (outcome, emitted, received, error)
        if tkey in terminals:
            terminals[tkey].count += 1
        else:
            terminals[tkey] = Terminal(outcome, 1, emitted, received, d, error)

    def trace_to(key) -> list[str]:
        rules: list[str] = []
        cur = key
        while parents[cur] is not None:
            cur, rule = parents[cur]
            rules.append(rule)
        rules.reverse()
        return rules

    while frontier and truncated is None:
        if depth >= max_depth:
            truncated = "max-depth"
            break
        nxt: list[tuple[State, tuple]] = []
        for st, key in frontier:
            if not st.stacks:
                record_terminal("Finished", st, depth)
                continue
            choices = m.enabled_choices(st)
            if not choices:
                record_terminal("Deadlock", st, depth)
                if len(deadlock_traces) < 10:
                    deadlock_traces.append(trace_to(key))
                continue
            for choice in choices:
                try:
                    st2, info = m.apply(st, choice)
                except RayRuntimeError as err:
                    record_terminal("Stuck", st, depth, error=f"{err.kind}: {err.message}")
                    continue
                edges += 1
                rule_counts[info.rule] += 1
                protocol_violations.extend(check_protocol_edge(st.heap, st2.heap))
                if check_wf:
                    conformance_violations.extend(
                        conformance.check_process_ok(st2.heap, st2.stacks)
                    )
                    conformance_violations.extend(conformance.type_step(m.class_table, st2, info))
                    _, evio = conformance.heap_evolves(st.heap, st2.heap, info.bound)
                    conformance_violations.extend(evio)
                _, key2 = canonicalize(st2)
                if key2 not in seen:
                    if len(seen) >= max_states:
                        truncated = "max-states"
                        break
                    seen[key2] = depth + 1
                    parents[key2] = (key, info.rule)
                    nxt.append((st2, key2))
            if truncated:
                break
        frontier = nxt
        depth += 1

    return ExploreResult(
        states=len(seen),
        edges=edges,
        terminals=list(terminals.values()),
        deadlock_traces=deadlock_traces,
        protocol_violations=sorted(set(protocol_violations)),
        conformance_violations=sorted(set(conformance_violations)),
        rule_counts=dict(rule_counts),
        truncated=truncated,
        max_depth_seen=depth,
    )
