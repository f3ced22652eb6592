"""Executable conformance checks over machine states.

Four layers:

- well-formedness: per-frame, per-stack, whole-heap, and whole-process
  judgments (owner running, no double parking, subscriptions only to
  declared sources, owner ids disjoint across stacks);
- heap evolution: every machine step may change the heap only in one of a
  small set of shapes per object.  The default ("extended") relation is the
  exact set of shapes the machine produces; `strict=True` narrows some
  clauses to a declarative superset/subset kept for comparison runs, which
  flags three legal step shapes (a parking await removes the parker's
  subscription entry, a finishing observable rewrites its subscriber list
  and unsubscribes from its sources);
- residual typing (`type_state`): every reachable state is re-typed from
  its values: frames get an environment from their locals, heap cells are
  checked against declared field and element types, and a stack's result
  type is the residual type of its bottom frame;
- `verify_run`: drives a program under a policy and applies all checks at
  every step, reporting per-rule counts and violations.

All checks return lists of violation strings prefixed with the judgment
name; empty means the state (or step) conforms.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .ast import Type
from .errors import RayError, RayRuntimeError
from .runtime import (
    AsyncLabel, DoneState, Frame, Heap, ObsObj, PlainObj, RunningState,
    Stack, Sub, Value, find_sub, obs_ids_stack, render_value, value_type,
    waiter_owner, waiter_shape,
)
from .semantics import (
    Machine, State, StepInfo, make_policy, DEADLOCK, FINISHED, STEP_LIMIT, STUCK,
)
from .typecheck import ClassTable, TypeEnv, compat, type_expr

# --------------------------------------------------------------- helpers


def waiter_ids(rs: RunningState) -> list[int]:
    return [waiter_owner(f) for f in rs.waiters]


def _subs_of(obj) -> tuple[Sub, ...] | None:
    if isinstance(obj, ObsObj):
        return obj.state.subs
    return None


def _is_running(h: Heap, oid: int) -> bool:
    return 0 <= oid < len(h) and isinstance(h[oid], ObsObj) and h[oid].running


# ------------------------------------------------------- well-formedness

def check_frame_ok(h: Heap, f: Frame, where: str = "frame") -> list[str]:
    """A stack frame does not interfere with the heap's bookkeeping."""
    if not isinstance(f.label, AsyncLabel):
        return []
    out: list[str] = []
    o = f.label.owner
    if not _is_running(h, o):
        out.append(f"af-ok: {where} owns o{o}, which is not a running observable")
    for o2, obj in enumerate(h):
        if isinstance(obj, ObsObj) and isinstance(obj.state, RunningState):
            if o in waiter_ids(obj.state):
                out.append(f"af-ok: o{o} is parked in o{o2} while its body is on a stack")
        subs = _subs_of(obj)
        if subs is not None and find_sub(subs, o) is not None and o2 not in f.label.sources:
            out.append(f"af-ok: o{o} is subscribed to o{o2}, which is not one of its sources")
    return out


def check_stack_ok(h: Heap, fs: Stack, where: str = "stack") -> list[str]:
    out: list[str] = []
    seen: set[int] = set()
    for i, f in enumerate(fs):
        out.extend(check_frame_ok(h, f, f"{where} frame {i}"))
        if isinstance(f.label, AsyncLabel):
            if f.label.owner in seen:
                out.append(f"fs-ok: o{f.label.owner} owned by two frames in one {where}")
            seen.add(f.label.owner)
    return out


def check_heap_ok(h: Heap) -> list[str]:
    out: list[str] = []
    parked_anywhere: dict[int, int] = {}
    for oid, obj in enumerate(h):
        if not isinstance(obj, ObsObj):
            continue
        if isinstance(obj.state, RunningState):
            seen: set[int] = set()
            for f in obj.state.waiters:
                try:
                    waiter_shape(f)
                except RayRuntimeError as err:
                    out.append(f"roho-ok: malformed waiter in o{oid}: {err.message}")
                    continue
                w = waiter_owner(f)
                if w in seen:
                    out.append(f"roho-ok: o{w} parked twice in o{oid}")
                seen.add(w)
                if not _is_running(h, w):
                    out.append(f"roho-ok: waiter o{w} of o{oid} is not a running observable")
                if w in parked_anywhere:
                    out.append(
                        f"h-ok: o{w} parked in both o{parked_anywhere[w]} and o{oid}"
                    )
                else:
                    parked_anywhere[w] = oid
        # artifact extension: subscription entries always name live consumers
        subs = _subs_of(obj)
        if subs is not None:
            sids: set[int] = set()
            for s in subs:
                if s.sid in sids:
                    out.append(f"sub-ok: o{s.sid} has two subscription entries in o{oid}")
                sids.add(s.sid)
                if not _is_running(h, s.sid):
                    out.append(
                        f"sub-ok: subscriber o{s.sid} of o{oid} is not a running observable"
                    )
    return out


def check_process_ok(h: Heap, stacks: tuple[Stack, ...]) -> list[str]:
    out = check_heap_ok(h)
    owned: dict[int, int] = {}
    for si, fs in enumerate(stacks):
        out.extend(check_stack_ok(h, fs, f"stack {si}"))
        for o in obs_ids_stack(fs):
            if o in owned:
                out.append(f"proc-ok: o{o} owned by frames in stacks {owned[o]} and {si}")
            else:
                owned[o] = si
    return out


def check_state(state: State) -> list[str]:
    return check_process_ok(state.heap, state.stacks)


# --------------------------------------------------------- heap evolution

@dataclass(frozen=True)
class EvolutionWitness:
    oid: int
    kind: str


def _strip(subs: tuple[Sub, ...], dying: set[int]) -> tuple[Sub, ...]:
    return tuple(s for s in subs if s.sid not in dying)


def _classify_running(
    oid: int, old: ObsObj, new: ObsObj, bound: frozenset[int], dying: set[int]
) -> tuple[str | None, str | None]:
    """Extended-mode classification of a running-to-running change.

    Returns (witness kind, violation message)."""
    ow, os_ = old.state.waiters, old.state.subs
    nw, ns = new.state.waiters, new.state.subs
    if ow == nw and os_ == ns:
        return "Unchanged", None

    stripped = _strip(os_, dying)
    if nw == ow and ns == stripped and os_ != stripped:
        return "UnsubscribedFrom", None

    if nw == ow:
        # one fresh empty subscription entry (a new observable subscribed)
        extra = [s for s in ns if find_sub(os_, s.sid) is None]
        kept = tuple(s for s in ns if find_sub(os_, s.sid) is not None)
        if len(extra) == 1 and extra[0].queue == () and kept == os_:
            return "RunningAddedSubscriber", None
        # one entry consumed from the queue tail (a subscriber took a value)
        if len(ns) == len(os_) and all(a.sid == b.sid for a, b in zip(os_, ns)):
            changed = [(a, b) for a, b in zip(os_, ns) if a.queue != b.queue]
            if len(changed) == 1 and changed[0][0].queue[:-1] == changed[0][1].queue:
                return "RunningQueueStep", None

    if nw == ():
        # publish: waiters flushed, every retained queue grew by one common
        # head, flushed waiters re-listed as fresh empty entries
        retained, readded = ns[: len(os_)], ns[len(os_):]
        if len(ns) == len(os_) + len(ow) and all(
            a.sid == b.sid for a, b in zip(os_, retained)
        ):
            heads = {b.queue[0] for b in retained if b.queue}
            grown_ok = all(b.queue and b.queue[1:] == a.queue for a, b in zip(os_, retained))
            if grown_ok and len(heads) <= 1:
                want = [waiter_owner(f) for f in ow]
                if [s.sid for s in readded] == want and all(s.queue == () for s in readded):
                    return "RunningFlushed", None

    if len(nw) > len(ow) and nw[len(nw) - len(ow):] == ow:
        # grew waiters: each newcomer parked, dropping its (empty) entry
        added = nw[: len(nw) - len(ow)]
        added_ids = [waiter_owner(f) for f in added]
        old_ids = waiter_ids(old.state)
        if any(a in old_ids for a in added_ids):
            return None, f"evolution: o{oid} gained an already-parked waiter"
        if not set(added_ids) <= bound:
            return None, (
                f"evolution: o{oid} gained waiters {sorted(set(added_ids) - bound)} "
                "outside the stepping stack's observables"
            )
        expect = tuple(s for s in os_ if s.sid not in added_ids)
        removed = [s for s in os_ if s.sid in added_ids]
        if ns == expect and all(s.queue == () for s in removed):
            return "RunningAddedWaiters", None
        return None, f"evolution: o{oid} gained waiters but subscriptions changed oddly"

    return None, f"evolution: o{oid} changed in no recognized shape"


def _classify_strict_running(
    oid: int, old: ObsObj, new: ObsObj, bound: frozenset[int]
) -> tuple[str | None, str | None]:
    ow, os_ = old.state.waiters, old.state.subs
    nw, ns = new.state.waiters, new.state.subs
    if ow == nw and os_ == ns:
        return "Unchanged", None
    if nw == ow:
        extra = [s for s in ns if find_sub(os_, s.sid) is None]
        kept = tuple(s for s in ns if find_sub(os_, s.sid) is not None)
        if len(extra) == 1 and extra[0].queue == () and kept == os_:
            return "RunningAddedSubscriber", None
    if nw == () and [s.sid for s in ns] == [s.sid for s in os_]:
        return "RunningFlushed", None  # queues may change arbitrarily here
    if len(nw) > len(ow) and nw[len(nw) - len(ow):] == ow:
        added_ids = [waiter_owner(f) for f in nw[: len(nw) - len(ow)]]
        if (
            not any(a in waiter_ids(old.state) for a in added_ids)
            and set(added_ids) <= bound
            and ns == os_
        ):
            return "RunningAddedWaiters", None
    return None, f"evolution(strict): o{oid} changed in no declared shape"


def heap_evolves(
    old: Heap, new: Heap, bound: frozenset[int], strict: bool = False
) -> tuple[list[EvolutionWitness], list[str]]:
    """Check one step's heap change object by object."""
    wits: list[EvolutionWitness] = []
    out: list[str] = []
    if len(new) < len(old):
        return wits, [f"evolution: heap shrank from {len(old)} to {len(new)} objects"]

    dying = {
        oid
        for oid in range(len(old))
        if isinstance(old[oid], ObsObj)
        and isinstance(old[oid].state, RunningState)
        and isinstance(new[oid], ObsObj)
        and isinstance(new[oid].state, DoneState)
    }

    for oid in range(len(old)):
        o_, n_ = old[oid], new[oid]
        if isinstance(o_, PlainObj):
            if not isinstance(n_, PlainObj) or n_.cls != o_.cls:
                out.append(f"evolution: o{oid} changed class")
            elif tuple(k for k, _ in n_.fields) != tuple(k for k, _ in o_.fields):
                out.append(f"evolution: o{oid} changed its field set")
            elif n_.fields == o_.fields:
                wits.append(EvolutionWitness(oid, "Unchanged"))
            else:
                wits.append(EvolutionWitness(oid, "PlainUpdated"))
            continue
        assert isinstance(o_, ObsObj)
        if not isinstance(n_, ObsObj) or n_.elem != o_.elem:
            out.append(f"evolution: o{oid} changed from an observable into something else")
            continue
        match o_.state, n_.state:
            case (DoneState(os_), RunningState()):
                out.append(f"evolution: o{oid} reverted from done to running")
            case (DoneState(os_), DoneState(ns)):
                if os_ == ns:
                    wits.append(EvolutionWitness(oid, "Unchanged"))
                    continue
                if not strict and ns == _strip(os_, dying) and os_ != _strip(os_, dying):
                    wits.append(EvolutionWitness(oid, "UnsubscribedFrom"))
                    continue
                same_dom = len(ns) == len(os_) and all(
                    a.sid == b.sid for a, b in zip(os_, ns)
                )
                changed = [(a, b) for a, b in zip(os_, ns) if a.queue != b.queue] if same_dom else []
                if strict:
                    if same_dom and len(changed) == 1:
                        wits.append(EvolutionWitness(oid, "DoneQueueStep"))
                    else:
                        out.append(f"evolution(strict): o{oid} done-state changed in no declared shape")
                else:
                    if same_dom and len(changed) == 1 and changed[0][0].queue[:-1] == changed[0][1].queue:
                        wits.append(EvolutionWitness(oid, "DoneQueueStep"))
                    else:
                        out.append(f"evolution: o{oid} done-state changed in no recognized shape")
            case (RunningState(), DoneState(ns)):
                os_, ow = o_.state.subs, o_.state.waiters
                if strict:
                    if ns == os_:
                        wits.append(EvolutionWitness(oid, "BecameDone"))
                    else:
                        out.append(
                            f"evolution(strict): o{oid} finished but rewrote its subscriber list"
                        )
                    continue
                retained, readded = ns[: len(os_)], ns[len(os_):]
                want = [waiter_owner(f) for f in ow]
                if (
                    retained == os_
                    and [s.sid for s in readded] == want
                    and all(s.queue == () for s in readded)
                ):
                    wits.append(EvolutionWitness(oid, "BecameDone"))
                else:
                    out.append(f"evolution: o{oid} finished in no recognized shape")
            case (RunningState(), RunningState()):
                if strict:
                    kind, msg = _classify_strict_running(oid, o_, n_, bound)
                else:
                    kind, msg = _classify_running(oid, o_, n_, bound, dying)
                if kind:
                    wits.append(EvolutionWitness(oid, kind))
                if msg:
                    out.append(msg)

    for oid in range(len(old), len(new)):
        obj = new[oid]
        if isinstance(obj, ObsObj):
            if not (isinstance(obj.state, RunningState) and obj.state.waiters == () and obj.state.subs == ()):
                out.append(f"evolution: new observable o{oid} not born running and empty")
                continue
        wits.append(EvolutionWitness(oid, "New"))
    return wits, out


# --------------------------------------------------------- residual typing

def frame_env(ct: ClassTable, h: Heap, f: Frame) -> TypeEnv:
    gamma = tuple((n, value_type(h, v)) for n, v in f.locals)
    delta: tuple[Type, ...] = ()
    if isinstance(f.label, AsyncLabel):
        owner = h[f.label.owner]
        assert isinstance(owner, ObsObj)
        delta = (owner.elem,)
    return TypeEnv(gamma, delta, residual=True)


class _TypeMemo:
    """Per-run cache of residual frame typing.

    Keys use local TYPES rather than values: within one run a heap id's
    class and element type never change once allocated, so two frames with
    the same expression and type-identical locals type alike no matter how
    the values move.  Loop-heavy runs hit the cache on nearly every step.
    Type errors are cached too (as the error object) and re-raised."""

    __slots__ = ("frames",)

    def __init__(self):
        self.frames: dict = {}

    def frame_type(self, ct: ClassTable, h: Heap, f: Frame, ret_bind: Type | None) -> Type:
        env = frame_env(ct, h, f)
        key = (f.expr, env.gamma, env.delta, f.ret_var, ret_bind)
        got = self.frames.get(key)
        if got is None:
            e2 = env
            if f.ret_var is not None and ret_bind is not None:
                e2 = env.bind(f.ret_var, ret_bind)
            try:
                got = type_expr(e2, ct, f.expr)
            except RayError as err:
                got = err
            self.frames[key] = got
        if isinstance(got, RayError):
            raise got
        return got


def stack_sigma(ct: ClassTable, h: Heap, fs: Stack, memo: _TypeMemo | None = None) -> Type:
    """Residual result type of a stack: its bottom frame's type, with each
    pending return target bound at the type of the frame above."""
    prev: Type | None = None
    for f in fs:
        if f.ret_var is not None and prev is None:
            raise RayRuntimeError("frame has a return target but nothing above")
        if memo is not None:
            prev = memo.frame_type(ct, h, f, prev if f.ret_var is not None else None)
        else:
            env = frame_env(ct, h, f)
            if f.ret_var is not None:
                env = env.bind(f.ret_var, prev)
            prev = type_expr(env, ct, f.expr)
    if prev is None:
        raise RayRuntimeError("empty stack has no result type")
    return prev


def _check_stack_types(
    ct: ClassTable, h: Heap, fs: Stack, where: str, memo: _TypeMemo | None = None
) -> list[str]:
    try:
        stack_sigma(ct, h, fs, memo)
    except RayError as err:
        return [f"type-state: {where}: {err.message}"]
    return []


def _check_obj_types(ct: ClassTable, h: Heap, oid: int, memo: _TypeMemo | None = None) -> list[str]:
    out: list[str] = []
    obj = h[oid]
    if isinstance(obj, PlainObj):
        for fd in ct.fields(obj.cls):
            v = obj.get_field(fd.name)
            if v is None:
                out.append(f"type-state: o{oid} lacks field {fd.name}")
                continue
            vt = value_type(h, v)
            if not compat(fd.type, vt):
                out.append(
                    f"type-state: o{oid}.{fd.name} holds {render_value(v)} : {vt}, declared {fd.type}"
                )
        return out
    assert isinstance(obj, ObsObj)
    for s in obj.state.subs:
        for v in s.queue:
            vt = value_type(h, v)
            if not compat(obj.elem, vt):
                out.append(
                    f"type-state: queue of o{s.sid} in o{oid} holds {render_value(v)} : {vt}, "
                    f"element type {obj.elem}"
                )
    if isinstance(obj.state, RunningState):
        for i, f in enumerate(obj.state.waiters):
            out.extend(_check_stack_types(ct, h, (f,), f"waiter {i} of o{oid}", memo))
    return out


def type_state(ct: ClassTable, state: State, memo: _TypeMemo | None = None) -> list[str]:
    """Re-type a whole machine state from its values."""
    out: list[str] = []
    for oid in range(len(state.heap)):
        out.extend(_check_obj_types(ct, state.heap, oid, memo))
    for si, fs in enumerate(state.stacks):
        if fs:
            out.extend(_check_stack_types(ct, state.heap, fs, f"stack {si}", memo))
    return out


def _touched_oids(delta: tuple[str, ...]) -> list[int]:
    oids = []
    for line in delta:
        head = line.split(":", 1)[0]
        if head.startswith("alloc "):
            head = head[len("alloc "):].split(" ", 1)[0]
        if head.startswith("o") and head[1:].isdigit():
            oids.append(int(head[1:]))
    return oids


def type_step(ct: ClassTable, state: State, info: StepInfo, memo: _TypeMemo | None = None) -> list[str]:
    """Incremental residual typing after one step: only the stepped stack,
    any stacks it spawned, and the heap objects it touched."""
    out: list[str] = []
    for oid in _touched_oids(info.heap_delta):
        if oid < len(state.heap):
            out.extend(_check_obj_types(ct, state.heap, oid, memo))
    if info.post_stack is not None and state.stacks[info.post_stack]:
        out.extend(
            _check_stack_types(
                ct, state.heap, state.stacks[info.post_stack], f"stack {info.post_stack}", memo
            )
        )
    for si in info.new_stacks:
        out.extend(_check_stack_types(ct, state.heap, state.stacks[si], f"stack {si}", memo))
    return out


# ----------------------------------------------------------------- harness

def verify_run(
    program,
    policy: str = "rr",
    seed: int = 0,
    max_steps: int = 10000,
    strict_await: bool = False,
    strict_evolution: bool = False,
    mutation: str | None = None,
    machine: Machine | None = None,
) -> dict:
    """Run one schedule, checking well-formedness, residual typing, heap
    evolution, stack-result-type preservation, and done monotonicity at
    every step.  Returns a JSON-ready report."""
    m = machine if machine is not None else Machine(
        program, strict_await=strict_await, mutation=mutation
    )
    ct = m.class_table
    pol = make_policy(policy, seed)
    st = m.initial_state()
    memo = _TypeMemo()
    rule_counts: Counter[str] = Counter()
    violations: list[dict] = []
    trace: list[dict] = []

    def flag(step: int, rule: str, kind: str, msgs: list[str]):
        for msg in msgs:
            violations.append({"step": step, "rule": rule, "kind": kind, "message": msg})

    flag(0, "initial", "well-formedness", check_state(st))
    flag(0, "initial", "type-preservation", type_state(ct, st, memo))

    steps = 0
    outcome = FINISHED
    error = None
    while True:
        if not st.stacks:
            outcome = FINISHED
            break
        choices = m.enabled_choices(st)
        if not choices:
            outcome = DEADLOCK
            break
        if steps >= max_steps:
            outcome = STEP_LIMIT
            break
        choice = pol.choose(choices, st)
        try:
            st2, info = m.apply(st, choice)
        except RayRuntimeError as err:
            outcome = STUCK
            error = f"{err.kind}: {err.message}"
            break
        steps += 1
        rule_counts[info.rule] += 1
        trace.append(
            {"step": steps, "rule": info.rule, "stack": info.stack, "note": info.note,
             "heapDelta": list(info.heap_delta)}
        )

        flag(steps, info.rule, "well-formedness", check_process_ok(st2.heap, st2.stacks))
        flag(steps, info.rule, "type-preservation", type_step(ct, st2, info, memo))
        _, evio = heap_evolves(st.heap, st2.heap, info.bound, strict_evolution)
        flag(steps, info.rule, "heap-evolution", evio)
        for oid in range(len(st.heap)):
            o_, n_ = st.heap[oid], st2.heap[oid]
            if (
                isinstance(o_, ObsObj) and isinstance(o_.state, DoneState)
                and isinstance(n_, ObsObj) and isinstance(n_.state, RunningState)
            ):
                flag(steps, info.rule, "protocol", [f"protocol: o{oid} reverted from done to running"])

        if info.post_stack is not None and info.pre_stack and st2.stacks[info.post_stack]:
            try:
                pre_sig = stack_sigma(ct, st.heap, info.pre_stack, memo)
                post_sig = stack_sigma(ct, st2.heap, st2.stacks[info.post_stack], memo)
                if not compat(pre_sig, post_sig):
                    flag(
                        steps, info.rule, "type-preservation",
                        [f"type-state: stack result type changed from {pre_sig} to {post_sig}"],
                    )
            except RayError:
                pass  # already reported by type_step on the post state
        st = st2

    report = {
        "policy": policy,
        "seed": seed,
        "outcome": outcome,
        "steps": steps,
        "ruleCounts": dict(sorted(rule_counts.items())),
        "violations": violations,
        "ok": not violations,
    }
    if error is not None:
        report["error"] = error
    if violations:
        report["trace"] = trace
    return report


def verify_program(
    program,
    policies: int = 10,
    max_steps: int = 10000,
    strict_await: bool = False,
    strict_evolution: bool = False,
    mutation: str | None = None,
) -> dict:
    """Round-robin plus `policies` random schedules; merged report."""
    runs = [
        verify_run(
            program, "rr", 0, max_steps, strict_await, strict_evolution, mutation
        )
    ]
    for seed in range(policies):
        runs.append(
            verify_run(
                program, "random", seed, max_steps, strict_await, strict_evolution, mutation
            )
        )
    merged_counts: Counter[str] = Counter()
    total_violations = 0
    for r in runs:
        merged_counts.update(r["ruleCounts"])
        total_violations += len(r["violations"])
    return {
        "runs": runs,
        "ruleCounts": dict(sorted(merged_counts.items())),
        "violationCount": total_violations,
        "ok": total_violations == 0,
    }
