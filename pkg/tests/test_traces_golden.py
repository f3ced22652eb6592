"""Hand-derived execution traces, one program per machine rule.

Every trace below was worked out on paper from the rule definitions and the
round-robin cursor discipline before being compared against the interpreter.
The expected entries are frozen; a mismatch means the machine diverged from
the derivation, not that the derivation should move.

Conventions the derivations rely on:
  * steps are numbered from 1, one trace entry per applied rule;
  * a halted synchronous frame leaves an empty stack behind, removed by a
    separate E-Exit step;
  * round-robin picks the first enabled choice whose stack index is at or
    after the cursor, wrapping to the first choice otherwise, and sets the
    cursor just past the chosen stack;
  * waiter queues print newest-first, so publishing onto a queue extends it
    on the left and awaiting consumes it on the right.
"""

import pytest

from raylang import (
    DEADLOCK,
    FINISHED,
    is_anf_program,
    normalize_program,
    parse_program,
    pp_program,
    run_program,
)


def entry(step, rule, stack, choice, note, *deltas):
    return {
        "step": step,
        "rule": rule,
        "stack": stack,
        "choice": choice,
        "heapDelta": list(deltas),
        "note": note,
    }


# Each value: (source, expected trace under round-robin, expected outcome).
GOLDEN = {
    "E-Var": (
        """
let x = 5 in
let y = x in
y
""",
        [
            entry(1, "E-Lit", 0, "schedule", "x = 5"),
            entry(2, "E-Var", 0, "schedule", "y = 5"),
            entry(3, "E-Halt", 0, "schedule", "halt 5"),
            entry(4, "E-Exit", 0, "exit", "stack removed"),
        ],
        FINISHED,
    ),
    "E-Field": (
        """
class C { var f: Int }
let a = 1 in
let o = new C(a) in
let x = o.f in
x
""",
        [
            entry(1, "E-Lit", 0, "schedule", "a = 1"),
            entry(2, "E-New", 0, "schedule", "o = o0", "alloc o0 = C{f=1}"),
            entry(3, "E-Field", 0, "schedule", "x = 1"),
            entry(4, "E-Halt", 0, "schedule", "halt 1"),
            entry(5, "E-Exit", 0, "exit", "stack removed"),
        ],
        FINISHED,
    ),
    "E-While": (
        # The body rebinds the loop flag, so the back edge sees false and
        # the trace shows both the taken and the refused branch.
        """
class K { var n: Int }
let z = 0 in
let k = new K(z) in
let c = true in
let b = while (c) {
  let one = 1 in
  let u = k.n = one in
  let c = false in
  c
} in
let r = k.n in
r
""",
        [
            entry(1, "E-Lit", 0, "schedule", "z = 0"),
            entry(2, "E-New", 0, "schedule", "k = o0", "alloc o0 = K{n=0}"),
            entry(3, "E-Lit", 0, "schedule", "c = true"),
            entry(4, "E-While", 0, "schedule", "while true"),
            entry(5, "E-Lit", 0, "schedule", "one = 1"),
            entry(6, "E-Assign", 0, "schedule", "o0.n = 1",
                  "o0: K{n=0} -> K{n=1}"),
            entry(7, "E-Lit", 0, "schedule", "c = false"),
            entry(8, "E-Var", 0, "schedule", "$while_1 = false"),
            entry(9, "E-While", 0, "schedule", "while false"),
            entry(10, "E-Lit", 0, "schedule", "b = false"),
            entry(11, "E-Field", 0, "schedule", "r = 1"),
            entry(12, "E-Halt", 0, "schedule", "halt 1"),
            entry(13, "E-Exit", 0, "exit", "stack removed"),
        ],
        FINISHED,
    ),
    "E-Cond": (
        """
let c = true in
let x = if (c) { let a = 1 in a } else { let b = 2 in b } in
x
""",
        [
            entry(1, "E-Lit", 0, "schedule", "c = true"),
            entry(2, "E-Cond", 0, "schedule", "if true"),
            entry(3, "E-Lit", 0, "schedule", "a = 1"),
            entry(4, "E-Var", 0, "schedule", "x = 1"),
            entry(5, "E-Halt", 0, "schedule", "halt 1"),
            entry(6, "E-Exit", 0, "exit", "stack removed"),
        ],
        FINISHED,
    ),
    "E-Assign": (
        """
class B { var v: Int }
let z = 5 in
let o = new B(z) in
let w = 9 in
let u = o.v = w in
u
""",
        [
            entry(1, "E-Lit", 0, "schedule", "z = 5"),
            entry(2, "E-New", 0, "schedule", "o = o0", "alloc o0 = B{v=5}"),
            entry(3, "E-Lit", 0, "schedule", "w = 9"),
            entry(4, "E-Assign", 0, "schedule", "o0.v = 9",
                  "o0: B{v=5} -> B{v=9}"),
            entry(5, "E-Halt", 0, "schedule", "halt 9"),
            entry(6, "E-Exit", 0, "exit", "stack removed"),
        ],
        FINISHED,
    ),
    "E-New": (
        """
class P { var a: Int; var b: Boolean }
let i = 3 in
let t = true in
let p = new P(i, t) in
p
""",
        [
            entry(1, "E-Lit", 0, "schedule", "i = 3"),
            entry(2, "E-Lit", 0, "schedule", "t = true"),
            entry(3, "E-New", 0, "schedule", "p = o0",
                  "alloc o0 = P{a=3,b=true}"),
            entry(4, "E-Halt", 0, "schedule", "halt o0"),
            entry(5, "E-Exit", 0, "exit", "stack removed"),
        ],
        FINISHED,
    ),
    "E-Method": (
        """
class A { def id(v: Int): Int = v }
let z = 4 in
let a = new A() in
let r = a.id(z) in
r
""",
        [
            entry(1, "E-Lit", 0, "schedule", "z = 4"),
            entry(2, "E-New", 0, "schedule", "a = o0", "alloc o0 = A{}"),
            entry(3, "E-Method", 0, "schedule", "call A.id"),
            entry(4, "E-Return", 0, "schedule", "return 4 -> r"),
            entry(5, "E-Halt", 0, "schedule", "halt 4"),
            entry(6, "E-Exit", 0, "exit", "stack removed"),
        ],
        FINISHED,
    ),
    "E-Return": (
        """
class A { def inc(v: Int): Int = let one = 1 in let w = v + one in w }
let z = 4 in
let a = new A() in
let r = a.inc(z) in
r
""",
        [
            entry(1, "E-Lit", 0, "schedule", "z = 4"),
            entry(2, "E-New", 0, "schedule", "a = o0", "alloc o0 = A{}"),
            entry(3, "E-Method", 0, "schedule", "call A.inc"),
            entry(4, "E-Lit", 0, "schedule", "one = 1"),
            entry(5, "E-PrimOp", 0, "schedule", "w = 5"),
            entry(6, "E-Return", 0, "schedule", "return 5 -> r"),
            entry(7, "E-Halt", 0, "schedule", "halt 5"),
            entry(8, "E-Exit", 0, "exit", "stack removed"),
        ],
        FINISHED,
    ),
    "E-RAsync": (
        # The body runs on top of the creating stack before the creator's
        # continuation resumes below it.
        """
let s = rasync[Int]() { let z = 0 in z } in
let d = 1 in
d
""",
        [
            entry(1, "E-RAsync", 0, "schedule", "new observable o0 sources=[]",
                  "alloc o0 = Obs[Int] running w=[] s=[]"),
            entry(2, "E-Lit", 0, "schedule", "z = 0"),
            entry(3, "E-RAsync-Return", 0, "return", "o0 done; resumed []",
                  "o0: Obs[Int] running w=[] s=[] -> Obs[Int] done s=[]"),
            entry(4, "E-Lit", 0, "schedule", "d = 1"),
            entry(5, "E-Halt", 0, "schedule", "halt 1"),
            entry(6, "E-Exit", 0, "exit", "stack removed"),
        ],
        FINISHED,
    ),
    "E-Await1": (
        # The consumer parks in an empty source; the source's return then
        # resumes it with None on a fresh stack.
        """
let s = rasync[Int]() {
  let c = rasync[Int](s) {
    let m = await(s) in
    let r = isSome(m) in
    r
  } in
  let z = 0 in
  z
} in
let d = 2 in
d
""",
        [
            entry(1, "E-RAsync", 0, "schedule", "new observable o0 sources=[]",
                  "alloc o0 = Obs[Int] running w=[] s=[]"),
            entry(2, "E-RAsync", 0, "schedule",
                  "new observable o1 sources=[o0]",
                  "o0: Obs[Int] running w=[] s=[] -> "
                  "Obs[Int] running w=[] s=[o1:[]]",
                  "alloc o1 = Obs[Int] running w=[] s=[]"),
            entry(3, "E-Await1", 0, "schedule", "o1 parks in o0",
                  "o0: Obs[Int] running w=[] s=[o1:[]] -> "
                  "Obs[Int] running w=[o1] s=[]"),
            entry(4, "E-Lit", 0, "schedule", "z = 0"),
            entry(5, "E-RAsync-Return", 0, "return", "o0 done; resumed [o1]",
                  "o0: Obs[Int] running w=[o1] s=[] -> "
                  "Obs[Int] done s=[o1:[]]"),
            entry(6, "E-PrimOp", 1, "schedule", "r = false"),
            entry(7, "E-Lit", 0, "schedule", "d = 2"),
            entry(8, "E-RAsync-Return", 1, "return", "o1 done; resumed []",
                  "o0: Obs[Int] done s=[o1:[]] -> Obs[Int] done s=[]",
                  "o1: Obs[Int] running w=[] s=[] -> Obs[Int] done s=[]"),
            entry(9, "E-Halt", 0, "schedule", "halt 2"),
            entry(10, "E-Exit", 1, "exit", "stack removed"),
            entry(11, "E-Exit", 0, "exit", "stack removed"),
        ],
        FINISHED,
    ),
    "E-Await2": (
        # Two publishes land in the subscriber's queue while it is busy;
        # the await then dequeues the oldest value from the tail.
        """
let s = rasync[Int]() {
  let c = rasync[Int](s) {
    let m1 = await(s) in
    let pad1 = 0 in
    let pad2 = 0 in
    let m2 = await(s) in
    let g = get(m2) in
    g
  } in
  let a = 1 in
  let b = 2 in
  let e = 3 in
  let p1 = yield(a) in
  let p2 = yield(b) in
  let p3 = yield(e) in
  p3
} in
let d = 4 in
d
""",
        [
            entry(1, "E-RAsync", 0, "schedule", "new observable o0 sources=[]",
                  "alloc o0 = Obs[Int] running w=[] s=[]"),
            entry(2, "E-RAsync", 0, "schedule",
                  "new observable o1 sources=[o0]",
                  "o0: Obs[Int] running w=[] s=[] -> "
                  "Obs[Int] running w=[] s=[o1:[]]",
                  "alloc o1 = Obs[Int] running w=[] s=[]"),
            entry(3, "E-Await1", 0, "schedule", "o1 parks in o0",
                  "o0: Obs[Int] running w=[] s=[o1:[]] -> "
                  "Obs[Int] running w=[o1] s=[]"),
            entry(4, "E-Lit", 0, "schedule", "a = 1"),
            entry(5, "E-Lit", 0, "schedule", "b = 2"),
            entry(6, "E-Lit", 0, "schedule", "e = 3"),
            entry(7, "E-Yield", 0, "yield", "publish 1 from o0; resumed [o1]",
                  "o0: Obs[Int] running w=[o1] s=[] -> "
                  "Obs[Int] running w=[] s=[o1:[]]"),
            entry(8, "E-Lit", 1, "schedule", "pad1 = 0"),
            entry(9, "E-Yield", 0, "yield", "publish 2 from o0; resumed []",
                  "o0: Obs[Int] running w=[] s=[o1:[]] -> "
                  "Obs[Int] running w=[] s=[o1:[2]]"),
            entry(10, "E-Lit", 1, "schedule", "pad2 = 0"),
            entry(11, "E-Yield", 0, "yield", "publish 3 from o0; resumed []",
                  "o0: Obs[Int] running w=[] s=[o1:[2]] -> "
                  "Obs[Int] running w=[] s=[o1:[3,2]]"),
            entry(12, "E-Await2", 1, "schedule", "m2 = Some(2) from o0 queue",
                  "o0: Obs[Int] running w=[] s=[o1:[3,2]] -> "
                  "Obs[Int] running w=[] s=[o1:[3]]"),
            entry(13, "E-RAsync-Return", 0, "return", "o0 done; resumed []",
                  "o0: Obs[Int] running w=[] s=[o1:[3]] -> "
                  "Obs[Int] done s=[o1:[3]]"),
            entry(14, "E-PrimOp", 1, "schedule", "g = 2"),
            entry(15, "E-Lit", 0, "schedule", "d = 4"),
            entry(16, "E-RAsync-Return", 1, "return", "o1 done; resumed []",
                  "o0: Obs[Int] done s=[o1:[3]] -> Obs[Int] done s=[]",
                  "o1: Obs[Int] running w=[] s=[] -> Obs[Int] done s=[]"),
            entry(17, "E-Halt", 0, "schedule", "halt 4"),
            entry(18, "E-Exit", 1, "exit", "stack removed"),
            entry(19, "E-Exit", 0, "exit", "stack removed"),
        ],
        FINISHED,
    ),
    "E-Await3": (
        # The source finishes with a value still queued; the await drains
        # it from the closed stream.
        """
let s = rasync[Int]() {
  let c = rasync[Int](s) {
    let m1 = await(s) in
    let pad1 = 0 in
    let pad2 = 0 in
    let m2 = await(s) in
    let g = get(m2) in
    g
  } in
  let a = 1 in
  let b = 2 in
  let p1 = yield(a) in
  let p2 = yield(b) in
  p2
} in
let d = 4 in
d
""",
        [
            entry(1, "E-RAsync", 0, "schedule", "new observable o0 sources=[]",
                  "alloc o0 = Obs[Int] running w=[] s=[]"),
            entry(2, "E-RAsync", 0, "schedule",
                  "new observable o1 sources=[o0]",
                  "o0: Obs[Int] running w=[] s=[] -> "
                  "Obs[Int] running w=[] s=[o1:[]]",
                  "alloc o1 = Obs[Int] running w=[] s=[]"),
            entry(3, "E-Await1", 0, "schedule", "o1 parks in o0",
                  "o0: Obs[Int] running w=[] s=[o1:[]] -> "
                  "Obs[Int] running w=[o1] s=[]"),
            entry(4, "E-Lit", 0, "schedule", "a = 1"),
            entry(5, "E-Lit", 0, "schedule", "b = 2"),
            entry(6, "E-Yield", 0, "yield", "publish 1 from o0; resumed [o1]",
                  "o0: Obs[Int] running w=[o1] s=[] -> "
                  "Obs[Int] running w=[] s=[o1:[]]"),
            entry(7, "E-Lit", 1, "schedule", "pad1 = 0"),
            entry(8, "E-Yield", 0, "yield", "publish 2 from o0; resumed []",
                  "o0: Obs[Int] running w=[] s=[o1:[]] -> "
                  "Obs[Int] running w=[] s=[o1:[2]]"),
            entry(9, "E-Lit", 1, "schedule", "pad2 = 0"),
            entry(10, "E-RAsync-Return", 0, "return", "o0 done; resumed []",
                  "o0: Obs[Int] running w=[] s=[o1:[2]] -> "
                  "Obs[Int] done s=[o1:[2]]"),
            entry(11, "E-Await3", 1, "schedule",
                  "m2 = Some(2) from done o0 queue",
                  "o0: Obs[Int] done s=[o1:[2]] -> Obs[Int] done s=[o1:[]]"),
            entry(12, "E-Lit", 0, "schedule", "d = 4"),
            entry(13, "E-PrimOp", 1, "schedule", "g = 2"),
            entry(14, "E-Halt", 0, "schedule", "halt 4"),
            entry(15, "E-RAsync-Return", 1, "return", "o1 done; resumed []",
                  "o0: Obs[Int] done s=[o1:[]] -> Obs[Int] done s=[]",
                  "o1: Obs[Int] running w=[] s=[] -> Obs[Int] done s=[]"),
            entry(16, "E-Exit", 0, "exit", "stack removed"),
            entry(17, "E-Exit", 0, "exit", "stack removed"),
        ],
        FINISHED,
    ),
    "E-Yield": (
        # Publishing onto a non-empty queue extends it on the newest side:
        # [8] grows to [9,8].
        """
let s = rasync[Int]() {
  let c = rasync[Int](s) {
    let m1 = await(s) in
    let pad1 = 0 in
    let pad2 = 0 in
    let pad3 = 0 in
    let g = get(m1) in
    g
  } in
  let a = 7 in
  let b = 8 in
  let e = 9 in
  let p1 = yield(a) in
  let p2 = yield(b) in
  let p3 = yield(e) in
  p3
} in
let d = 0 in
d
""",
        [
            entry(1, "E-RAsync", 0, "schedule", "new observable o0 sources=[]",
                  "alloc o0 = Obs[Int] running w=[] s=[]"),
            entry(2, "E-RAsync", 0, "schedule",
                  "new observable o1 sources=[o0]",
                  "o0: Obs[Int] running w=[] s=[] -> "
                  "Obs[Int] running w=[] s=[o1:[]]",
                  "alloc o1 = Obs[Int] running w=[] s=[]"),
            entry(3, "E-Await1", 0, "schedule", "o1 parks in o0",
                  "o0: Obs[Int] running w=[] s=[o1:[]] -> "
                  "Obs[Int] running w=[o1] s=[]"),
            entry(4, "E-Lit", 0, "schedule", "a = 7"),
            entry(5, "E-Lit", 0, "schedule", "b = 8"),
            entry(6, "E-Lit", 0, "schedule", "e = 9"),
            entry(7, "E-Yield", 0, "yield", "publish 7 from o0; resumed [o1]",
                  "o0: Obs[Int] running w=[o1] s=[] -> "
                  "Obs[Int] running w=[] s=[o1:[]]"),
            entry(8, "E-Lit", 1, "schedule", "pad1 = 0"),
            entry(9, "E-Yield", 0, "yield", "publish 8 from o0; resumed []",
                  "o0: Obs[Int] running w=[] s=[o1:[]] -> "
                  "Obs[Int] running w=[] s=[o1:[8]]"),
            entry(10, "E-Lit", 1, "schedule", "pad2 = 0"),
            entry(11, "E-Yield", 0, "yield", "publish 9 from o0; resumed []",
                  "o0: Obs[Int] running w=[] s=[o1:[8]] -> "
                  "Obs[Int] running w=[] s=[o1:[9,8]]"),
            entry(12, "E-Lit", 1, "schedule", "pad3 = 0"),
            entry(13, "E-RAsync-Return", 0, "return", "o0 done; resumed []",
                  "o0: Obs[Int] running w=[] s=[o1:[9,8]] -> "
                  "Obs[Int] done s=[o1:[9,8]]"),
            entry(14, "E-PrimOp", 1, "schedule", "g = 7"),
            entry(15, "E-Lit", 0, "schedule", "d = 0"),
            entry(16, "E-RAsync-Return", 1, "return", "o1 done; resumed []",
                  "o0: Obs[Int] done s=[o1:[9,8]] -> Obs[Int] done s=[]",
                  "o1: Obs[Int] running w=[] s=[] -> Obs[Int] done s=[]"),
            entry(17, "E-Halt", 0, "schedule", "halt 0"),
            entry(18, "E-Exit", 1, "exit", "stack removed"),
            entry(19, "E-Exit", 0, "exit", "stack removed"),
        ],
        FINISHED,
    ),
    "E-RAsync-Return": (
        # Two parked consumers; the source's return resumes both with None,
        # newest parker first, and re-adds them as drained subscribers.
        """
let s = rasync[Int]() {
  let c1 = rasync[Int](s) {
    let m1 = await(s) in
    let r1 = isSome(m1) in
    r1
  } in
  let c2 = rasync[Int](s) {
    let m2 = await(s) in
    let r2 = isSome(m2) in
    r2
  } in
  let z = 6 in
  z
} in
let d = 1 in
d
""",
        [
            entry(1, "E-RAsync", 0, "schedule", "new observable o0 sources=[]",
                  "alloc o0 = Obs[Int] running w=[] s=[]"),
            entry(2, "E-RAsync", 0, "schedule",
                  "new observable o1 sources=[o0]",
                  "o0: Obs[Int] running w=[] s=[] -> "
                  "Obs[Int] running w=[] s=[o1:[]]",
                  "alloc o1 = Obs[Int] running w=[] s=[]"),
            entry(3, "E-Await1", 0, "schedule", "o1 parks in o0",
                  "o0: Obs[Int] running w=[] s=[o1:[]] -> "
                  "Obs[Int] running w=[o1] s=[]"),
            entry(4, "E-RAsync", 0, "schedule",
                  "new observable o2 sources=[o0]",
                  "o0: Obs[Int] running w=[o1] s=[] -> "
                  "Obs[Int] running w=[o1] s=[o2:[]]",
                  "alloc o2 = Obs[Int] running w=[] s=[]"),
            entry(5, "E-Await1", 0, "schedule", "o2 parks in o0",
                  "o0: Obs[Int] running w=[o1] s=[o2:[]] -> "
                  "Obs[Int] running w=[o2,o1] s=[]"),
            entry(6, "E-Lit", 0, "schedule", "z = 6"),
            entry(7, "E-RAsync-Return", 0, "return",
                  "o0 done; resumed [o2,o1]",
                  "o0: Obs[Int] running w=[o2,o1] s=[] -> "
                  "Obs[Int] done s=[o2:[],o1:[]]"),
            entry(8, "E-PrimOp", 1, "schedule", "r2 = false"),
            entry(9, "E-PrimOp", 2, "schedule", "r1 = false"),
            entry(10, "E-Lit", 0, "schedule", "d = 1"),
            entry(11, "E-RAsync-Return", 1, "return", "o2 done; resumed []",
                  "o0: Obs[Int] done s=[o2:[],o1:[]] -> "
                  "Obs[Int] done s=[o1:[]]",
                  "o2: Obs[Int] running w=[] s=[] -> Obs[Int] done s=[]"),
            entry(12, "E-RAsync-Return", 2, "return", "o1 done; resumed []",
                  "o0: Obs[Int] done s=[o1:[]] -> Obs[Int] done s=[]",
                  "o1: Obs[Int] running w=[] s=[] -> Obs[Int] done s=[]"),
            entry(13, "E-Halt", 0, "schedule", "halt 1"),
            entry(14, "E-Exit", 1, "exit", "stack removed"),
            entry(15, "E-Exit", 0, "exit", "stack removed"),
            entry(16, "E-Exit", 0, "exit", "stack removed"),
        ],
        FINISHED,
    ),
    "E-Exit": (
        """
let x = 0 in
x
""",
        [
            entry(1, "E-Lit", 0, "schedule", "x = 0"),
            entry(2, "E-Halt", 0, "schedule", "halt 0"),
            entry(3, "E-Exit", 0, "exit", "stack removed"),
        ],
        FINISHED,
    ),
}

# Rules whose firing is shown by the traces above without needing a
# dedicated program of their own.
EXTRA = {
    "E-Lit": (
        """
let x = 7 in
x
""",
        [
            entry(1, "E-Lit", 0, "schedule", "x = 7"),
            entry(2, "E-Halt", 0, "schedule", "halt 7"),
            entry(3, "E-Exit", 0, "exit", "stack removed"),
        ],
        FINISHED,
    ),
    "E-PrimOp": (
        """
let a = 2 in
let b = 3 in
let c = a + b in
let t = c < a in
let n = !t in
n
""",
        [
            entry(1, "E-Lit", 0, "schedule", "a = 2"),
            entry(2, "E-Lit", 0, "schedule", "b = 3"),
            entry(3, "E-PrimOp", 0, "schedule", "c = 5"),
            entry(4, "E-PrimOp", 0, "schedule", "t = false"),
            entry(5, "E-PrimOp", 0, "schedule", "n = true"),
            entry(6, "E-Halt", 0, "schedule", "halt true"),
            entry(7, "E-Exit", 0, "exit", "stack removed"),
        ],
        FINISHED,
    ),
    "E-Await4": (
        # Awaiting a finished, drained stream delivers None in place.
        """
let s = rasync[Int]() {
  let c = rasync[Int](s) {
    let m = await(s) in
    let pad = 0 in
    let m2 = await(s) in
    let r = isSome(m2) in
    r
  } in
  let z = 1 in
  let p = yield(z) in
  p
} in
let d = 3 in
d
""",
        [
            entry(1, "E-RAsync", 0, "schedule", "new observable o0 sources=[]",
                  "alloc o0 = Obs[Int] running w=[] s=[]"),
            entry(2, "E-RAsync", 0, "schedule",
                  "new observable o1 sources=[o0]",
                  "o0: Obs[Int] running w=[] s=[] -> "
                  "Obs[Int] running w=[] s=[o1:[]]",
                  "alloc o1 = Obs[Int] running w=[] s=[]"),
            entry(3, "E-Await1", 0, "schedule", "o1 parks in o0",
                  "o0: Obs[Int] running w=[] s=[o1:[]] -> "
                  "Obs[Int] running w=[o1] s=[]"),
            entry(4, "E-Lit", 0, "schedule", "z = 1"),
            entry(5, "E-Yield", 0, "yield", "publish 1 from o0; resumed [o1]",
                  "o0: Obs[Int] running w=[o1] s=[] -> "
                  "Obs[Int] running w=[] s=[o1:[]]"),
            entry(6, "E-Lit", 1, "schedule", "pad = 0"),
            entry(7, "E-RAsync-Return", 0, "return", "o0 done; resumed []",
                  "o0: Obs[Int] running w=[] s=[o1:[]] -> "
                  "Obs[Int] done s=[o1:[]]"),
            entry(8, "E-Await4", 1, "schedule",
                  "m2 = None (o0 done, queue empty)"),
            entry(9, "E-Lit", 0, "schedule", "d = 3"),
            entry(10, "E-PrimOp", 1, "schedule", "r = false"),
            entry(11, "E-Halt", 0, "schedule", "halt 3"),
            entry(12, "E-RAsync-Return", 1, "return", "o1 done; resumed []",
                  "o0: Obs[Int] done s=[o1:[]] -> Obs[Int] done s=[]",
                  "o1: Obs[Int] running w=[] s=[] -> Obs[Int] done s=[]"),
            entry(13, "E-Exit", 0, "exit", "stack removed"),
            entry(14, "E-Exit", 0, "exit", "stack removed"),
        ],
        FINISHED,
    ),
}

ALL = {**GOLDEN, **EXTRA}


@pytest.mark.parametrize("rule", sorted(ALL))
def test_program_is_already_normal(rule):
    src, _, _ = ALL[rule]
    p = parse_program(src)
    assert is_anf_program(p)
    assert pp_program(normalize_program(p)) == pp_program(p)


@pytest.mark.parametrize("rule", sorted(ALL))
def test_trace_matches_derivation(rule):
    src, expected, outcome = ALL[rule]
    res = run_program(parse_program(src), policy="rr")
    assert res.outcome == outcome
    got = [t.json() for t in res.trace]
    assert got == expected
    assert res.steps == len(expected)


@pytest.mark.parametrize("rule", sorted(GOLDEN))
def test_featured_rule_fires(rule):
    _, expected, _ = GOLDEN[rule]
    assert any(t["rule"] == rule for t in expected)


def test_await2_dequeues_from_the_tail():
    """With queue [3,2] the await must take 2, leaving [3]."""
    _, expected, _ = GOLDEN["E-Await2"]
    (hit,) = [t for t in expected if t["rule"] == "E-Await2"]
    assert hit["note"] == "m2 = Some(2) from o0 queue"
    assert hit["heapDelta"] == [
        "o0: Obs[Int] running w=[] s=[o1:[3,2]] -> "
        "Obs[Int] running w=[] s=[o1:[3]]"
    ]


def test_yield_enqueues_at_the_head():
    """Publishing 9 onto queue [8] must give [9,8], not [8,9]."""
    _, expected, _ = GOLDEN["E-Yield"]
    hits = [t for t in expected if t["rule"] == "E-Yield"]
    assert hits[-1]["heapDelta"] == [
        "o0: Obs[Int] running w=[] s=[o1:[8]] -> "
        "Obs[Int] running w=[] s=[o1:[9,8]]"
    ]


def test_scheduling_is_visible_in_the_choice_field():
    """Every entry records which stack was picked and why; the multi-stack
    traces interleave two stacks under round-robin."""
    _, expected, _ = GOLDEN["E-Await2"]
    kinds = {t["choice"] for t in expected}
    assert kinds == {"schedule", "yield", "return", "exit"}
    assert {t["stack"] for t in expected} == {0, 1}
    for t in expected:
        assert t["choice"] in ("schedule", "yield", "return", "exit")


def test_strict_await_turns_await4_into_a_block():
    src, _, _ = EXTRA["E-Await4"]
    res = run_program(parse_program(src), policy="rr", strict_await=True)
    assert res.outcome == DEADLOCK
    assert all(t["rule"] != "E-Await4" for t in (e.json() for e in res.trace))
