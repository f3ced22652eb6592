"""Static typing: acceptance of the corpus, rejection shapes, aggregation,
and the publish-result rewrite."""

from pathlib import Path

import pytest

from raylang import (
    parse_program,
    publish_result_program,
    run_program,
    typecheck_program,
)
from raylang.explorer import event_projections

CORPUS = sorted((Path(__file__).parent.parent / "corpus").glob("*.ray"))


def errors_of(src):
    return typecheck_program(parse_program(src))


def kinds_of(src):
    return [d.kind for d in errors_of(src)]


@pytest.mark.parametrize("path", CORPUS, ids=lambda p: p.stem)
def test_corpus_is_well_typed(path):
    assert typecheck_program(parse_program(path.read_text())) == []


# ------------------------------------------------------------- acceptance

def test_await_produces_an_option():
    assert errors_of("""
let s = rasync[Int]() { let u = yield(1) in 0 } in
let m = await(s) in
let ok = isSome(m) in
let v = get(m) + 1 in
v
""") == []


def test_null_inhabits_class_types():
    assert errors_of("""
class C { var link: C }
let n = null in
let c = new C(n) in
let u = c.link = c in
c.link
""") == []


def test_branch_join_accepts_null_against_a_class():
    assert errors_of("""
class C { var n: Int }
let b = true in
let x = if (b) { new C(1) } else { null } in
let y = if (b) { null } else { new C(2) } in
0
""") == []


def test_observables_of_observables():
    assert errors_of("""
let inner = rasync[Int]() { let u = yield(1) in 0 } in
let outer = rasync[Observable[Int]]() { let u = yield(inner) in 0 } in
let m = await(outer) in
let s2 = get(m) in
let v = await(s2) in
isSome(v)
""") == []


def test_methods_type_against_declared_signatures():
    assert errors_of("""
class A {
  def add(x: Int, y: Int): Int = x + y
  def same(): A = this
}
let a = new A() in
let r = a.add(1, 2) in
let b = a.same() in
r
""") == []


# -------------------------------------------------------------- rejection

def test_yield_outside_rasync():
    assert kinds_of("let u = yield(1) in 0") == ["yield outside rasync"]


def test_methods_have_no_ambient_stream():
    # even when only ever called from inside a stream body
    assert "yield outside rasync" in kinds_of("""
class A { def leak(): Int = let u = yield(1) in 0 }
let s = rasync[Int]() { let a = new A() in a.leak() } in
0
""")


def test_yield_element_type_must_match():
    assert kinds_of("""
let s = rasync[Int]() { let u = yield(true) in 0 } in
0
""") == ["type mismatch"]


def test_await_requires_an_observable():
    assert kinds_of("let x = 1 in let m = await(x) in 0") == ["type mismatch"]


def test_condition_must_be_boolean():
    assert kinds_of("let x = if (1) { 2 } else { 3 } in x") == [
        "type mismatch"]
    assert kinds_of("let w = while (1) { 2 } in 0") == ["type mismatch"]


def test_incompatible_branches_do_not_join():
    assert kinds_of(
        "let b = true in let x = if (b) { 1 } else { true } in 0"
    ) == ["type mismatch"]


def test_arithmetic_rejects_booleans():
    assert kinds_of("let x = true + 1 in x") == ["type mismatch"]
    assert kinds_of("let x = !3 in x") == ["type mismatch"]
    assert kinds_of("let x = true < false in x") == ["type mismatch"]


def test_int_fields_reject_null():
    assert kinds_of("""
class C { var n: Int }
let c = new C(null) in
0
""") == ["type mismatch"]


def test_unknown_names_are_reported():
    assert kinds_of("x") == ["unbound variable"]
    assert kinds_of("let c = new Nope() in 0") == ["unknown type"]
    assert kinds_of("""
class C { var n: Int }
let c = new C(1) in
c.missing
""") == ["unknown member"]
    assert kinds_of("""
class C { var n: Int }
let c = new C(1) in
let r = c.m() in
0
""") == ["unknown member"]


def test_constructor_arity_is_checked():
    assert kinds_of("""
class C { var n: Int }
let c = new C() in
0
""") == ["type mismatch"]


def test_method_arity_is_checked():
    assert kinds_of("""
class A { def m(x: Int): Int = x }
let a = new A() in
let r = a.m() in
0
""") == ["type mismatch"]


def test_method_body_must_match_declared_return():
    assert kinds_of("""
class A { def m(): Int = true }
0
""") == ["type mismatch"]


def test_selection_on_null_is_static_error():
    assert kinds_of("let n = null in n.f") == ["type mismatch"]


def test_option_eliminators_require_options():
    assert kinds_of("let x = isSome(1) in 0") == ["type mismatch"]
    assert kinds_of("let x = get(1) in 0") == ["type mismatch"]


def test_rasync_sources_must_be_observables():
    assert kinds_of("""
let x = 1 in
let s = rasync[Int](x) { let u = yield(1) in 0 } in
0
""") == ["type mismatch"]


def test_field_and_method_types_must_be_known():
    assert kinds_of("class C { var f: Nope } 0") == ["unknown type"]
    assert kinds_of("class C { def m(): Nope = null } 0") == ["unknown type"]


def test_diagnostics_aggregate_one_per_unit():
    # each method body and the main expression report independently
    diags = errors_of("""
class A { def m(): Int = true }
class B { def n(): Int = null }
let x = yield(1) in
0
""")
    assert len(diags) == 3
    assert {d.kind for d in diags} == {
        "type mismatch", "yield outside rasync"}


def test_diagnostics_render_with_positions():
    (d,) = errors_of("let x = true + 1 in x")
    line, col = d.pos
    assert line == 1 and col > 1
    assert d.render("f.ray").startswith(f"f.ray:{line}:{col}: type mismatch")


# -------------------------------------------------- publish-result rewrite

def _emitted(program):
    res = run_program(program, policy="rr")
    assert res.outcome == "Finished"
    return dict(event_projections(res.events)[0])


def test_publish_result_appends_a_final_yield():
    p = parse_program("""
let s = rasync[Int]() { let u = yield(1) in 2 } in
0
""")
    q = publish_result_program(p)
    assert typecheck_program(q) == []
    assert _emitted(q)[0] == ("1", "2", "done")
    # without the rewrite the result value 2 is not published
    assert _emitted(p)[0] == ("1", "done")


def test_publish_result_skips_mismatched_bodies():
    p = parse_program("""
let s = rasync[Int]() { let u = yield(1) in true } in
0
""")
    q = publish_result_program(p)
    assert typecheck_program(q) == []
    assert _emitted(q)[0] == ("1", "done")


def test_publish_result_reaches_nested_bodies():
    p = parse_program("""
let outer = rasync[Boolean]() {
  let inner = rasync[Int]() { 7 } in
  true
} in
0
""")
    q = publish_result_program(p)
    assert typecheck_program(q) == []
    emitted = _emitted(q)
    assert emitted[1] == ("7", "done")
    assert emitted[0] == ("true", "done")
