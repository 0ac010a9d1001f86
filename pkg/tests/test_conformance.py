import pytest
from hypothesis import given, settings, strategies as st

from tinysol.chain import genesis, transaction_config
from tinysol.conformance import (
    CounterexampleFound, ExtractionUndefined, GenConfig, check_subject_reduction, determinism_suite,
    enabled_rules, extract, generate_program, initial_typed_config, lemma_suites, program_chain,
    rollback_suite, subject_reduction_suite, type_config, type_stack,
)
from tinysol.env import VarEnv
from tinysol.machine import Config, ExcFrame, ScopeEnd, run
from tinysol.parser import parse_interface, parse_program, parse_statement
from tinysol.syntax import INT, SKIP, AddrVal, Blockchain, IfaceT, IntVal, RangeT
from tinysol.typesys import Gamma, check_declarations, top

GAMMA = Gamma.build([parse_interface("interface I { f(int)^10_1 : 20 }")], {})


def test_extract_declaration_and_scope_end():
    d = {"y": INT}
    assert extract(GAMMA, d, (parse_statement("var int[0..1] x := 0 in skip"),)) == {"y": INT, "x": RangeT(0, 1)}
    assert extract(GAMMA, {"y": INT, "x": INT}, (ScopeEnd("x"),)) == {"y": INT}
    assert extract(GAMMA, d, (SKIP,)) == d
    with pytest.raises(ExtractionUndefined):
        extract(GAMMA, d, (ScopeEnd("x"),))


def test_extract_call_uses_signature():
    d = {"y": IfaceT("I"), "this": top()}
    out = extract(GAMMA, d, (parse_statement("y.f(3):1"),), formals=lambda call: ["k"])
    assert out == {"this": IfaceT("I"), "k": INT, "value": RangeT(1, 10), "sender": top()}


def test_type_stack():
    assert type_stack(GAMMA, {}, ()) == 0
    assert type_stack(GAMMA, {}, (SKIP, ExcFrame("rte"))) == 0
    assert type_stack(GAMMA, {}, (SKIP, SKIP)) == 2


def test_type_config_gas_guard():
    assert type_config(GAMMA, {}, Config((SKIP,), {}, VarEnv(), 2))
    assert not type_config(GAMMA, {}, Config((SKIP,), {}, VarEnv(), 1))
    assert not type_config(GAMMA, {}, Config((SKIP,), {}, VarEnv(), 0))


WORKED = """
interface I { f(int)^10_1 : 20 }
interface L { go(int[1..5], I)^0_0 : 116 }
contract W : I { f(k) { for 3 do skip } }
contract D : L { balance := 10; go(x, y) { for x do y.f(x):1 } }
contract A { balance := 1000; }
A->D.go(5, W):(0,119)
"""


def worked():
    src = parse_program(WORKED)
    b = Blockchain(src.contracts, src.interfaces, src.txs)
    g = Gamma.from_program(src.contracts, src.interfaces)
    check_declarations(g, src.contracts, src.interfaces)
    cs = genesis(b)
    return g, cs, transaction_config(cs, src.txs[0])


def test_worked_example_passes_every_step():
    g, cs, c = worked()
    v = check_subject_reduction(g, cs.table, c, {"this": top()})
    assert v.status == "passed" and v.terminal.done and v.initial_bound == 118
    assert v.gas_used <= 118


def test_worked_loop_at_117():
    g, cs, _ = worked()
    delta = {"this": IfaceT("L"), "x": RangeT(1, 5), "y": IfaceT("I")}
    vars = VarEnv.of(("y", AddrVal("W"), IfaceT("I")), ("x", IntVal(5), RangeT(1, 5)),
                     ("this", AddrVal("D"), IfaceT("L")))
    c = Config((parse_statement("for x do y.f(x):1"),), cs.state, vars, 117)
    v = check_subject_reduction(g, cs.table, c, delta)
    assert v.status == "passed" and v.initial_bound == 116 and v.steps >= 16


def test_mistyped_config_is_skipped():
    g, cs, c = worked()
    c = Config(c.stack, c.state, c.vars, 118)
    assert check_subject_reduction(g, cs.table, c, {"this": top()}).status == "skipped"


def test_lying_signature_is_caught():
    # the table runs a longer body than the signature admits; the run must be flagged
    g, cs, c = worked()
    long_body = parse_statement("for 3 do { skip; skip; skip; skip; skip; skip; skip }")
    table = {**cs.table, "W": {**cs.table["W"], "f": cs.table["W"]["f"].__class__(
        ("k",), long_body, IfaceT("I"), cs.table["W"]["f"].sig)}}
    assert check_subject_reduction(g, table, c, {"this": top()}).status == "skipped"
    with pytest.raises(CounterexampleFound):
        _check_ignoring_table(g, table, c)


def _check_ignoring_table(g, table, c):
    from tinysol import conformance
    saved = conformance.agree_table
    conformance.agree_table = lambda *_: []
    try:
        return check_subject_reduction(g, table, c, {"this": top()})
    finally:
        conformance.agree_table = saved


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**9))
def test_generated_programs_check(seed):
    prog = generate_program(GenConfig(seed=seed))
    check_declarations(prog.gamma, prog.contracts, prog.interfaces)
    c, d = initial_typed_config(prog)
    assert type_config(prog.gamma, d, c)
    res = run(program_chain(prog).table, transaction_config(program_chain(prog), prog.with_gas(prog.min_gas).transaction))
    assert res.terminal.label != "oog"


def test_smallest_generator_config():
    prog = generate_program(GenConfig(seed=1, max_depth=1, max_methods=1, max_contracts=1))
    assert prog.contracts and prog.transaction.gas >= prog.min_gas


def test_generator_rejects_bad_config():
    with pytest.raises(ValueError):
        GenConfig(max_depth=0)


def test_enabled_rules_single():
    c = Config((SKIP,), {}, VarEnv(), 0)
    assert enabled_rules({}, c) == ["ss-oog"]
    assert enabled_rules({}, Config((SKIP,), {}, VarEnv(), 1)) == ["ss-skip"]
    assert enabled_rules({}, Config((), {}, VarEnv(), 1)) == []


def test_small_suites_pass():
    assert subject_reduction_suite(30, seed=5).ok
    assert rollback_suite(20, seed=5).ok
    assert determinism_suite(2000, seed=5).ok
    assert all(r.ok for r in lemma_suites(50, seed=5).values())


def test_safety_instance():
    from tinysol.machine import eval_expr
    from tinysol.parser import parse_expression
    for x in range(2, 6):
        v = eval_expr({}, VarEnv.of(("x", IntVal(x))), parse_expression("10 - x"))
        assert 5 <= v.i <= 8


def test_suites_detect_an_unsound_rule(monkeypatch):
    from tinysol import typesys
    from tinysol.syntax import RangeT as R

    sound = typesys.op_signature

    def off_by_one(op, args):
        t = sound(op, args)
        if op == "+" and isinstance(t, R) and t.lo < t.hi:
            return R(t.lo, t.hi - 1)
        return t

    monkeypatch.setattr(typesys, "op_signature", off_by_one)
    assert not lemma_suites(300, seed=1)["expression_safety"].ok
    assert not subject_reduction_suite(300, seed=1).ok
