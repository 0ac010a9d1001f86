import pytest
from hypothesis import given, settings, strategies as st

from tinysol.conformance import GenConfig, generate_program
from tinysol.parser import (
    DuplicateMember, ParseError, parse_contract, parse_expression, parse_interface,
    parse_program, parse_statement, parse_transaction, tokenize,
)
from tinysol.syntax import (
    BOOL, INT, OPERATORS, SKIP, THROW, AddrVal, Assign, Balance, BoolVal, Call, DeclVar, Field,
    For, If, IfaceT, IntVal, LThisField, LVar, MethodType, Op, RangeT, Seq, Val, Var,
    pretty_print,
)


def test_contract_without_interface():
    c = parse_contract("contract C { field p := 0; f(x) { skip } }")
    assert c.name == "C" and c.fields == (("p", IntVal(0)),)
    assert [(m.name, m.params, m.body) for m in c.methods] == [("f", ("x",), SKIP)]
    assert c.interface is None


def test_transaction():
    t = parse_transaction("A->C.f(3):(1,10)")
    assert (t.caller, t.target, t.method, t.args, t.amount, t.gas) == ("A", "C", "f", (IntVal(3),), 1, 10)


def test_negative_gas_rejected():
    with pytest.raises(ParseError):
        parse_transaction("A->C.f():(0,-1)")


def test_balance_assignment_is_a_syntax_error():
    with pytest.raises(SyntaxError):
        parse_statement("this.balance := 5")


@pytest.mark.parametrize("src", ["value := 1", "x.p := 1", "this := 2"])
def test_bad_assignment_targets(src):
    with pytest.raises(ParseError):
        parse_statement(src)


def test_interface_with_method_type():
    i = parse_interface("interface I { f(int)^10_1 : 20 }")
    assert i.get("f") == MethodType((INT,), 1, 10, 20)


def test_empty_interface_has_balance_and_send():
    assert set(parse_interface("interface J { }").members) == {"balance", "send"}


def test_duplicate_interface_member():
    with pytest.raises(DuplicateMember):
        parse_interface("interface K { f(int):20 f(bool):1 }")


def test_interface_field_types():
    i = parse_interface("interface I { p : int[0..5]; q : bool; r : I }")
    assert i.get("p") == RangeT(0, 5) and i.get("q") == BOOL and i.get("r") == IfaceT("I")


@pytest.mark.parametrize("src, ast", [
    ("10 - x", Op("-", (Val(IntVal(10)), Var("x")))),
    ("y.balance", Balance(Var("y"))),
    ("1 + 2 * 3", Op("+", (Val(IntVal(1)), Op("*", (Val(IntVal(2)), Val(IntVal(3))))))),
    ("1 - 2 - 3", Op("-", (Op("-", (Val(IntVal(1)), Val(IntVal(2)))), Val(IntVal(3))))),
    ("-3", Val(IntVal(-3))),
    ("-x", Op("neg", (Var("x"),))),
    ("not a and b or c", Op("or", (Op("and", (Op("not", (Var("a"),)), Var("b"))), Var("c")))),
    ("@C.p", Field(Val(AddrVal("C")), "p")),
])
def test_expressions(src, ast):
    assert parse_expression(src) == ast


def test_comparisons_do_not_chain():
    with pytest.raises(ParseError):
        parse_expression("1 < 2 < 3")


def test_error_position():
    with pytest.raises(ParseError) as info:
        parse_program("contract C {\n  f() { skip skip }\n}")
    assert info.value.line == 2


def test_contract_names_resolve_to_addresses():
    src = parse_program("contract D { g(C) { C.f():0 } }\ncontract C { f() { D.g(1):0 } }")
    d, c = src.contracts
    assert d.methods[0].body.target == Var("C")  # the parameter shadows the contract name
    assert c.methods[0].body.target == Val(AddrVal("D"))


def test_comments_and_empty_blocks():
    s = parse_statement("// nothing here\n{ }")
    assert s == SKIP
    assert [t.kind for t in tokenize("x // y")][:1] == ["ident"]


def test_throw_and_sequence():
    assert parse_statement("skip; throw") == Seq(SKIP, THROW)


# -- round trip ---------------------------------------------------------------------

names = st.sampled_from(["x", "y", "z", "acc", "k1"])


def exprs():
    leaf = st.one_of(
        st.integers(-20, 20).map(lambda n: Val(IntVal(n))),
        st.booleans().map(lambda b: Val(BoolVal(b))),
        names.map(Var),
        st.sampled_from(["C", "D"]).map(lambda a: Val(AddrVal(a))),
    )

    def grow(sub):
        binary = st.tuples(st.sampled_from([o for o, n in OPERATORS.items() if n == 2]), sub, sub)
        unary = st.tuples(st.sampled_from(["not", "neg"]), sub)
        return st.one_of(
            binary.map(lambda t: Op(t[0], (t[1], t[2]))),
            unary.map(lambda t: Op(t[0], (t[1],))),
            sub.map(Balance),
            st.tuples(sub, st.sampled_from(["p", "q"])).map(lambda t: Field(t[0], t[1])),
        )
    return st.recursive(leaf, grow, max_leaves=8)


types = st.one_of(st.just(INT), st.just(BOOL), st.just(IfaceT("I")),
                  st.tuples(st.integers(-5, 5), st.integers(0, 5)).map(lambda t: RangeT(t[0], t[0] + t[1])))


def stmts():
    leaf = st.one_of(
        st.just(SKIP), st.just(THROW),
        st.tuples(names, exprs()).map(lambda t: Assign(LVar(t[0]), t[1])),
        st.tuples(st.sampled_from(["p", "q"]), exprs()).map(lambda t: Assign(LThisField(t[0]), t[1])),
        st.tuples(exprs(), st.sampled_from(["f", "g"]), st.lists(exprs(), max_size=2), exprs())
          .map(lambda t: Call(t[0], t[1], tuple(t[2]), t[3])),
    )

    def grow(sub):
        return st.one_of(
            st.tuples(sub, sub).map(lambda t: Seq(*t)),
            st.tuples(exprs(), sub, sub).map(lambda t: If(*t)),
            st.tuples(exprs(), sub).map(lambda t: For(*t)),
            st.tuples(types, names, exprs(), sub).map(lambda t: DeclVar(*t)),
        )
    return st.recursive(leaf, grow, max_leaves=6)


@settings(max_examples=300, deadline=None)
@given(exprs())
def test_expression_round_trip(e):
    assert parse_expression(pretty_print(e)) == e


@settings(max_examples=300, deadline=None)
@given(stmts())
def test_statement_round_trip(s):
    assert parse_statement(pretty_print(s)) == s


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_generated_program_round_trip(seed):
    b = generate_program(GenConfig(seed=seed)).blockchain
    src = parse_program(pretty_print(b))
    assert (src.interfaces, src.contracts, src.txs) == (b.interfaces, b.contracts, b.txs)
