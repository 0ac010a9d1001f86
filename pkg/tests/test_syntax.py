import pytest

from tinysol.syntax import (
    BOOL, INT, SKIP, AddrVal, Call, ContractDecl, DuplicateName, For, IfaceT, IntVal, LThisField,
    MethodDecl, MethodType, Op, RangeT, ReservedName, Seq, Val, Var, free_vars, int_max,
    make_interface, pretty_print, seq, send_type, top_interface, validate_contract_shape,
)


def test_well_formed_contract():
    c = ContractDecl("C", 0, (("p", IntVal(0)),), (MethodDecl("f", ("x",), SKIP),))
    validate_contract_shape(c)


def test_user_balance_field_is_reserved():
    with pytest.raises(ReservedName):
        validate_contract_shape(ContractDecl("C", 0, (("balance", IntVal(1)),)))


def test_duplicate_method_names():
    c = ContractDecl("C", methods=(MethodDecl("f", (), SKIP), MethodDecl("f", ("x",), SKIP)))
    with pytest.raises(DuplicateName):
        validate_contract_shape(c)


def test_balance_cannot_be_an_assignment_target():
    with pytest.raises(ReservedName):
        LThisField("balance")


@pytest.mark.parametrize("node, text", [
    (SKIP, "skip"),
    (For(Var("x"), Call(Var("y"), "f", (Var("x"),), Val(IntVal(1)))), "for x do y.f(x):1"),
    (Op("-", (Val(IntVal(10)), Var("x"))), "10 - x"),
    (Op("+", (Val(IntVal(1)), Op("*", (Val(IntVal(2)), Val(IntVal(3)))))), "1 + 2 * 3"),
    (Op("*", (Op("+", (Val(IntVal(1)), Val(IntVal(2)))), Val(IntVal(3)))), "(1 + 2) * 3"),
])
def test_pretty_print(node, text):
    assert pretty_print(node) == text


def test_range_needs_ordered_bounds():
    with pytest.raises(ValueError):
        RangeT(3, 1)


def test_operator_arity_checked():
    with pytest.raises(ValueError):
        Op("+", (Val(IntVal(1)),))


def test_interfaces_carry_balance_and_send():
    i = make_interface("J")
    assert i.get("balance") == INT
    assert i.get("send") == send_type()
    assert top_interface().members == i.members


def test_send_type_uses_int_max(monkeypatch):
    monkeypatch.setenv("TINYSOL_INT_MAX", "1000")
    assert int_max() == 1000
    assert send_type() == MethodType((), 0, 1000, 1)


def test_seq_helper_and_free_vars():
    s = seq(SKIP, For(Var("x"), SKIP), SKIP)
    assert isinstance(s, Seq)
    assert free_vars(s) == {"x"}
    assert seq() == SKIP


def test_values_are_typed():
    with pytest.raises(TypeError):
        IntVal(True)
    assert AddrVal("C") != IntVal(0)
    assert IfaceT("I") != BOOL
