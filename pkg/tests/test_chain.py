import json

import pytest

from tinysol.chain import (
    SnapshotError, exec_transaction, genesis, restore, run_blockchain, snapshot,
)
from tinysol.env import DuplicateContract
from tinysol.parser import parse_program
from tinysol.syntax import Blockchain, IntVal


def chain(text):
    src = parse_program(text)
    return Blockchain(src.contracts, src.interfaces, src.txs)


BASE = "contract C { f() { skip } g() { this.p := 1; throw } field p := 0; }\ncontract A { balance := 100; }\n"


def test_empty_genesis():
    cs = genesis(Blockchain((), (), ()))
    assert cs.state == {} and cs.pending == ()


def test_genesis_keeps_pending_order():
    cs = genesis(chain(BASE + "A->C.f():(0,10)\nA->C.g():(0,10)"))
    assert set(cs.state) == {"C", "A"} and [t.method for t in cs.pending] == ["f", "g"]


def test_duplicate_contracts():
    with pytest.raises(DuplicateContract):
        genesis(chain("contract C { }\ncontract C { }"))


def test_successful_call():
    cs = exec_transaction(genesis(chain(BASE + "A->C.f():(0,10)")))
    r = cs.log[-1]
    assert r.outcome == "Done" and r.gas_used == 2 and r.remaining_gas == 8
    assert cs.state["A"]["balance"] == IntVal(98) and cs.state["C"]["balance"] == IntVal(0)


def test_out_of_gas_rolls_back_transfer():
    cs = exec_transaction(genesis(chain(BASE + "A->C.f():(5,1)")))
    r = cs.log[-1]
    assert r.outcome == "Exception(oog)" and r.gas_used == 1
    assert cs.state["A"]["balance"] == IntVal(99) and cs.state["C"]["balance"] == IntVal(0)


def test_exception_discards_field_writes():
    cs = exec_transaction(genesis(chain(BASE + "A->C.g():(0,10)")))
    assert cs.log[-1].exception == "pge"
    assert cs.state["C"]["p"] == IntVal(0) and cs.state["A"]["balance"] == IntVal(98)


@pytest.mark.parametrize("tx, reason", [("A->C.f():(0,101)", "InsufficientFundsForGas"),
                                        ("A->C.f():(50,51)", "InsufficientFundsForGas"),
                                        ("Z->C.f():(0,1)", "UnknownAccount")])
def test_skipped_transactions(tx, reason):
    cs0 = genesis(chain(BASE + tx))
    cs = exec_transaction(cs0)
    assert cs.log[-1].skipped and cs.log[-1].reason == reason and cs.state == cs0.state


def test_no_transactions_leaves_genesis():
    b = chain(BASE)
    assert run_blockchain(b)[0] == genesis(b).state


def test_next_transaction_sees_rolled_back_state():
    state, receipts = run_blockchain(chain(BASE + "A->C.g():(0,10)\nA->C.f():(3,10)"))
    assert [r.outcome for r in receipts] == ["Exception(pge)", "Done"]
    assert state["A"]["balance"] == IntVal(100 - 2 - 2 - 3) and state["C"]["p"] == IntVal(0)


def test_self_transfer_keeps_balance():
    text = "contract C { f() { this.send():2 } }\ncontract A { balance := 100; }\nA->C.f():(4,10)"
    state, receipts = run_blockchain(chain(text))
    assert receipts[0].outcome == "Done" and state["C"]["balance"] == IntVal(4)


def test_snapshot_round_trip():
    cs = genesis(chain(BASE))
    assert restore(snapshot(cs.state)) == cs.state
    assert restore(snapshot({})) == {}
    data = json.loads(snapshot(cs.state))
    assert list(data) == sorted(data)


@pytest.mark.parametrize("raw", [b"{not json", b"[]", b'{"C": {"p": 1}}'])
def test_corrupted_snapshot(raw):
    with pytest.raises(SnapshotError):
        restore(raw)
