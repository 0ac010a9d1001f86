"""Blockchain semantics: genesis, transactions with gas billing and rollback."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

from .env import (
    EMPTY_VARS, MethodTable, State, VarEnv, adjust_balance, canonical_json, elaborate,
    state_from_json,
)
from .machine import Config, RunResult, run
from .syntax import AddrVal, Blockchain, IfaceT, InterfaceDecl, Transaction, top_interface


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class TxReceipt:
    tx: Transaction
    outcome: str  # "Done", "Exception(<label>)" or "Skipped"
    gas_used: int = 0
    balance_delta: Mapping[str, int] = field(default_factory=dict)
    reason: str | None = None
    remaining_gas: int | None = None

    @property
    def skipped(self) -> bool:
        return self.outcome == "Skipped"

    @property
    def exception(self) -> str | None:
        if self.outcome.startswith("Exception("):
            return self.outcome[len("Exception("):-1]
        return None

    def to_json(self) -> dict:
        t = self.tx
        out = {
            "tx": {"caller": t.caller, "target": t.target, "method": t.method,
                   "amount": t.amount, "gas": t.gas},
            "outcome": self.outcome,
            "gas_used": self.gas_used,
            "balance_delta": dict(sorted(self.balance_delta.items())),
        }
        if self.reason is not None:
            out["reason"] = self.reason
        return out


@dataclass(frozen=True)
class ChainState:
    state: State
    table: MethodTable
    pending: tuple[Transaction, ...] = ()
    log: tuple[TxReceipt, ...] = ()
    interfaces: Mapping[str, InterfaceDecl] = field(default_factory=dict)
    bindings: Mapping[str, str] = field(default_factory=dict)


def _interface_map(b: Blockchain) -> dict[str, InterfaceDecl]:
    out = {i.name: i for i in b.interfaces}
    out.setdefault(top_interface().name, top_interface())
    return out


def genesis(b: Blockchain) -> ChainState:
    interfaces = _interface_map(b)
    state, table = elaborate(b.contracts, interfaces)
    bindings = {c.name: c.interface_name for c in b.contracts if c.interface_name in interfaces}
    return ChainState(state, table, tuple(b.txs), (), interfaces, bindings)


def _deltas(before: State, after: State) -> dict[str, int]:
    out = {}
    for X in set(before) | set(after):
        a = before[X]["balance"].i if X in before else 0
        b = after[X]["balance"].i if X in after else 0
        if a != b:
            out[X] = b - a
    return out


def transaction_config(cs: ChainState, tx: Transaction) -> Config:
    """The machine configuration a transaction starts from."""
    iface = cs.bindings.get(tx.caller)
    vars = VarEnv.of(("this", AddrVal(tx.caller), IfaceT(iface) if iface else None))
    return Config((tx.as_call(),), cs.state, vars, tx.gas)


def exec_transaction(cs: ChainState) -> ChainState:
    """Execute the next pending transaction and append its receipt."""
    return exec_transaction_traced(cs, keep_run=False)[0]


def exec_transaction_traced(cs: ChainState, keep_run: bool = True) -> tuple[ChainState, RunResult | None]:
    """Like `exec_transaction`, also returning the machine run (None when skipped)."""
    if not cs.pending:
        raise ValueError("no pending transactions")
    tx, rest = cs.pending[0], cs.pending[1:]
    pre = cs.state
    caller = pre.get(tx.caller)
    if caller is None:
        receipt = TxReceipt(tx, "Skipped", reason="UnknownAccount")
        return ChainState(pre, cs.table, rest, cs.log + (receipt,), cs.interfaces, cs.bindings), None
    if tx.gas > caller["balance"].i - tx.amount:
        receipt = TxReceipt(tx, "Skipped", reason="InsufficientFundsForGas")
        return ChainState(pre, cs.table, rest, cs.log + (receipt,), cs.interfaces, cs.bindings), None
    result = run(cs.table, transaction_config(cs, tx), record=keep_run)
    used = tx.gas - result.config.gas
    if result.terminal.done:
        post = adjust_balance(result.config.state, tx.caller, -used)
    else:
        post = adjust_balance(pre, tx.caller, -used)
    receipt = TxReceipt(tx, str(result.terminal), used, _deltas(pre, post),
                        remaining_gas=result.config.gas)
    nxt = ChainState(post, cs.table, rest, cs.log + (receipt,), cs.interfaces, cs.bindings)
    return nxt, result if keep_run else None


def run_chain(cs: ChainState) -> ChainState:
    while cs.pending:
        cs = exec_transaction(cs)
    return cs


def run_blockchain(b: Blockchain, state: State | None = None) -> tuple[State, tuple[TxReceipt, ...]]:
    """Genesis followed by every transaction in order; `state` overrides the genesis state."""
    cs = genesis(b)
    if state is not None:
        cs = ChainState(state, cs.table, cs.pending, (), cs.interfaces, cs.bindings)
    cs = run_chain(cs)
    return cs.state, cs.log


def snapshot(state: State) -> bytes:
    return canonical_json(state).encode("utf-8")


def restore(data: bytes | str) -> State:
    try:
        raw = json.loads(data)
        return state_from_json(raw)
    except (ValueError, TypeError) as exc:
        raise SnapshotError(f"malformed snapshot: {exc}") from exc


def receipts_json(receipts) -> str:
    return json.dumps([r.to_json() for r in receipts], sort_keys=True, indent=2)


__all__ = [
    "ChainState", "TxReceipt", "SnapshotError", "genesis", "exec_transaction", "exec_transaction_traced", "run_chain",
    "run_blockchain", "snapshot", "restore", "receipts_json", "transaction_config", "EMPTY_VARS",
]
