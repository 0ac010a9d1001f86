"""Expression evaluation and the small-step stack machine with gas.

A stack is a tuple with its top at the *end*; the empty tuple is the bottom
marker. Every command costs one unit of gas, expressions are free.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from .env import (
    Binding, MethodTable, State, Unbound, VarEnv, top_type, transfer, state_update_field,
    value_range,
)
from .syntax import (
    AddrVal, Assign, Balance, BoolVal, Call, DeclVar, Expr, Field, For, If, IntVal, LVar, Op,
    Seq, Skip, Stm, Throw, Val, Value, Var,
)

EXC_LABELS = ("rte", "neg", "oog", "pge")


class EvalError(Exception):
    pass


class TypeMismatch(EvalError):
    pass


class DivisionByZero(EvalError):
    pass


# -- frames -------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class EnvFrame:
    """Saved caller environment, restored when the callee's body is done."""

    env: VarEnv


@dataclass(frozen=True, slots=True)
class ScopeEnd:
    name: str


@dataclass(frozen=True, slots=True)
class ExcFrame:
    label: str

    def __post_init__(self):
        if self.label not in EXC_LABELS:
            raise ValueError(f"unknown exception label {self.label!r}")


Frame = Union[Stm, EnvFrame, ScopeEnd, ExcFrame]
Stack = tuple  # of Frame, top last


@dataclass(frozen=True)
class Config:
    stack: Stack
    state: State
    vars: VarEnv
    gas: int

    def __post_init__(self):
        if self.gas < 0:
            raise ValueError("gas must be non-negative")

    @property
    def top(self) -> Frame | None:
        return self.stack[-1] if self.stack else None


@dataclass(frozen=True)
class Terminal:
    """Outcome of a finished run: `label` is None on normal completion."""

    label: str | None = None

    @property
    def done(self) -> bool:
        return self.label is None

    def __str__(self) -> str:
        return "Done" if self.label is None else f"Exception({self.label})"


DONE = Terminal()


# -- expressions --------------------------------------------------------------


def _int(v: Value, op: str) -> int:
    if not isinstance(v, IntVal):
        raise TypeMismatch(f"{op} expects integers, got {v}")
    return v.i


def _bool(v: Value, op: str) -> bool:
    if not isinstance(v, BoolVal):
        raise TypeMismatch(f"{op} expects booleans, got {v}")
    return v.b


def apply_op(op: str, vals) -> Value:
    """Evaluate a primitive operator on values."""
    if op in ("+", "-", "*", "/"):
        a, b = (_int(v, op) for v in vals)
        if op == "+":
            return IntVal(a + b)
        if op == "-":
            return IntVal(a - b)
        if op == "*":
            return IntVal(a * b)
        if b == 0:
            raise DivisionByZero(f"{a} / 0")
        q = abs(a) // abs(b)
        return IntVal(q if (a >= 0) == (b >= 0) else -q)
    if op in ("<", "<=", ">", ">="):
        a, b = (_int(v, op) for v in vals)
        return BoolVal({"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op])
    if op == "==":
        a, b = vals
        if type(a) is not type(b):
            raise TypeMismatch(f"cannot compare {a} with {b}")
        return BoolVal(a == b)
    if op in ("and", "or"):
        a, b = (_bool(v, op) for v in vals)
        return BoolVal(a and b if op == "and" else a or b)
    if op == "not":
        return BoolVal(not _bool(vals[0], op))
    if op == "neg":
        return IntVal(-_int(vals[0], op))
    raise TypeMismatch(f"unknown operator {op!r}")


def _address(state: State, vars: VarEnv, e: Expr) -> str:
    v = eval_expr(state, vars, e)
    if not isinstance(v, AddrVal):
        raise TypeMismatch(f"{v} is not an address")
    if v.a not in state:
        raise EvalError(f"no contract at {v.a}")
    return v.a


def eval_expr(state: State, vars: VarEnv, e: Expr) -> Value:
    if isinstance(e, Val):
        return e.v
    if isinstance(e, Var):
        try:
            return vars.lookup(e.name)
        except Unbound:
            raise EvalError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Balance):
        return state[_address(state, vars, e.e)]["balance"]
    if isinstance(e, Field):
        X = _address(state, vars, e.e)
        fields = state[X]
        if e.name not in fields:
            raise EvalError(f"{X} has no field {e.name!r}")
        return fields[e.name]
    if isinstance(e, Op):
        return apply_op(e.op, [eval_expr(state, vars, a) for a in e.args])
    raise TypeError(f"not an expression: {e!r}")


# -- transitions ------------------------------------------------------------------


class _Fail(Exception):
    def __init__(self, label: str):
        self.label = label


def _eval(c: Config, e: Expr) -> Value:
    try:
        return eval_expr(c.state, c.vars, e)
    except EvalError:
        raise _Fail("rte") from None


def _stm_step(table: MethodTable, c: Config, s: Stm, rest: Stack) -> tuple[str, Config]:
    g = c.gas
    if isinstance(s, Skip):
        return "ss-skip", Config(rest, c.state, c.vars, g - 1)
    if isinstance(s, Seq):
        return "ss-seq", Config(rest + (s.second, s.first), c.state, c.vars, g)
    if isinstance(s, Throw):
        return "ss-throw", Config(rest + (ExcFrame("pge"),), c.state, c.vars, g)
    if isinstance(s, If):
        b = _eval(c, s.cond)
        if not isinstance(b, BoolVal):
            raise _Fail("rte")
        return "ss-if", Config(rest + (s.then if b.b else s.orelse,), c.state, c.vars, g - 1)
    if isinstance(s, For):
        v = _eval(c, s.guard)
        if not isinstance(v, IntVal):
            raise _Fail("rte")
        if v.i >= 1:
            again = For(Val(IntVal(v.i - 1)), s.body)
            return "ss-for_T", Config(rest + (again, s.body), c.state, c.vars, g - 1)
        return "ss-for_F", Config(rest, c.state, c.vars, g - 1)
    if isinstance(s, DeclVar):
        if s.name in c.vars:
            raise _Fail("rte")
        v = _eval(c, s.init)
        vars2 = c.vars.push(s.name, v, s.type)
        return "ss-decv", Config(rest + (ScopeEnd(s.name), s.body), c.state, vars2, g - 1)
    if isinstance(s, Assign):
        if isinstance(s.target, LVar):
            if s.target.name not in c.vars:
                raise _Fail("rte")
            v = _eval(c, s.e)
            return "ss-assv", Config(rest, c.state, c.vars.update(s.target.name, v), g - 1)
        X = _this(c)
        p = s.target.name
        if p == "balance" or p not in c.state[X]:
            raise _Fail("rte")
        v = _eval(c, s.e)
        return "ss-assf", Config(rest, state_update_field(c.state, X, p, v), c.vars, g - 1)
    if isinstance(s, Call):
        return _call(table, c, s, rest)
    raise TypeError(f"not a statement: {s!r}")


def _this(c: Config) -> str:
    try:
        X = c.vars.lookup("this")
    except Unbound:
        raise _Fail("rte") from None
    if not isinstance(X, AddrVal) or X.a not in c.state:
        raise _Fail("rte")
    return X.a


def _call(table: MethodTable, c: Config, s: Call, rest: Stack) -> tuple[str, Config]:
    Y = _eval(c, s.target)
    n = _eval(c, s.amount)
    args = [_eval(c, a) for a in s.args]
    if not isinstance(Y, AddrVal) or not isinstance(n, IntVal):
        raise _Fail("rte")
    X = _this(c)
    method = table.get(Y.a, {}).get(s.method)
    if method is None or len(method.params) != len(args) or Y.a not in c.state:
        raise _Fail("rte")
    if n.i > c.state[X]["balance"].i:
        raise _Fail("neg")
    sig = method.sig
    if sig is not None:
        frame = [Binding("this", Y, method.this_type),
                 Binding("sender", AddrVal(X), top_type()),
                 Binding("value", n, value_range(sig))]
        frame += [Binding(x, v, t) for x, v, t in zip(method.params, args, sig.params)]
    else:
        frame = [Binding("this", Y), Binding("sender", AddrVal(X)), Binding("value", n)]
        frame += [Binding(x, v) for x, v in zip(method.params, args)]
    state2 = transfer(c.state, X, Y.a, n.i)
    return "ss-call", Config(rest + (EnvFrame(c.vars), method.body), state2, VarEnv(frame), c.gas - 1)


def step_rule(table: MethodTable, c: Config) -> tuple[str, Config] | Terminal:
    """One transition, tagged with the name of the rule that fired."""
    if not c.stack:
        return DONE
    top = c.stack[-1]
    rest = c.stack[:-1]
    if isinstance(top, ExcFrame):
        return Terminal(top.label)
    if isinstance(top, ScopeEnd):
        if not c.vars.bindings or c.vars.bindings[0].name != top.name:
            raise RuntimeError(f"scope marker {top.name!r} does not match {c.vars!r}")
        _, vars2 = c.vars.pop()
        return "ss-delv", Config(rest, c.state, vars2, c.gas)
    if isinstance(top, EnvFrame):
        return "ss-return", Config(rest, c.state, top.env, c.gas)
    if c.gas == 0:
        return "ss-oog", Config(c.stack + (ExcFrame("oog"),), c.state, c.vars, 0)
    try:
        return _stm_step(table, c, top, rest)
    except _Fail as f:
        return f"ss-{f.label}", Config(c.stack + (ExcFrame(f.label),), c.state, c.vars, c.gas)


def step(table: MethodTable, c: Config) -> Config | Terminal:
    out = step_rule(table, c)
    return out if isinstance(out, Terminal) else out[1]


@dataclass(frozen=True)
class TraceEntry:
    rule: str
    gas_before: int
    gas_after: int
    stack_depth: int
    exception: str | None = None

    def to_json(self) -> dict:
        out = {"rule": self.rule, "gas_before": self.gas_before, "gas_after": self.gas_after,
               "stack_depth": self.stack_depth}
        if self.exception is not None:
            out["exception"] = self.exception
        return out


@dataclass
class RunResult:
    terminal: Terminal
    config: Config
    trace: list[TraceEntry] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.trace)


def run(table: MethodTable, c: Config, record: bool = True) -> RunResult:
    """Iterate `step` until the stack is empty or an exception is on top."""
    trace: list[TraceEntry] = []
    while True:
        out = step_rule(table, c)
        if isinstance(out, Terminal):
            return RunResult(out, c, trace)
        rule, nxt = out
        if record:
            top = nxt.top
            trace.append(TraceEntry(rule, c.gas, nxt.gas, len(nxt.stack),
                                    top.label if isinstance(top, ExcFrame) else None))
        c = nxt


def initial_config(stm: Stm, state: State, vars: VarEnv, gas: int) -> Config:
    return Config((stm,), state, vars, gas)


__all__ = [
    "EXC_LABELS", "EvalError", "TypeMismatch", "DivisionByZero", "EnvFrame", "ScopeEnd",
    "ExcFrame", "Config", "Terminal", "DONE", "apply_op", "eval_expr", "step", "step_rule",
    "run", "RunResult", "TraceEntry", "initial_config",
]
