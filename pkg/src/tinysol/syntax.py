"""Abstract syntax for typed TinySol programs, transactions and interfaces."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

MAGIC_VARS = ("this", "sender", "value")
TOP_INTERFACE = "Top"
DEFAULT_INT_MAX = 2**63 - 1


def int_max() -> int:
    """The INT_MAX constant used in types (never to clamp runtime integers)."""
    raw = os.environ.get("TINYSOL_INT_MAX")
    return int(raw) if raw else DEFAULT_INT_MAX


class ShapeError(Exception):
    """A declaration violates a structural well-formedness rule."""


class DuplicateName(ShapeError):
    pass


class ReservedName(ShapeError):
    pass


# -- values ------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class IntVal:
    i: int

    def __post_init__(self):
        if type(self.i) is not int:
            raise TypeError(f"IntVal needs an int, got {self.i!r}")


@dataclass(frozen=True, slots=True)
class BoolVal:
    b: bool


@dataclass(frozen=True, slots=True)
class AddrVal:
    a: str


Value = Union[IntVal, BoolVal, AddrVal]

TRUE = BoolVal(True)
FALSE = BoolVal(False)


# -- types -------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class BoolT:
    pass


@dataclass(frozen=True, slots=True)
class IntT:
    pass


@dataclass(frozen=True, slots=True)
class RangeT:
    """Bounded integer type: values in [lo..hi], both included."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty integer range [{self.lo}..{self.hi}]")


@dataclass(frozen=True, slots=True)
class IfaceT:
    name: str


BaseType = Union[BoolT, IntT, RangeT, IfaceT]

BOOL = BoolT()
INT = IntT()


@dataclass(frozen=True, slots=True)
class MethodType:
    """Method signature: parameter types, accepted transfer range, step bound."""

    params: tuple[BaseType, ...]
    lo: int
    hi: int
    steps: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty amount range [{self.lo}..{self.hi}]")
        if self.steps < 1:
            raise ValueError("method step bound must be at least 1")


MemberType = Union[BaseType, MethodType]


def send_type() -> MethodType:
    return MethodType((), 0, int_max(), 1)


@dataclass(frozen=True)
class InterfaceDecl:
    name: str
    members: Mapping[str, MemberType]
    line: int | None = field(default=None, compare=False)

    def get(self, name: str) -> MemberType | None:
        return self.members.get(name)

    def fields(self) -> dict[str, BaseType]:
        return {k: t for k, t in self.members.items() if not isinstance(t, MethodType)}

    def methods(self) -> dict[str, MethodType]:
        return {k: t for k, t in self.members.items() if isinstance(t, MethodType)}


def make_interface(name: str, members: Mapping[str, MemberType] = (), line=None) -> InterfaceDecl:
    """Build an interface with the mandatory `balance` and `send` members added."""
    table: dict[str, MemberType] = {"balance": INT, "send": send_type()}
    for k, t in dict(members).items():
        if k in ("balance", "send"):
            raise ReservedName(f"interface {name}: member {k!r} is implicit")
        table[k] = t
    return InterfaceDecl(name, table, line)


def top_interface() -> InterfaceDecl:
    return make_interface(TOP_INTERFACE)


# -- expressions -------------------------------------------------------------

# operator symbol -> arity
OPERATORS: dict[str, int] = {
    "+": 2, "-": 2, "*": 2, "/": 2,
    "<": 2, "<=": 2, ">": 2, ">=": 2, "==": 2,
    "and": 2, "or": 2,
    "not": 1, "neg": 1,
}


@dataclass(frozen=True, slots=True)
class Val:
    v: Value


@dataclass(frozen=True, slots=True)
class Var:
    name: str


@dataclass(frozen=True, slots=True)
class Balance:
    e: Expr


@dataclass(frozen=True, slots=True)
class Field:
    e: Expr
    name: str


@dataclass(frozen=True, slots=True)
class Op:
    op: str
    args: tuple[Expr, ...]

    def __post_init__(self):
        arity = OPERATORS.get(self.op)
        if arity is None:
            raise ValueError(f"unknown operator {self.op!r}")
        if arity != len(self.args):
            raise ValueError(f"operator {self.op!r} takes {arity} arguments")


Expr = Union[Val, Var, Balance, Field, Op]


# -- statements --------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class LVar:
    name: str


@dataclass(frozen=True, slots=True)
class LThisField:
    name: str

    def __post_init__(self):
        if self.name == "balance":
            raise ReservedName("balance can not be assigned directly")


LVal = Union[LVar, LThisField]


@dataclass(frozen=True, slots=True)
class Skip:
    pass


@dataclass(frozen=True, slots=True)
class Throw:
    pass


@dataclass(frozen=True, slots=True)
class DeclVar:
    type: BaseType
    name: str
    init: Expr
    body: Stm


@dataclass(frozen=True, slots=True)
class Assign:
    target: LVal
    e: Expr


@dataclass(frozen=True, slots=True)
class Seq:
    first: Stm
    second: Stm


@dataclass(frozen=True, slots=True)
class If:
    cond: Expr
    then: Stm
    orelse: Stm


@dataclass(frozen=True, slots=True)
class For:
    guard: Expr
    body: Stm


@dataclass(frozen=True, slots=True)
class Call:
    target: Expr
    method: str
    args: tuple[Expr, ...]
    amount: Expr


Stm = Union[Skip, Throw, DeclVar, Assign, Seq, If, For, Call]

SKIP = Skip()
THROW = Throw()


def seq(*stms: Stm) -> Stm:
    """Right-associated sequence of statements."""
    if not stms:
        return SKIP
    out = stms[-1]
    for s in reversed(stms[:-1]):
        out = Seq(s, out)
    return out


# -- declarations ------------------------------------------------------------


@dataclass(frozen=True)
class MethodDecl:
    name: str
    params: tuple[str, ...]
    body: Stm
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class ContractDecl:
    """A contract; the implicit `balance` field and `send(){skip}` are not listed."""

    name: str
    balance: int = 0
    fields: tuple[tuple[str, Value], ...] = ()
    methods: tuple[MethodDecl, ...] = ()
    interface: str | None = None
    line: int | None = field(default=None, compare=False)

    @property
    def is_account(self) -> bool:
        return not self.fields and not self.methods

    @property
    def interface_name(self) -> str | None:
        if self.interface is not None:
            return self.interface
        return TOP_INTERFACE if self.is_account else None


@dataclass(frozen=True)
class Transaction:
    caller: str
    target: str
    method: str
    args: tuple[Value, ...] = ()
    amount: int = 0
    gas: int = 1
    line: int | None = field(default=None, compare=False)

    def __post_init__(self):
        # g = 0 is tolerated so the out-of-gas rule can be observed directly
        if self.gas < 0:
            raise ValueError("gas limit must be non-negative")

    def as_call(self) -> Call:
        return Call(Val(AddrVal(self.target)), self.method,
                    tuple(Val(v) for v in self.args), Val(IntVal(self.amount)))


@dataclass(frozen=True)
class Blockchain:
    contracts: tuple[ContractDecl, ...] = ()
    interfaces: tuple[InterfaceDecl, ...] = ()
    txs: tuple[Transaction, ...] = ()


def validate_contract_shape(c: ContractDecl) -> None:
    """Raise DuplicateName/ReservedName unless the contract is well formed."""
    seen: set[str] = set()
    for p, _ in c.fields:
        if p == "balance":
            raise ReservedName(f"contract {c.name}: field 'balance' is implicit")
        if p in seen:
            raise DuplicateName(f"contract {c.name}: duplicate field {p!r}")
        seen.add(p)
    seen = set()
    for m in c.methods:
        if m.name == "send":
            raise ReservedName(f"contract {c.name}: method 'send' is implicit")
        if m.name in seen:
            raise DuplicateName(f"contract {c.name}: duplicate method {m.name!r}")
        seen.add(m.name)
        params: set[str] = set()
        for x in m.params:
            if x in MAGIC_VARS:
                raise ReservedName(f"{c.name}.{m.name}: parameter {x!r} is reserved")
            if x in params:
                raise DuplicateName(f"{c.name}.{m.name}: duplicate parameter {x!r}")
            params.add(x)


# -- pretty printing ---------------------------------------------------------

_PREC = {"or": 1, "and": 2, "<": 3, "<=": 3, ">": 3, ">=": 3, "==": 3,
         "+": 4, "-": 4, "*": 5, "/": 5}
_UNARY = 6
_POSTFIX = 7
_ATOM = 8


def _value_text(v: Value) -> str:
    if isinstance(v, IntVal):
        return str(v.i)
    if isinstance(v, BoolVal):
        return "true" if v.b else "false"
    return "@" + v.a


def _expr_prec(e: Expr) -> int:
    if isinstance(e, Op):
        return _UNARY if e.op in ("not", "neg") else _PREC[e.op]
    if isinstance(e, (Balance, Field)):
        return _POSTFIX
    if isinstance(e, Val) and isinstance(e.v, IntVal) and e.v.i < 0:
        return _UNARY
    return _ATOM


def _wrap(e: Expr, need: int) -> str:
    text = _expr_text(e)
    return f"({text})" if _expr_prec(e) < need else text


def _expr_text(e: Expr) -> str:
    if isinstance(e, Val):
        return _value_text(e.v)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Balance):
        return _wrap(e.e, _POSTFIX) + ".balance"
    if isinstance(e, Field):
        return _wrap(e.e, _POSTFIX) + "." + e.name
    if e.op == "not":
        return "not " + _wrap(e.args[0], _UNARY)
    if e.op == "neg":
        inner = e.args[0]
        # `-3` would read back as a literal, so a literal operand is parenthesised
        if isinstance(inner, Val) and isinstance(inner.v, IntVal):
            return f"-({_expr_text(inner)})"
        return "-" + _wrap(inner, _UNARY)
    p = _PREC[e.op]
    left, right = e.args
    left_need = p + 1 if p == 3 else p
    return f"{_wrap(left, left_need)} {e.op} {_wrap(right, p + 1)}"


def type_text(t: BaseType | MethodType) -> str:
    if isinstance(t, BoolT):
        return "bool"
    if isinstance(t, IntT):
        return "int"
    if isinstance(t, RangeT):
        return f"int[{t.lo}..{t.hi}]"
    if isinstance(t, IfaceT):
        return t.name
    params = ", ".join(type_text(b) for b in t.params)
    return f"({params})^{t.hi}_{t.lo} : {t.steps}"


def _block(s: Stm) -> str:
    return "{ " + _stm_text(s) + " }"


def _simple(s: Stm) -> str:
    # branch and loop bodies are single statements unless braced
    return _block(s) if isinstance(s, Seq) else _stm_text(s)


def _stm_text(s: Stm) -> str:
    if isinstance(s, Skip):
        return "skip"
    if isinstance(s, Throw):
        return "throw"
    if isinstance(s, DeclVar):
        return f"var {type_text(s.type)} {s.name} := {_expr_text(s.init)} in {_block(s.body)}"
    if isinstance(s, Assign):
        lhs = s.target.name if isinstance(s.target, LVar) else "this." + s.target.name
        return f"{lhs} := {_expr_text(s.e)}"
    if isinstance(s, Seq):
        first = _block(s.first) if isinstance(s.first, Seq) else _stm_text(s.first)
        return f"{first}; {_stm_text(s.second)}"
    if isinstance(s, If):
        return f"if {_expr_text(s.cond)} then {_simple(s.then)} else {_simple(s.orelse)}"
    if isinstance(s, For):
        return f"for {_expr_text(s.guard)} do {_simple(s.body)}"
    args = ", ".join(_expr_text(a) for a in s.args)
    return f"{_wrap(s.target, _POSTFIX)}.{s.method}({args}):{_expr_text(s.amount)}"


def _contract_text(c: ContractDecl) -> str:
    head = f"contract {c.name}" + (f" : {c.interface}" if c.interface else "")
    lines = [head + " {", f"  balance := {c.balance};"]
    lines += [f"  field {p} := {_value_text(v)};" for p, v in c.fields]
    for m in c.methods:
        lines.append(f"  {m.name}({', '.join(m.params)}) {{ {_stm_text(m.body)} }}")
    lines.append("}")
    return "\n".join(lines)


def _interface_text(i: InterfaceDecl) -> str:
    lines = [f"interface {i.name} {{"]
    for k, t in i.members.items():
        if k in ("balance", "send"):
            continue
        if isinstance(t, MethodType):
            params = ", ".join(type_text(b) for b in t.params)
            lines.append(f"  {k}({params})^{t.hi}_{t.lo} : {t.steps};")
        else:
            lines.append(f"  {k} : {type_text(t)};")
    lines.append("}")
    return "\n".join(lines)


def _tx_text(t: Transaction) -> str:
    args = ", ".join(_value_text(v) for v in t.args)
    return f"{t.caller}->{t.target}.{t.method}({args}):({t.amount},{t.gas})"


def pretty_print(node) -> str:
    """Render a node in the concrete syntax accepted by `tinysol.parser`."""
    if isinstance(node, (Val, Var, Balance, Field, Op)):
        return _expr_text(node)
    if isinstance(node, (Skip, Throw, DeclVar, Assign, Seq, If, For, Call)):
        return _stm_text(node)
    if isinstance(node, ContractDecl):
        return _contract_text(node)
    if isinstance(node, InterfaceDecl):
        return _interface_text(node)
    if isinstance(node, Transaction):
        return _tx_text(node)
    if isinstance(node, Blockchain):
        parts = [_interface_text(i) for i in node.interfaces if i.name != TOP_INTERFACE]
        parts += [_contract_text(c) for c in node.contracts]
        parts += [_tx_text(t) for t in node.txs]
        return "\n\n".join(parts) + "\n"
    if isinstance(node, (BoolT, IntT, RangeT, IfaceT, MethodType)):
        return type_text(node)
    raise TypeError(f"cannot print {type(node).__name__}")


def free_vars(s: Stm | Expr) -> set[str]:
    """Variables read or written by a statement and not bound inside it."""
    if isinstance(s, Val):
        return set()
    if isinstance(s, Var):
        return {s.name}
    if isinstance(s, (Balance, Field)):
        return free_vars(s.e)
    if isinstance(s, Op):
        return set().union(*(free_vars(a) for a in s.args))
    if isinstance(s, (Skip, Throw)):
        return set()
    if isinstance(s, DeclVar):
        return free_vars(s.init) | (free_vars(s.body) - {s.name})
    if isinstance(s, Assign):
        out = free_vars(s.e)
        return out | ({s.target.name} if isinstance(s.target, LVar) else {"this"})
    if isinstance(s, Seq):
        return free_vars(s.first) | free_vars(s.second)
    if isinstance(s, If):
        return free_vars(s.cond) | free_vars(s.then) | free_vars(s.orelse)
    if isinstance(s, For):
        return free_vars(s.guard) | free_vars(s.body)
    out = free_vars(s.target) | free_vars(s.amount)
    for a in s.args:
        out |= free_vars(a)
    return out


def values_text(vs: Sequence[Value]) -> str:
    return ", ".join(_value_text(v) for v in vs)
