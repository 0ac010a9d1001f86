"""Gas-bound type system.

Statement judgments compute an upper bound on the number of machine steps a
statement needs. Expression typing infers the *minimal* type (integer
literals get the singleton range) and subsumption is applied only where a
value flows into a declared type: assignments, arguments, amounts, guards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .env import MethodTable, State, VarEnv
from .syntax import (
    BOOL, INT, MAGIC_VARS, TOP_INTERFACE, AddrVal, Assign, Balance, BaseType, BoolT, BoolVal,
    Call, ContractDecl, DeclVar, Expr, Field, For, If, IfaceT, InterfaceDecl, IntT, IntVal, LVar,
    MemberType, MethodType, Op, RangeT, Seq, Skip, Stm, Throw, Val, Value, Var, send_type,
    top_interface, type_text,
)


class TypeCheckError(Exception):
    code = "TypeError"

    def __init__(self, message: str, where: str | None = None, line: int | None = None):
        super().__init__(message)
        self.message = message
        self.where = where
        self.line = line

    def to_json(self) -> dict:
        out = {"code": self.code, "message": self.message}
        if self.where:
            out["where"] = self.where
        if self.line is not None:
            out["line"] = self.line
        return out


def _error(name: str) -> type[TypeCheckError]:
    return type(name, (TypeCheckError,), {"code": name})


UnknownInterface = _error("UnknownInterface")
UnboundName = _error("UnboundName")
NoSuchMember = _error("NoSuchMember")
OperatorTypeError = _error("OperatorTypeError")
UnboundedLoopGuard = _error("UnboundedLoopGuard")
TypeMismatch = _error("TypeMismatch")
UnknownMethod = _error("UnknownMethod")
AmountOutOfDeclaredRange = _error("AmountOutOfDeclaredRange")
ShadowedVariable = _error("ShadowedVariable")
FieldTypeMismatch = _error("FieldTypeMismatch")
BodyExceedsDeclaredBound = _error("BodyExceedsDeclaredBound")
MissingInterfaceMember = _error("MissingInterfaceMember")
MalformedInterface = _error("MalformedInterface")


@dataclass(frozen=True)
class Gamma:
    """Type environment for names: address -> interface name, interface name -> members."""

    bindings: Mapping[str, str]
    interfaces: Mapping[str, InterfaceDecl]

    @classmethod
    def build(cls, interfaces: Iterable[InterfaceDecl], bindings: Mapping[str, str]) -> Gamma:
        table = {TOP_INTERFACE: top_interface()}
        table.update({i.name: i for i in interfaces})
        return cls(dict(bindings), table)

    @classmethod
    def from_program(cls, contracts: Sequence[ContractDecl],
                     interfaces: Iterable[InterfaceDecl]) -> Gamma:
        return cls.build(interfaces, {c.name: c.interface_name for c in contracts
                                      if c.interface_name is not None})

    def iface(self, name: str) -> InterfaceDecl:
        i = self.interfaces.get(name)
        if i is None:
            raise UnknownInterface(f"unknown interface {name!r}")
        return i

    def of_address(self, X: str) -> str:
        I = self.bindings.get(X)
        if I is None:
            raise UnboundName(f"address {X!r} has no interface")
        return I

    def member(self, I: str, name: str) -> MemberType | None:
        return self.iface(I).get(name)


Delta = Mapping[str, BaseType]


def top() -> IfaceT:
    return IfaceT(TOP_INTERFACE)


# -- subtyping ----------------------------------------------------------------


def subtype(gamma: Gamma, t1, t2) -> bool:
    """Decide t1 <= t2 (reflexive-transitive closure of the subtyping rules)."""
    return _sub(gamma, t1, t2, set())


def _sub(gamma: Gamma, t1, t2, assumed: set) -> bool:
    if t1 == t2:
        return True
    if isinstance(t1, RangeT):
        if isinstance(t2, IntT):
            return True
        if isinstance(t2, RangeT):
            return t1.hi <= t2.hi and t1.lo >= t2.lo
        return False
    if isinstance(t1, IfaceT) and isinstance(t2, IfaceT):
        key = (t1.name, t2.name)
        if key in assumed:
            return True
        assumed.add(key)
        return _sub_members(gamma, gamma.iface(t1.name), gamma.iface(t2.name), assumed)
    if isinstance(t1, InterfaceDecl) and isinstance(t2, InterfaceDecl):
        return _sub_members(gamma, t1, t2, assumed)
    if isinstance(t1, MethodType) and isinstance(t2, MethodType):
        return (len(t1.params) == len(t2.params)
                and t1.steps <= t2.steps and t1.hi <= t2.hi and t1.lo >= t2.lo
                and all(_sub(gamma, a, b, assumed) for a, b in zip(t1.params, t2.params)))
    return False


def _sub_members(gamma: Gamma, i1: InterfaceDecl, i2: InterfaceDecl, assumed: set) -> bool:
    for name, t2 in i2.members.items():
        t1 = i1.get(name)
        if t1 is None or not _sub(gamma, t1, t2, assumed):
            return False
    return True


# -- expressions --------------------------------------------------------------


def value_type(gamma: Gamma, v: Value) -> BaseType:
    if isinstance(v, IntVal):
        return RangeT(v.i, v.i)
    if isinstance(v, BoolVal):
        return BOOL
    return IfaceT(gamma.of_address(v.a))


def has_type(gamma: Gamma, v: Value, t: BaseType) -> bool:
    try:
        return subtype(gamma, value_type(gamma, v), t)
    except TypeCheckError:
        return False


def _intlike(t: BaseType) -> bool:
    return isinstance(t, (IntT, RangeT))


def op_signature(op: str, argtypes: Sequence[BaseType]) -> BaseType:
    """Result type of a primitive operator, with interval bounds where derivable."""
    if op in ("+", "-", "*", "/"):
        a, b = argtypes
        if not (_intlike(a) and _intlike(b)):
            raise OperatorTypeError(f"{op} expects integers, got {type_text(a)}, {type_text(b)}")
        if op == "/" or not (isinstance(a, RangeT) and isinstance(b, RangeT)):
            return INT
        if op == "+":
            return RangeT(a.lo + b.lo, a.hi + b.hi)
        if op == "-":
            return RangeT(a.lo - b.hi, a.hi - b.lo)
        corners = [a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi]
        return RangeT(min(corners), max(corners))
    if op == "neg":
        (a,) = argtypes
        if isinstance(a, RangeT):
            return RangeT(-a.hi, -a.lo)
        if isinstance(a, IntT):
            return INT
        raise OperatorTypeError(f"neg expects an integer, got {type_text(a)}")
    if op in ("<", "<=", ">", ">="):
        if not all(_intlike(t) for t in argtypes):
            raise OperatorTypeError(f"{op} expects integers")
        return BOOL
    if op == "==":
        a, b = argtypes
        if (_intlike(a) and _intlike(b)) or (a == BOOL and b == BOOL) \
                or (isinstance(a, IfaceT) and isinstance(b, IfaceT)):
            return BOOL
        raise OperatorTypeError(f"cannot compare {type_text(a)} with {type_text(b)}")
    if op in ("and", "or", "not"):
        if not all(isinstance(t, BoolT) for t in argtypes):
            raise OperatorTypeError(f"{op} expects booleans")
        return BOOL
    raise OperatorTypeError(f"unknown operator {op!r}")


def _receiver(gamma: Gamma, delta: Delta, e: Expr) -> str:
    t = type_expr(gamma, delta, e)
    if not isinstance(t, IfaceT):
        raise NoSuchMember(f"{type_text(t)} has no members")
    gamma.iface(t.name)
    return t.name


def type_expr(gamma: Gamma, delta: Delta, e: Expr) -> BaseType:
    """Minimal type of an expression."""
    if isinstance(e, Val):
        return value_type(gamma, e.v)
    if isinstance(e, Var):
        t = delta.get(e.name)
        if t is None:
            raise UnboundName(f"unbound variable {e.name!r}")
        return t
    if isinstance(e, Balance):
        _receiver(gamma, delta, e.e)
        return INT
    if isinstance(e, Field):
        I = _receiver(gamma, delta, e.e)
        t = gamma.member(I, e.name)
        if t is None or isinstance(t, MethodType):
            raise NoSuchMember(f"interface {I} has no field {e.name!r}")
        return t
    if isinstance(e, Op):
        return op_signature(e.op, [type_expr(gamma, delta, a) for a in e.args])
    raise TypeError(f"not an expression: {e!r}")


def check_expr(gamma: Gamma, delta: Delta, e: Expr, expected: BaseType,
               error: type[TypeCheckError] = TypeMismatch, what: str = "expression") -> None:
    t = type_expr(gamma, delta, e)
    if not subtype(gamma, t, expected):
        raise error(f"{what} has type {type_text(t)}, expected {type_text(expected)}")


def _check_type_wf(gamma: Gamma, t: BaseType) -> None:
    if isinstance(t, IfaceT):
        gamma.iface(t.name)


# -- statements ---------------------------------------------------------------


def type_stmt(gamma: Gamma, delta: Delta, s: Stm) -> int:
    """Least step bound derivable for `s` (raises when `s` is not typeable)."""
    if isinstance(s, (Skip, Throw)):
        return 1
    if isinstance(s, Assign):
        if isinstance(s.target, LVar):
            x = s.target.name
            if x not in delta:
                raise UnboundName(f"unbound variable {x!r}")
            if x in MAGIC_VARS:
                raise TypeMismatch(f"cannot assign to {x!r}")
            check_expr(gamma, delta, s.e, delta[x], what=f"right-hand side of {x} :=")
            return 1
        I = _receiver(gamma, delta, Var("this"))
        t = gamma.member(I, s.target.name)
        if t is None or isinstance(t, MethodType):
            raise NoSuchMember(f"interface {I} has no field {s.target.name!r}")
        check_expr(gamma, delta, s.e, t, what=f"right-hand side of this.{s.target.name} :=")
        return 1
    if isinstance(s, DeclVar):
        if s.name in delta:
            raise ShadowedVariable(f"variable {s.name!r} is already bound")
        _check_type_wf(gamma, s.type)
        check_expr(gamma, delta, s.init, s.type, what=f"initializer of {s.name}")
        return type_stmt(gamma, {**delta, s.name: s.type}, s.body) + 2
    if isinstance(s, Seq):
        return type_stmt(gamma, delta, s.first) + type_stmt(gamma, delta, s.second) + 1
    if isinstance(s, If):
        check_expr(gamma, delta, s.cond, BOOL, what="if condition")
        return max(type_stmt(gamma, delta, s.then), type_stmt(gamma, delta, s.orelse)) + 1
    if isinstance(s, For):
        t = type_expr(gamma, delta, s.guard)
        if isinstance(t, IntT):
            raise UnboundedLoopGuard("loop guard needs a bounded integer type, got int")
        if not isinstance(t, RangeT):
            raise TypeMismatch(f"loop guard has type {type_text(t)}")
        n = type_stmt(gamma, delta, s.body)
        return max(1, t.hi * (n + 1) + 1)
    if isinstance(s, Call):
        sig = call_signature(gamma, delta, s)
        for i, (a, b) in enumerate(zip(s.args, sig.params)):
            check_expr(gamma, delta, a, b, what=f"argument {i + 1} of {s.method}")
        check_expr(gamma, delta, s.amount, RangeT(sig.lo, sig.hi), AmountOutOfDeclaredRange,
                   what=f"amount sent to {s.method}")
        return sig.steps + 2
    raise TypeError(f"not a statement: {s!r}")


def call_signature(gamma: Gamma, delta: Delta, s: Call) -> MethodType:
    I = _receiver(gamma, delta, s.target)
    sig = gamma.member(I, s.method)
    if not isinstance(sig, MethodType):
        raise UnknownMethod(f"interface {I} has no method {s.method!r}")
    if len(sig.params) != len(s.args):
        raise TypeMismatch(f"{s.method} takes {len(sig.params)} arguments, got {len(s.args)}")
    return sig


def min_gas(gamma: Gamma, delta: Delta, s: Stm) -> int:
    """Least gas for which the configuration running `s` is well typed."""
    return type_stmt(gamma, delta, s) + 1


def method_delta(gamma: Gamma, I: str, params: Sequence[str], sig: MethodType) -> dict[str, BaseType]:
    delta: dict[str, BaseType] = {"this": IfaceT(I)}
    delta.update(zip(params, sig.params))
    delta["value"] = RangeT(sig.lo, sig.hi)
    delta["sender"] = top()
    return delta


# -- interfaces and declarations ---------------------------------------------


def check_interface(gamma: Gamma, i: InterfaceDecl) -> None:
    if i.get("balance") != INT or i.get("send") != send_type():
        raise MalformedInterface(f"interface {i.name} lacks the mandatory balance/send members")
    for name, t in i.members.items():
        for b in (t.params if isinstance(t, MethodType) else (t,)):
            if isinstance(b, IfaceT) and b.name not in gamma.interfaces:
                raise UnknownInterface(f"{i.name}.{name} mentions unknown interface {b.name!r}")


@dataclass
class MethodReport:
    declared_n: int | None
    computed_n: int | None
    min_gas: int | None

    def to_json(self) -> dict:
        return {"declared_n": self.declared_n, "computed_n": self.computed_n,
                "min_gas": self.min_gas}


@dataclass
class CheckReport:
    methods: dict[str, dict[str, MethodReport]] = field(default_factory=dict)
    errors: list[TypeCheckError] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_json(self) -> dict:
        return {
            "contracts": {c: {m: r.to_json() for m, r in sorted(ms.items())}
                          for c, ms in sorted(self.methods.items())},
            "diagnostics": [e.to_json() for e in self.errors],
        }


def _check_contract(gamma: Gamma, c: ContractDecl, report: CheckReport, collect: bool) -> None:
    I = c.interface_name
    if I is None:
        raise MissingInterfaceMember(f"contract {c.name} has no interface", c.name, c.line)
    iface = gamma.iface(I)
    methods = report.methods.setdefault(c.name, {})
    for p, v in c.fields:
        t = iface.get(p)
        if t is None or isinstance(t, MethodType):
            raise MissingInterfaceMember(f"interface {I} does not declare field {p!r}",
                                         f"{c.name}.{p}", c.line)
        if not has_type(gamma, v, t):
            raise FieldTypeMismatch(f"field {p} initialised with a value outside {type_text(t)}",
                                    f"{c.name}.{p}", c.line)
    implemented = {p for p, _ in c.fields} | {m.name for m in c.methods} | {"balance", "send"}
    for name in iface.members:
        if name not in implemented:
            raise MissingInterfaceMember(f"contract {c.name} does not implement {I}.{name}",
                                         c.name, c.line)
    for m in c.methods:
        try:
            _check_method(gamma, c, I, iface, m, methods)
        except TypeCheckError as exc:
            if not collect:
                raise
            report.errors.append(exc)


def _check_method(gamma: Gamma, c: ContractDecl, I: str, iface: InterfaceDecl, m,
                  methods: dict[str, MethodReport]) -> None:
    where = f"{c.name}.{m.name}"
    sig = iface.get(m.name)
    if not isinstance(sig, MethodType):
        raise MissingInterfaceMember(f"interface {I} does not declare method {m.name!r}",
                                     where, m.line)
    if len(sig.params) != len(m.params):
        raise TypeMismatch(f"{where} has {len(m.params)} parameters, interface says "
                           f"{len(sig.params)}", where, m.line)
    try:
        n = type_stmt(gamma, method_delta(gamma, I, m.params, sig), m.body)
    except TypeCheckError as exc:
        exc.where = exc.where or where
        exc.line = exc.line if exc.line is not None else m.line
        methods[m.name] = MethodReport(sig.steps, None, sig.steps + 3)
        raise
    methods[m.name] = MethodReport(sig.steps, n, sig.steps + 3)
    if n > sig.steps:
        raise BodyExceedsDeclaredBound(
            f"body of {where} needs {n} steps, declared bound is {sig.steps}", where, m.line)


def check_declarations(gamma: Gamma, decls: Sequence[ContractDecl],
                       interfaces: Iterable[InterfaceDecl] = (), collect: bool = False) -> CheckReport:
    """Check every contract against its interface.

    Raises the first error unless `collect` is set, in which case errors are
    gathered per contract into the report.
    """
    report = CheckReport()
    for i in list(interfaces) or list(gamma.interfaces.values()):
        try:
            check_interface(gamma, i)
        except TypeCheckError as exc:
            if not collect:
                raise
            report.errors.append(exc)
    for c in decls:
        try:
            _check_contract(gamma, c, report, collect)
        except TypeCheckError as exc:
            if exc.where is None:
                exc.where = c.name
            if not collect:
                raise
            report.errors.append(exc)
    return report


# -- environment agreement ---------------------------------------------------------


@dataclass
class Agreement:
    ok: bool
    diagnostics: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def agree_state(gamma: Gamma, state: State) -> list[str]:
    problems = []
    for X, fields in state.items():
        I = gamma.bindings.get(X)
        if I is None or I not in gamma.interfaces:
            problems.append(f"{X} has no interface")
            continue
        for p, v in fields.items():
            t = gamma.member(I, p)
            if t is None or isinstance(t, MethodType):
                problems.append(f"{X}.{p} is not declared in {I}")
            elif not has_type(gamma, v, t):
                problems.append(f"{X}.{p} = {v} does not inhabit {type_text(t)}")
    return problems


def agree_table(gamma: Gamma, table: MethodTable) -> list[str]:
    problems = []
    for X, methods in table.items():
        I = gamma.bindings.get(X)
        if I is None or I not in gamma.interfaces:
            problems.append(f"{X} has no interface")
            continue
        for f, m in methods.items():
            sig = gamma.member(I, f)
            if not isinstance(sig, MethodType) or len(sig.params) != len(m.params):
                problems.append(f"{X}.{f} has no matching signature in {I}")
                continue
            try:
                n = type_stmt(gamma, method_delta(gamma, I, m.params, sig), m.body)
            except TypeCheckError as exc:
                problems.append(f"{X}.{f}: {exc.message}")
                continue
            if n > sig.steps:
                problems.append(f"{X}.{f} needs {n} steps, declared {sig.steps}")
    return problems


def agree_vars(gamma: Gamma, delta: Delta, vars: VarEnv) -> list[str]:
    problems = []
    for b in vars:
        t = delta.get(b.name)
        if t is None:
            problems.append(f"{b.name} is not typed")
        elif not has_type(gamma, b.value, t):
            problems.append(f"{b.name} = {b.value} does not inhabit {type_text(t)}")
        elif b.type is not None and not subtype(gamma, b.type, t):
            problems.append(f"{b.name} annotated {type_text(b.type)}, typed {type_text(t)}")
    return problems


def vars_delta(vars: VarEnv) -> dict[str, BaseType]:
    """The type environment recorded in a variable environment's annotations."""
    out: dict[str, BaseType] = {}
    for b in reversed(vars.bindings):
        if b.type is None:
            raise UnboundName(f"binding {b.name!r} carries no type")
        out[b.name] = b.type
    return out


def check_env_agreement(gamma: Gamma, state: State, table: MethodTable, vars: VarEnv,
                        delta: Delta | None = None) -> Agreement:
    """Do the runtime environments agree with Γ (and Δ, defaulting to the annotations)?"""
    problems = agree_state(gamma, state) + agree_table(gamma, table)
    try:
        d = vars_delta(vars) if delta is None else delta
    except TypeCheckError as exc:
        problems.append(exc.message)
    else:
        problems += agree_vars(gamma, d, vars)
    return Agreement(not problems, problems)


def address_interface(gamma: Gamma, v: Value) -> str | None:
    return gamma.bindings.get(v.a) if isinstance(v, AddrVal) else None


__all__ = [
    "Gamma", "Delta", "TypeCheckError", "subtype", "type_expr", "op_signature", "type_stmt",
    "min_gas", "check_declarations", "check_env_agreement", "has_type", "value_type",
    "method_delta", "CheckReport", "MethodReport", "Agreement", "agree_state", "agree_table",
    "agree_vars", "vars_delta", "call_signature", "check_interface", "top",
    "UnknownInterface", "UnboundName", "NoSuchMember", "OperatorTypeError", "UnboundedLoopGuard",
    "TypeMismatch", "UnknownMethod", "AmountOutOfDeclaredRange", "ShadowedVariable",
    "FieldTypeMismatch", "BodyExceedsDeclaredBound", "MissingInterfaceMember",
    "MalformedInterface",
]
