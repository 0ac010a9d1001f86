"""Executable metatheory for the gas-bound type system.

The functions here type whole machine stacks and configurations, replay
runs step by step while re-checking well-typedness, and generate random
well-typed programs to drive those checks.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .chain import ChainState, exec_transaction_traced, genesis, transaction_config
from .env import (
    Binding, MethodTable, VarEnv, adjust_balance, canonical_json, state_update_field,
    total_balance, var_update,
)
from .machine import (
    Config, EnvFrame, EvalError, ExcFrame, ScopeEnd, Terminal, eval_expr, step_rule,
)
from .syntax import (
    BOOL, INT, MAGIC_VARS, SKIP, THROW, TOP_INTERFACE, AddrVal, Assign, Balance, BaseType,
    Blockchain, BoolT, BoolVal, Call, ContractDecl, DeclVar, Expr, Field, For, If, IfaceT,
    InterfaceDecl, IntT, IntVal, LThisField, LVar, MemberType, MethodDecl, MethodType, Op,
    RangeT, Seq, Skip, Stm, Throw, Transaction, Val, Value, Var, make_interface,
)
from .typesys import (
    Delta, Gamma, TypeCheckError, agree_state, agree_table, agree_vars, check_declarations,
    has_type, method_delta, min_gas, subtype, top, type_expr, type_stmt, vars_delta,
)


class ExtractionUndefined(Exception):
    pass


class CounterexampleFound(AssertionError):
    def __init__(self, message: str, trace: Sequence[str] = ()):
        super().__init__(message)
        self.trace = list(trace)


Formals = Callable[[Call], Sequence[str]]


# -- extraction and stack typing --------------------------------------------------


def extract(gamma: Gamma, delta: Delta, stack, formals: Formals | None = None) -> dict[str, BaseType]:
    """Type environment in force after the top frame of `stack` has stepped."""
    if not stack:
        raise ExtractionUndefined("empty stack")
    top_frame = stack[-1]
    if isinstance(top_frame, EnvFrame):
        try:
            return vars_delta(top_frame.env)
        except TypeCheckError as exc:
            raise ExtractionUndefined(exc.message) from None
    if isinstance(top_frame, DeclVar):
        return {**delta, top_frame.name: top_frame.type}
    if isinstance(top_frame, ScopeEnd):
        if top_frame.name not in delta:
            raise ExtractionUndefined(f"{top_frame.name!r} is not in scope")
        return {k: t for k, t in delta.items() if k != top_frame.name}
    if isinstance(top_frame, Call):
        t = _try_type(gamma, delta, top_frame.target)
        if not isinstance(t, IfaceT):
            raise ExtractionUndefined("call receiver has no interface type")
        sig = gamma.interfaces[t.name].get(top_frame.method) if t.name in gamma.interfaces else None
        if not isinstance(sig, MethodType):
            raise ExtractionUndefined(f"{t.name} has no method {top_frame.method!r}")
        if formals is None:
            raise ExtractionUndefined("formal parameter names are not available")
        try:
            names = list(formals(top_frame))
        except (EvalError, KeyError, LookupError) as exc:
            raise ExtractionUndefined(f"cannot resolve callee: {exc}") from None
        if len(names) != len(sig.params):
            raise ExtractionUndefined("arity mismatch between callee and signature")
        return method_delta(gamma, t.name, names, sig)
    return dict(delta)


def _try_type(gamma: Gamma, delta: Delta, e: Expr):
    try:
        return type_expr(gamma, delta, e)
    except TypeCheckError:
        return None


def formals_resolver(table: MethodTable, c: Config) -> Formals:
    """Resolve the callee's parameter names by evaluating the receiver in `c`."""
    def resolve(call: Call) -> Sequence[str]:
        Y = eval_expr(c.state, c.vars, call.target)
        if not isinstance(Y, AddrVal):
            raise EvalError("receiver is not an address")
        return table[Y.a][call.method].params
    return resolve


def type_stack(gamma: Gamma, delta: Delta, stack) -> int:
    """Total step bound of the frames on `stack` (top last)."""
    total = 0
    d: Mapping[str, BaseType] = delta
    for frame in reversed(stack):
        if isinstance(frame, ExcFrame):
            return total
        if isinstance(frame, ScopeEnd):
            if frame.name not in d:
                raise ExtractionUndefined(f"{frame.name!r} is not in scope")
            d = {k: t for k, t in d.items() if k != frame.name}
        elif isinstance(frame, EnvFrame):
            try:
                d = vars_delta(frame.env)
            except TypeCheckError as exc:
                raise ExtractionUndefined(exc.message) from None
        else:
            total += type_stmt(gamma, d, frame)
    return total


def stack_bound(gamma: Gamma, delta: Delta, stack) -> int | None:
    try:
        return type_stack(gamma, delta, stack)
    except (TypeCheckError, ExtractionUndefined):
        return None


def config_problems(gamma: Gamma, delta: Delta, c: Config) -> list[str]:
    n = stack_bound(gamma, delta, c.stack)
    problems = []
    if n is None:
        problems.append("stack is not typeable")
    elif not n < c.gas:
        problems.append(f"stack bound {n} is not below gas {c.gas}")
    problems += agree_state(gamma, c.state)
    problems += agree_vars(gamma, delta, c.vars)
    return problems


def type_config(gamma: Gamma, delta: Delta, c: Config) -> bool:
    return not config_problems(gamma, delta, c)


# -- subject reduction ------------------------------------------------------------


@dataclass
class Verdict:
    status: str  # "passed" or "skipped"
    steps: int = 0
    initial_bound: int | None = None
    gas_used: int = 0
    terminal: Terminal | None = None
    reason: str | None = None


def check_subject_reduction(gamma: Gamma, table: MethodTable, c: Config, delta: Delta,
                            steps: int | None = None) -> Verdict:
    """Run from `c`, re-checking well-typedness after every step.

    Raises CounterexampleFound when a step leaves the typed world, pushes an
    out-of-gas exception, or fails to lower the stack bound by the gas spent.
    """
    pre = config_problems(gamma, delta, c)
    if pre:
        return Verdict("skipped", reason="; ".join(pre))
    if agree_table(gamma, table):
        return Verdict("skipped", reason="method table does not agree with Γ")
    n = type_stack(gamma, delta, c.stack)
    initial, g0 = n, c.gas
    trace: list[str] = []
    count = 0
    while steps is None or count < steps:
        out = step_rule(table, c)
        if isinstance(out, Terminal):
            return Verdict("passed", count, initial, g0 - c.gas, out)
        rule, nxt = out
        trace.append(f"{rule} gas={nxt.gas} depth={len(nxt.stack)}")
        top_frame = nxt.top
        if isinstance(top_frame, ExcFrame):
            if top_frame.label == "oog":
                raise CounterexampleFound("well-typed configuration ran out of gas", trace)
            new_delta = dict(delta)
        else:
            try:
                new_delta = extract(gamma, delta, c.stack, formals_resolver(table, c))
            except ExtractionUndefined as exc:
                raise CounterexampleFound(f"extraction failed after {rule}: {exc}", trace) from None
        problems = config_problems(gamma, new_delta, nxt)
        if problems:
            raise CounterexampleFound(f"after {rule}: " + "; ".join(problems), trace)
        n2 = type_stack(gamma, new_delta, nxt.stack)
        if n2 > n - (c.gas - nxt.gas):
            raise CounterexampleFound(f"bound did not decrease after {rule}: {n} -> {n2}", trace)
        c, delta, n = nxt, new_delta, n2
        count += 1
    return Verdict("passed", count, initial, g0 - c.gas, None)


# -- independent rule matcher (determinism oracle) -------------------------------------


def _evaluates(c: Config, e: Expr) -> Value | None:
    try:
        return eval_expr(c.state, c.vars, e)
    except EvalError:
        return None


def _this_address(c: Config) -> str | None:
    if "this" not in c.vars:
        return None
    X = c.vars.lookup("this")
    return X.a if isinstance(X, AddrVal) and X.a in c.state else None


def _call_premises(table: MethodTable, c: Config, s: Call) -> tuple[bool, bool]:
    """(all premises except the balance check hold, the balance check holds)."""
    Y = _evaluates(c, s.target)
    n = _evaluates(c, s.amount)
    args = [_evaluates(c, a) for a in s.args]
    X = _this_address(c)
    ok = (isinstance(Y, AddrVal) and isinstance(n, IntVal) and all(a is not None for a in args)
          and X is not None and Y.a in c.state and s.method in table.get(Y.a, {})
          and len(table[Y.a][s.method].params) == len(args))
    if not ok:
        return False, False
    return True, n.i <= c.state[X]["balance"].i


def enabled_rules(table: MethodTable, c: Config) -> list[str]:
    """Every rule whose premises hold in `c`, checked premise by premise."""
    if not c.stack:
        return []
    s = c.stack[-1]
    g = c.gas
    rules = []
    if isinstance(s, ExcFrame):
        return []
    if isinstance(s, ScopeEnd):
        if c.vars.bindings and c.vars.bindings[0].name == s.name:
            rules.append("ss-delv")
        return rules
    if isinstance(s, EnvFrame):
        return ["ss-return"]
    if g == 0:
        rules.append("ss-oog")
    if g >= 1:
        if isinstance(s, Skip):
            rules.append("ss-skip")
        if isinstance(s, Seq):
            rules.append("ss-seq")
        if isinstance(s, Throw):
            rules.append("ss-throw")
        if isinstance(s, If) and isinstance(_evaluates(c, s.cond), BoolVal):
            rules.append("ss-if")
        if isinstance(s, For):
            v = _evaluates(c, s.guard)
            if isinstance(v, IntVal) and v.i >= 1:
                rules.append("ss-for_T")
            if isinstance(v, IntVal) and v.i < 1:
                rules.append("ss-for_F")
        if isinstance(s, DeclVar) and s.name not in c.vars and _evaluates(c, s.init) is not None:
            rules.append("ss-decv")
        if isinstance(s, Assign) and isinstance(s.target, LVar):
            if s.target.name in c.vars and _evaluates(c, s.e) is not None:
                rules.append("ss-assv")
        if isinstance(s, Assign) and isinstance(s.target, LThisField):
            X = _this_address(c)
            if X is not None and s.target.name in c.state[X] and s.target.name != "balance" \
                    and _evaluates(c, s.e) is not None:
                rules.append("ss-assf")
        if isinstance(s, Call):
            ok, funded = _call_premises(table, c, s)
            if ok and funded:
                rules.append("ss-call")
            if ok and not funded:
                rules.append("ss-neg")
        if not rules:
            rules.append("ss-rte")
    return rules


# -- random program generation ----------------------------------------------------------


@dataclass(frozen=True)
class GenConfig:
    max_depth: int = 4
    max_loop: int = 3
    max_methods: int = 5
    seed: int = 0
    max_contracts: int = 3
    max_fields: int = 3

    def __post_init__(self):
        for name in ("max_depth", "max_loop", "max_methods", "max_contracts"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class GeneratedProgram:
    interfaces: tuple[InterfaceDecl, ...]
    contracts: tuple[ContractDecl, ...]
    transaction: Transaction
    gamma: Gamma
    min_gas: int

    @property
    def blockchain(self) -> Blockchain:
        return Blockchain(self.contracts, self.interfaces, (self.transaction,))

    def with_gas(self, gas: int) -> GeneratedProgram:
        t = self.transaction
        tx = Transaction(t.caller, t.target, t.method, t.args, t.amount, gas)
        return GeneratedProgram(self.interfaces, self.contracts, tx, self.gamma, self.min_gas)


CALLER = "A"


@dataclass
class _Callee:
    address: str
    iface: str
    name: str
    sig: MethodType


class _Gen:
    def __init__(self, cfg: GenConfig):
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.fresh = 0
        self.members: dict[str, dict[str, MemberType]] = {}
        self.addresses: dict[str, str] = {}  # address -> interface

    # context
    def gamma(self) -> Gamma:
        return Gamma.build([make_interface(I, m) for I, m in self.members.items()],
                           dict(self.addresses))

    def name(self, prefix: str) -> str:
        self.fresh += 1
        return f"{prefix}{self.fresh}"

    # types and values
    def small_range(self) -> RangeT:
        lo = self.rng.randint(-2, 2)
        return RangeT(lo, lo + self.rng.randint(0, 4))

    def base_type(self, allow_iface: bool = True) -> BaseType:
        r = self.rng.random()
        if r < 0.45:
            return self.small_range()
        if r < 0.65:
            return INT
        if r < 0.85 or not allow_iface or not self.addresses:
            return BOOL
        return IfaceT(self.addresses[self.rng.choice(sorted(self.addresses))])

    def inhabitant(self, gamma: Gamma, t: BaseType) -> Value:
        if isinstance(t, RangeT):
            # endpoints are where interval rules go wrong
            return IntVal(self.rng.choice([t.lo, t.hi, self.rng.randint(t.lo, t.hi)]))
        if isinstance(t, IntT):
            return IntVal(self.rng.randint(-5, 20))
        if isinstance(t, BoolT):
            return BoolVal(self.rng.random() < 0.5)
        fits = [X for X, I in sorted(self.addresses.items()) if subtype(gamma, IfaceT(I), t)]
        return AddrVal(self.rng.choice(fits))

    # expressions
    def _leaves(self, gamma: Gamma, delta: Delta) -> list[Expr]:
        out: list[Expr] = [Var(x) for x in sorted(delta)]
        this_t = delta.get("this")
        if isinstance(this_t, IfaceT):
            for p in sorted(gamma.interfaces[this_t.name].fields()):
                out.append(Balance(Var("this")) if p == "balance" else Field(Var("this"), p))
        for X in sorted(self.addresses):
            out.append(Val(AddrVal(X)))
        return out

    def any_expr(self, gamma: Gamma, delta: Delta, depth: int, want: str) -> Expr:
        """Random expression of kind 'int', 'bool' or 'addr' (not necessarily typeable)."""
        rng = self.rng
        leaves = [e for e in self._leaves(gamma, delta) if self._kind(gamma, delta, e) == want]
        if depth <= 0 or rng.random() < 0.4:
            if leaves and rng.random() < 0.6:
                return rng.choice(leaves)
            if want == "int":
                return Val(IntVal(rng.randint(-3, 5)))
            if want == "bool":
                return Val(BoolVal(rng.random() < 0.5))
            return rng.choice(leaves) if leaves else Val(AddrVal(rng.choice(sorted(self.addresses))))
        if want == "int":
            r = rng.random()
            if r < 0.7:
                op = rng.choice(["+", "-", "*", "+", "-"])
                return Op(op, (self.any_expr(gamma, delta, depth - 1, "int"),
                               self.any_expr(gamma, delta, depth - 1, "int")))
            if r < 0.8:
                return Op("neg", (self.any_expr(gamma, delta, depth - 1, "int"),))
            if r < 0.9:
                return Op("/", (self.any_expr(gamma, delta, depth - 1, "int"),
                                self.any_expr(gamma, delta, depth - 1, "int")))
            return Balance(self.any_expr(gamma, delta, depth - 1, "addr"))
        if want == "bool":
            r = rng.random()
            if r < 0.5:
                op = rng.choice(["<", "<=", ">", ">=", "=="])
                return Op(op, (self.any_expr(gamma, delta, depth - 1, "int"),
                               self.any_expr(gamma, delta, depth - 1, "int")))
            if r < 0.65:
                return Op("not", (self.any_expr(gamma, delta, depth - 1, "bool"),))
            if r < 0.9:
                return Op(rng.choice(["and", "or"]), (self.any_expr(gamma, delta, depth - 1, "bool"),
                                                      self.any_expr(gamma, delta, depth - 1, "bool")))
            return Op("==", (self.any_expr(gamma, delta, depth - 1, "addr"),
                             self.any_expr(gamma, delta, depth - 1, "addr")))
        return rng.choice(leaves) if leaves else Val(AddrVal(rng.choice(sorted(self.addresses))))

    @staticmethod
    def _kind(gamma: Gamma, delta: Delta, e: Expr) -> str | None:
        t = _try_type(gamma, delta, e)
        if isinstance(t, (IntT, RangeT)):
            return "int"
        if isinstance(t, BoolT):
            return "bool"
        if isinstance(t, IfaceT):
            return "addr"
        return None

    def expr(self, gamma: Gamma, delta: Delta, t: BaseType, depth: int = 2) -> Expr:
        """Random expression whose minimal type is a subtype of `t`."""
        want = "int" if isinstance(t, (IntT, RangeT)) else "bool" if isinstance(t, BoolT) else "addr"
        for _ in range(4):
            e = self.any_expr(gamma, delta, depth, want)
            et = _try_type(gamma, delta, e)
            if et is not None and subtype(gamma, et, t):
                return e
        return Val(self.inhabitant(gamma, t))

    # statements
    def stmt(self, gamma: Gamma, delta: Delta, depth: int, callees: list[_Callee]) -> Stm:
        rng = self.rng
        kinds = ["skip", "assign", "assign", "call", "call"]
        if depth > 0:
            kinds += ["seq", "seq", "if", "for", "for", "decl"]
        if rng.random() < 0.02:
            return THROW
        kind = rng.choice(kinds)
        if kind == "seq":
            return Seq(self.stmt(gamma, delta, depth - 1, callees),
                       self.stmt(gamma, delta, depth - 1, callees))
        if kind == "if":
            return If(self.expr(gamma, delta, BOOL), self.stmt(gamma, delta, depth - 1, callees),
                      self.stmt(gamma, delta, depth - 1, callees))
        if kind == "for":
            lo = rng.choice([-1, 0, 1, 1])
            guard_t = RangeT(lo, max(lo, rng.randint(1, self.cfg.max_loop)))
            return For(self.expr(gamma, delta, guard_t), self.stmt(gamma, delta, depth - 1, callees))
        if kind == "decl":
            x = self.name("v")
            t = self.base_type()
            init = self.expr(gamma, delta, t)
            return DeclVar(t, x, init, self.stmt(gamma, {**delta, x: t}, depth - 1, callees))
        if kind == "assign":
            targets: list[tuple[object, BaseType]] = [
                (LVar(x), t) for x, t in sorted(delta.items()) if x not in MAGIC_VARS]
            this_t = delta.get("this")
            if isinstance(this_t, IfaceT):
                targets += [(LThisField(p), t) for p, t in
                            sorted(gamma.interfaces[this_t.name].fields().items()) if p != "balance"]
            if not targets:
                return SKIP
            lv, t = rng.choice(targets)
            return Assign(lv, self.expr(gamma, delta, t))
        if kind == "call":
            return self.call(gamma, delta, callees)
        return SKIP

    def call(self, gamma: Gamma, delta: Delta, callees: list[_Callee]) -> Stm:
        rng = self.rng
        if not callees or rng.random() < 0.15:
            if "sender" in delta:
                amount = self.expr(gamma, delta, RangeT(0, 3))
                return Call(Var("sender"), "send", (), amount)
            if not self.addresses:
                return SKIP
            X = rng.choice(sorted(self.addresses))
            return Call(Val(AddrVal(X)), "send", (), Val(IntVal(rng.randint(0, 2))))
        cal = rng.choice(callees)
        receivers: list[Expr] = [Val(AddrVal(cal.address))]
        receivers += [Var(x) for x, t in sorted(delta.items()) if t == IfaceT(cal.iface)]
        target = rng.choice(receivers)
        args = tuple(self.expr(gamma, delta, b) for b in cal.sig.params)
        amount = self.expr(gamma, delta, RangeT(cal.sig.lo, cal.sig.hi), depth=1)
        return Call(target, cal.name, args, amount)

    # whole programs
    def program(self) -> GeneratedProgram:
        rng, cfg = self.rng, self.cfg
        k = rng.randint(1, cfg.max_contracts)
        names = [f"C{i}" for i in range(k)]
        for i, X in enumerate(names):
            self.addresses[X] = f"I{i}"
            # a private tag field keeps generated interfaces pairwise incomparable
            self.members[f"I{i}"] = {f"tag{i}": RangeT(i, i)}
        self.addresses[CALLER] = TOP_INTERFACE
        field_values: dict[str, list[tuple[str, Value]]] = {X: [] for X in names}
        for i, X in enumerate(names):
            for _ in range(rng.randint(0, cfg.max_fields)):
                p = self.name("f")
                t = self.base_type()
                self.members[f"I{i}"][p] = t
        gamma = self.gamma()
        for i, X in enumerate(names):
            for p, t in self.members[f"I{i}"].items():
                field_values[X].append((p, self.inhabitant(gamma, t)))

        methods: dict[str, list[MethodDecl]] = {X: [] for X in names}
        callees: list[_Callee] = []
        for _ in range(rng.randint(2, max(2, cfg.max_methods))):
            X = rng.choice(names)
            I = self.addresses[X]
            f = self.name("m")
            params = [self.name("p") for _ in range(rng.randint(0, 2))]
            ptypes = [self.base_type() for _ in params]
            lo = rng.randint(0, 2)
            sig0 = MethodType(tuple(ptypes), lo, lo + rng.randint(0, 3), 1)
            gamma = self.gamma()
            delta = method_delta(gamma, I, params, sig0)
            body = self.stmt(gamma, delta, rng.randint(min(2, cfg.max_depth), cfg.max_depth), callees)
            n = type_stmt(gamma, delta, body)
            sig = MethodType(sig0.params, sig0.lo, sig0.hi, n + rng.choice([0, 0, 0, 1, 4]))
            self.members[I][f] = sig
            methods[X].append(MethodDecl(f, tuple(params), body))
            callees.append(_Callee(X, I, f, sig))

        gamma = self.gamma()
        interfaces = tuple(make_interface(I, m) for I, m in self.members.items())
        if rng.random() < 0.6:
            target = max(callees, key=lambda m: m.sig.steps)
        else:
            target = rng.choice(callees)
        args = tuple(self.inhabitant(gamma, b) for b in target.sig.params)
        amount = rng.randint(target.sig.lo, target.sig.hi)
        tx0 = Transaction(CALLER, target.address, target.name, args, amount, 1)
        need = min_gas(gamma, {"this": top()}, tx0.as_call())
        gas = need + (0 if rng.random() < 0.5 else rng.randint(1, 5))
        contracts = [ContractDecl(X, rng.randint(0, 20), tuple(field_values[X]),
                                  tuple(methods[X]), self.addresses[X]) for X in names]
        contracts.append(ContractDecl(CALLER, gas + amount + rng.randint(0, 100)))
        tx = Transaction(CALLER, target.address, target.name, args, amount, gas)
        return GeneratedProgram(interfaces, tuple(contracts), tx, gamma, need)


def generate_program(cfg: GenConfig) -> GeneratedProgram:
    """Random well-typed program plus one transaction funded with at least min_gas."""
    prog = _Gen(cfg).program()
    check_declarations(prog.gamma, prog.contracts, prog.interfaces)
    return prog


def program_chain(prog: GeneratedProgram) -> ChainState:
    return genesis(prog.blockchain)


def initial_typed_config(prog: GeneratedProgram) -> tuple[Config, dict[str, BaseType]]:
    cs = program_chain(prog)
    return transaction_config(cs, prog.transaction), {"this": top()}


# -- suites -----------------------------------------------------------------------------


@dataclass
class SuiteResult:
    name: str
    cases: int = 0
    failures: list[dict] = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {"name": self.name, "cases": self.cases, "ok": self.ok,
                "failures": self.failures[:20], "stats": self.stats,
                "seconds": round(self.seconds, 3)}


def _gen_config(seed: int, i: int) -> GenConfig:
    return GenConfig(seed=seed * 1_000_003 + i)


def subject_reduction_suite(cases: int = 1000, seed: int = 0) -> SuiteResult:
    """Subject reduction and the no-oog guarantee on generated programs, plus bound checks."""
    res = SuiteResult("subject_reduction")
    t0 = time.perf_counter()
    outcomes: dict[str, int] = {}
    steps = 0
    for i in range(cases):
        cfg = _gen_config(seed, i)
        prog = generate_program(cfg)
        cs = program_chain(prog)
        for gas in sorted({prog.transaction.gas, prog.min_gas}):
            c, delta = transaction_config(cs, prog.with_gas(gas).transaction), {"this": top()}
            try:
                v = check_subject_reduction(prog.gamma, cs.table, c, delta)
            except CounterexampleFound as exc:
                res.failures.append({"seed": cfg.seed, "gas": gas, "error": str(exc),
                                     "trace": exc.trace[-10:]})
                continue
            if v.status != "passed":
                res.failures.append({"seed": cfg.seed, "gas": gas, "error": f"skipped: {v.reason}"})
                continue
            steps += v.steps
            label = str(v.terminal)
            outcomes[label] = outcomes.get(label, 0) + 1
            if v.gas_used > v.initial_bound:
                res.failures.append({"seed": cfg.seed, "gas": gas,
                                     "error": f"used {v.gas_used} > bound {v.initial_bound}"})
            if v.terminal is not None and v.terminal.label == "oog":
                res.failures.append({"seed": cfg.seed, "gas": gas, "error": "oog"})
        res.cases += 1
    res.stats = {"outcomes": outcomes, "steps": steps}
    res.seconds = time.perf_counter() - t0
    return res


def rollback_suite(cases: int = 200, seed: int = 0) -> SuiteResult:
    """Failing transactions leave the state untouched except for the gas burn."""
    res = SuiteResult("rollback")
    t0 = time.perf_counter()
    labels: dict[str, int] = {}
    i = 0
    while res.cases < cases:
        cfg = _gen_config(seed + 7, i)
        i += 1
        prog = generate_program(cfg)
        cs = program_chain(prog)
        _, probe = exec_transaction_traced(cs)
        if probe.terminal.done:
            used = prog.transaction.gas - probe.config.gas
            rng = random.Random(cfg.seed)
            prog = prog.with_gas(rng.randint(1, used - 1))
            cs = program_chain(prog)
        pre = cs.state
        after, run = exec_transaction_traced(cs)
        if run is None or run.terminal.done:
            res.failures.append({"seed": cfg.seed, "error": "transaction did not fail"})
            res.cases += 1
            continue
        used = prog.transaction.gas - run.config.gas
        expected = canonical_json(adjust_balance(pre, CALLER, -used))
        if canonical_json(after.state) != expected:
            res.failures.append({"seed": cfg.seed, "error": "state differs from rolled-back state"})
        if total_balance(after.state) != total_balance(pre) - used:
            res.failures.append({"seed": cfg.seed, "error": "currency not conserved up to gas"})
        labels[run.terminal.label] = labels.get(run.terminal.label, 0) + 1
        res.cases += 1
    res.stats = {"labels": labels}
    res.seconds = time.perf_counter() - t0
    return res


def _fuzz_stmt(rng: random.Random, names: list[str], methods: list[str], depth: int) -> Stm:
    """Untyped random statement, frequently ill-formed, to reach the error rules."""
    def ex(d: int) -> Expr:
        r = rng.random()
        if d <= 0 or r < 0.35:
            return rng.choice([Val(IntVal(rng.randint(-2, 3))), Val(BoolVal(rng.random() < .5)),
                               Var(rng.choice(names)), Val(AddrVal(rng.choice(["C0", "A", "Z"])))])
        if r < 0.5:
            return Balance(ex(d - 1))
        if r < 0.6:
            return Field(ex(d - 1), rng.choice(["f1", "q"]))
        op = rng.choice(["+", "-", "*", "/", "<", "==", "and", "not", "neg"])
        arity = 1 if op in ("not", "neg") else 2
        return Op(op, tuple(ex(d - 1) for _ in range(arity)))

    r = rng.random()
    if depth <= 0 or r < 0.2:
        return rng.choice([SKIP, THROW, Assign(LVar(rng.choice(names)), ex(1)),
                           Assign(LThisField(rng.choice(["f1", "q"])), ex(1))])
    if r < 0.35:
        return Seq(_fuzz_stmt(rng, names, methods, depth - 1), _fuzz_stmt(rng, names, methods, depth - 1))
    if r < 0.45:
        return If(ex(1), _fuzz_stmt(rng, names, methods, depth - 1),
                  _fuzz_stmt(rng, names, methods, depth - 1))
    if r < 0.6:
        return For(ex(1), _fuzz_stmt(rng, names, methods, depth - 1))
    if r < 0.75:
        return DeclVar(INT, rng.choice(names), ex(1), _fuzz_stmt(rng, names, methods, depth - 1))
    target = rng.choice([Val(AddrVal("C0")), Val(AddrVal("A")), Var("this"), Var("sender"), ex(0)])
    return Call(target, rng.choice(methods), tuple(ex(0) for _ in range(rng.randint(0, 2))), ex(1))


def fuzz_chain(rng: random.Random) -> ChainState:
    names = ["x", "y", "value", "sender"]
    methods = ["g", "h", "send", "nope"]
    c0 = ContractDecl("C0", rng.randint(0, 10), (("f1", IntVal(1)),),
                      tuple(MethodDecl(m, tuple(rng.sample(["x", "y"], rng.randint(0, 2))),
                                       _fuzz_stmt(rng, names, methods, 3)) for m in ("g", "h")))
    caller = ContractDecl("A", 1000)
    txs = tuple(Transaction("A", "C0", rng.choice(["g", "h", "send"]),
                            tuple(IntVal(rng.randint(-1, 3)) for _ in range(rng.randint(0, 2))),
                            rng.randint(-1, 3), rng.randint(0, 40)) for _ in range(3))
    return genesis(Blockchain((c0, caller), (), txs))


def determinism_suite(steps: int = 100_000, seed: int = 0) -> SuiteResult:
    """Exactly one rule applies per step; gas drops by 0 or 1; currency is conserved."""
    res = SuiteResult("determinism")
    t0 = time.perf_counter()
    rng = random.Random(seed)
    rule_counts: dict[str, int] = {}
    total = 0
    i = 0

    def check_run(table: MethodTable, c: Config, where: str):
        nonlocal total
        while True:
            rules = enabled_rules(table, c)
            out = step_rule(table, c)
            if isinstance(out, Terminal):
                if rules:
                    res.failures.append({"where": where, "error": f"terminal but {rules} enabled"})
                return c
            rule, nxt = out
            total += 1
            rule_counts[rule] = rule_counts.get(rule, 0) + 1
            if rules != [rule]:
                res.failures.append({"where": where, "error": f"step used {rule}, enabled {rules}"})
            if c.gas - nxt.gas not in (0, 1):
                res.failures.append({"where": where, "error": f"gas {c.gas} -> {nxt.gas}"})
            if total_balance(nxt.state) != total_balance(c.state):
                res.failures.append({"where": where, "error": f"{rule} changed total currency"})
            c = nxt

    while total < steps:
        i += 1
        if i % 2:
            prog = generate_program(_gen_config(seed + 13, i))
            cs = genesis(Blockchain(prog.contracts, prog.interfaces,
                                    (prog.with_gas(rng.randint(0, prog.transaction.gas)).transaction,)))
        else:
            cs = fuzz_chain(rng)
        while cs.pending:
            tx = cs.pending[0]
            before = total_balance(cs.state)
            if tx.caller in cs.state and tx.gas <= cs.state[tx.caller]["balance"].i - tx.amount:
                check_run(cs.table, transaction_config(cs, tx), f"run {i}")
            cs2, run = exec_transaction_traced(cs, keep_run=False)
            receipt = cs2.log[-1]
            if total_balance(cs2.state) != before - receipt.gas_used:
                res.failures.append({"where": f"run {i}", "error": "transaction-level currency"})
            cs = cs2
        res.cases = i
    res.stats = {"steps": total, "rules": dict(sorted(rule_counts.items()))}
    res.seconds = time.perf_counter() - t0
    return res


# -- agreement and safety lemmas ---------------------------------------------------------


def _random_env(gen: _Gen, gamma: Gamma, count: int) -> tuple[dict[str, BaseType], VarEnv]:
    delta: dict[str, BaseType] = {}
    bindings = []
    for _ in range(count):
        x = gen.name("x")
        t = gen.base_type()
        delta[x] = t
        bindings.append(Binding(x, gen.inhabitant(gamma, t), t))
    return delta, VarEnv(bindings)


def lemma_suites(cases: int = 1000, seed: int = 0) -> dict[str, SuiteResult]:
    """Strengthening, the two update lemmas and expression safety on random instances."""
    out = {name: SuiteResult(name) for name in
           ("strengthening", "update_variables", "update_fields", "expression_safety")}
    t0 = time.perf_counter()
    attempts = 0
    while any(r.cases < cases for r in out.values()) and attempts < 20 * cases:
        cfg = _gen_config(seed + 29, attempts)
        attempts += 1
        prog = generate_program(cfg)
        gen = _Gen(cfg)
        gen.addresses = dict(prog.gamma.bindings)
        gen.members = {I: {k: t for k, t in d.members.items() if k not in ("balance", "send")}
                       for I, d in prog.gamma.interfaces.items() if I != TOP_INTERFACE}
        gamma = prog.gamma
        state = program_chain(prog).state
        rng = gen.rng
        delta, env = _random_env(gen, gamma, rng.randint(1, 4))

        # strengthening: drop a typing for a name the environment does not bind
        r = out["strengthening"]
        if r.cases < cases:
            x, t = gen.name("x"), gen.base_type()
            if agree_vars(gamma, {**delta, x: t}, env):
                r.failures.append({"seed": cfg.seed, "error": "precondition failed"})
            elif agree_vars(gamma, delta, env):
                r.failures.append({"seed": cfg.seed, "error": "strengthening broke agreement"})
            r.cases += 1

        r = out["update_variables"]
        if r.cases < cases:
            b = rng.choice(env.bindings)
            v = gen.inhabitant(gamma, delta[b.name])
            if agree_vars(gamma, delta, var_update(env, b.name, v)):
                r.failures.append({"seed": cfg.seed, "error": f"update of {b.name} broke agreement"})
            r.cases += 1

        r = out["update_fields"]
        candidates = [(X, p) for X, fs in sorted(state.items()) for p in fs if p != "balance"]
        if r.cases < cases and candidates:
            X, p = rng.choice(candidates)
            t = gamma.member(gamma.bindings[X], p)
            s2 = state_update_field(state, X, p, gen.inhabitant(gamma, t))
            if agree_state(gamma, s2):
                r.failures.append({"seed": cfg.seed, "error": f"update of {X}.{p} broke agreement"})
            r.cases += 1

        # safety: only instances that type and evaluate count; each expression is
        # evaluated under several environments drawn for the same Δ
        r = out["expression_safety"]
        if r.cases < cases:
            d2 = {**delta, "this": IfaceT(gamma.bindings["C0"])}
            e = gen.any_expr(gamma, d2, rng.randint(0, 3), rng.choice(["int", "int", "bool", "addr"]))
            et = _try_type(gamma, d2, e)
            evaluated = False
            for _ in range(8 if et is not None else 0):
                env2 = VarEnv([Binding(b.name, gen.inhabitant(gamma, delta[b.name]), b.type)
                               for b in env]).push("this", AddrVal("C0"), d2["this"])
                v = _evaluates(Config((), state, env2, 0), e)
                if v is None:
                    continue
                evaluated = True
                if not has_type(gamma, v, et):
                    r.failures.append({"seed": cfg.seed, "error": f"{e} evaluated to {v} outside {et}"})
                    break
            r.cases += evaluated

    elapsed = time.perf_counter() - t0
    for r in out.values():
        r.seconds = elapsed
        r.stats = {"attempts": attempts}
    return out


def run_all(cases: int = 1000, seed: int = 0, steps: int = 100_000) -> dict:
    """Every suite, as a JSON-ready report."""
    suites = [subject_reduction_suite(cases, seed), rollback_suite(max(200, cases // 5), seed),
              determinism_suite(steps, seed)]
    suites += list(lemma_suites(cases, seed).values())
    return {"seed": seed, "ok": all(s.ok for s in suites),
            "suites": {s.name: s.to_json() for s in suites}}


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2)


__all__ = [
    "ExtractionUndefined", "CounterexampleFound", "extract", "formals_resolver", "type_stack",
    "type_config", "config_problems", "check_subject_reduction", "Verdict", "enabled_rules",
    "GenConfig", "GeneratedProgram", "generate_program", "initial_typed_config",
    "subject_reduction_suite", "rollback_suite", "determinism_suite", "lemma_suites", "run_all",
    "report_json", "SuiteResult", "program_chain", "formals_resolver", "stack_bound",
]
