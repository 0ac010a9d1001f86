"""Runtime environments and elaboration of contract declarations.

Variable environments keep their bindings in order (newest first) because
scopes are opened by prepending and closed by popping the head. All other
environments are plain mappings that are copied on update and never mutated
in place.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

from .syntax import (
    SKIP, AddrVal, BaseType, BoolVal, ContractDecl, IfaceT, InterfaceDecl, IntVal, MethodType,
    RangeT, Stm, TOP_INTERFACE, Value,
)


class EnvError(Exception):
    pass


class Unbound(EnvError):
    pass


class DuplicateContract(EnvError):
    pass


@dataclass(frozen=True, slots=True)
class Binding:
    name: str
    value: Value
    type: BaseType | None = None


class VarEnv:
    """Ordered, immutable variable environment of (name, value, type) triples."""

    __slots__ = ("bindings",)

    def __init__(self, bindings: Sequence[Binding] = ()):
        self.bindings = tuple(bindings)

    @classmethod
    def of(cls, *triples) -> VarEnv:
        return cls(Binding(*t) for t in triples)

    def __iter__(self) -> Iterator[Binding]:
        return iter(self.bindings)

    def __len__(self) -> int:
        return len(self.bindings)

    def __contains__(self, name: str) -> bool:
        return any(b.name == name for b in self.bindings)

    def __eq__(self, other) -> bool:
        return isinstance(other, VarEnv) and self.bindings == other.bindings

    def __hash__(self) -> int:
        return hash(self.bindings)

    def __repr__(self) -> str:
        inner = ", ".join(f"({b.name}, {b.value}, {b.type})" for b in self.bindings)
        return f"VarEnv[{inner}]"

    def names(self) -> list[str]:
        return [b.name for b in self.bindings]

    def lookup(self, name: str) -> Value:
        for b in self.bindings:
            if b.name == name:
                return b.value
        raise Unbound(name)

    def binding(self, name: str) -> Binding:
        for b in self.bindings:
            if b.name == name:
                return b
        raise Unbound(name)

    def push(self, name: str, value: Value, type: BaseType | None = None) -> VarEnv:
        return VarEnv((Binding(name, value, type),) + self.bindings)

    def pop(self) -> tuple[Binding, VarEnv]:
        if not self.bindings:
            raise Unbound("pop from empty environment")
        return self.bindings[0], VarEnv(self.bindings[1:])

    def update(self, name: str, value: Value) -> VarEnv:
        return var_update(self, name, value)


EMPTY_VARS = VarEnv()


def var_update(env: VarEnv, x: str, v: Value) -> VarEnv:
    """Replace the value bound to `x`, keeping its position and annotation."""
    out = list(env.bindings)
    for i, b in enumerate(out):
        if b.name == x:
            out[i] = Binding(x, v, b.type)
            return VarEnv(out)
    raise Unbound(x)


# -- fields, state, methods ---------------------------------------------------

FieldEnv = Mapping[str, Value]
State = Mapping[str, FieldEnv]


@dataclass(frozen=True, slots=True)
class Method:
    """A method body plus the signature used to annotate its call frames."""

    params: tuple[str, ...]
    body: Stm
    this_type: BaseType | None = None
    sig: MethodType | None = None


SEND = Method((), SKIP)

MethodEnv = Mapping[str, Method]
MethodTable = Mapping[str, MethodEnv]


def state_update_field(s: State, X: str, p: str, v: Value) -> State:
    fields = s.get(X)
    if fields is None:
        raise Unbound(f"address {X}")
    if p not in fields:
        raise Unbound(f"field {X}.{p}")
    out = dict(s)
    out[X] = {**fields, p: v}
    return out


def adjust_balance(s: State, X: str, delta: int) -> State:
    fields = s.get(X)
    if fields is None:
        raise Unbound(f"address {X}")
    return state_update_field(s, X, "balance", IntVal(fields["balance"].i + delta))


def transfer(s: State, X: str, Y: str, n: int) -> State:
    """Move `n` from X to Y; the two updates apply in sequence, so X == Y is a no-op."""
    return adjust_balance(adjust_balance(s, X, -n), Y, n)


def total_balance(s: State) -> int:
    return sum(fields["balance"].i for fields in s.values())


def elaborate(decls: Sequence[ContractDecl],
              interfaces: Mapping[str, InterfaceDecl] | None = None) -> tuple[State, MethodTable]:
    """Turn contract declarations into a state and a method table.

    When `interfaces` is given, each method records its declared signature so
    that the machine can annotate call frames with types.
    """
    state: dict[str, dict[str, Value]] = {}
    table: dict[str, dict[str, Method]] = {}
    for c in decls:
        if c.name in state:
            raise DuplicateContract(c.name)
        fields: dict[str, Value] = {"balance": IntVal(c.balance)}
        fields.update(c.fields)
        iface_name = c.interface_name
        iface = interfaces.get(iface_name) if interfaces and iface_name else None
        this_type = IfaceT(iface_name) if iface is not None else None
        methods: dict[str, Method] = {}
        for m in (("send", (), SKIP),) + tuple((m.name, m.params, m.body) for m in c.methods):
            name, params, body = m
            sig = iface.get(name) if iface is not None else None
            if not isinstance(sig, MethodType) or len(sig.params) != len(params):
                sig = None
            methods[name] = Method(tuple(params), body, this_type if sig else None, sig)
        state[c.name] = fields
        table[c.name] = methods
    return state, table


# -- serialization -------------------------------------------------------------


def value_to_json(v: Value):
    if isinstance(v, IntVal):
        return v.i
    if isinstance(v, BoolVal):
        return v.b
    return {"address": v.a}


def value_from_json(raw) -> Value:
    if isinstance(raw, bool):
        return BoolVal(raw)
    if isinstance(raw, int):
        return IntVal(raw)
    if isinstance(raw, dict) and set(raw) == {"address"} and isinstance(raw["address"], str):
        return AddrVal(raw["address"])
    raise ValueError(f"not a TinySol value: {raw!r}")


def state_to_json(s: State) -> dict:
    return {X: {p: value_to_json(v) for p, v in fields.items()} for X, fields in s.items()}


def state_from_json(raw) -> State:
    if not isinstance(raw, dict):
        raise ValueError("state must be a JSON object")
    out: dict[str, dict[str, Value]] = {}
    for X, fields in raw.items():
        if not isinstance(fields, dict):
            raise ValueError(f"fields of {X} must be an object")
        parsed = {p: value_from_json(v) for p, v in fields.items()}
        if not isinstance(parsed.get("balance"), IntVal):
            raise ValueError(f"{X} lacks an integer balance")
        out[X] = parsed
    return out


def canonical_json(s: State) -> str:
    return json.dumps(state_to_json(s), sort_keys=True, indent=2)


def top_type() -> IfaceT:
    return IfaceT(TOP_INTERFACE)


def value_range(sig: MethodType) -> RangeT:
    return RangeT(sig.lo, sig.hi)
