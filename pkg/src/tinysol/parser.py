"""Recursive-descent reader for `.tsol` source files.

A file is a sequence of interface declarations, contract declarations and
transactions in any order::

    interface I { p : int[0..5]; f(int)^10_1 : 20 }
    contract C : I {
      balance := 100;
      field p := 0;
      f(x) { this.p := 3 }
    }
    A->C.f(3):(1,30)

Address literals are written `@C`; a bare identifier that names a declared
contract and is not bound as a local variable also denotes that address.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .syntax import (
    BOOL, INT, MAGIC_VARS, SKIP, THROW, TOP_INTERFACE, AddrVal, Assign, Balance, BaseType,
    BoolVal, Call, ContractDecl, DeclVar, Expr, Field, For, IfaceT, If, InterfaceDecl, IntVal,
    LThisField, LVar, MemberType, MethodDecl, MethodType, Op, RangeT, ReservedName, Seq,
    ShapeError, Stm, Transaction, Val, Value, Var, int_max, make_interface,
    validate_contract_shape,
)

KEYWORDS = {
    "contract", "interface", "field", "var", "if", "then", "else", "for", "do",
    "skip", "throw", "in", "int", "bool", "true", "false", "and", "or", "not",
}

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z][A-Za-z0-9_]*)
  | (?P<op>:=|->|\.\.|<=|>=|==|[-+*/<>(){}\[\],;:.^_@])
""", re.VERBOSE)


class ParseError(SyntaxError):
    """Syntax error with 1-based line and column."""

    def __init__(self, line: int, col: int, message: str):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col
        self.message = message


class DuplicateMember(ParseError):
    pass


@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # 'int', 'ident', 'kw', 'op', 'eof'
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(line, pos - line_start + 1, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "ident":
            word = m.group()
            tokens.append(Token("kw" if word in KEYWORDS else "ident", word, line, col))
        elif kind in ("int", "op"):
            tokens.append(Token(kind, m.group(), line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


@dataclass(frozen=True)
class SourceFile:
    interfaces: tuple[InterfaceDecl, ...] = ()
    contracts: tuple[ContractDecl, ...] = ()
    txs: tuple[Transaction, ...] = ()


@dataclass(frozen=True, slots=True)
class _CallHead:
    target: Expr
    method: str
    args: tuple[Expr, ...]


class Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    # -- token helpers -------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.pos + k, len(self.tokens) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("op", "kw") and t.text == text

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        t = tok or self.tok
        return ParseError(t.line, t.col, message)

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.pos += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return self.advance()

    def ident(self) -> str:
        if self.tok.kind != "ident":
            found = self.tok.text or "end of input"
            raise self.error(f"expected identifier, found {found!r}")
        return self.advance().text

    def integer(self) -> int:
        neg = self.accept("-")
        if self.tok.kind != "int":
            raise self.error("expected integer literal")
        n = int(self.advance().text)
        return -n if neg else n

    def expect_eof(self):
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r}")

    # -- types ---------------------------------------------------------------

    def base_type(self) -> BaseType:
        if self.accept("bool"):
            return BOOL
        if self.accept("int"):
            if self.at("["):
                start = self.advance()
                lo = self.integer()
                self.expect("..")
                hi = self.integer()
                self.expect("]")
                if lo > hi:
                    raise self.error(f"empty range int[{lo}..{hi}]", start)
                return RangeT(lo, hi)
            return INT
        return IfaceT(self.ident())

    # -- expressions ---------------------------------------------------------

    def expr(self) -> Expr:
        e = self.and_expr()
        while self.accept("or"):
            e = Op("or", (e, self.and_expr()))
        return e

    def and_expr(self) -> Expr:
        e = self.cmp_expr()
        while self.accept("and"):
            e = Op("and", (e, self.cmp_expr()))
        return e

    def cmp_expr(self) -> Expr:
        e = self.add_expr()
        for op in ("<=", ">=", "==", "<", ">"):
            if self.accept(op):
                return Op(op, (e, self.add_expr()))
        return e

    def add_expr(self) -> Expr:
        e = self.mul_expr()
        while self.at("+") or self.at("-"):
            op = self.advance().text
            e = Op(op, (e, self.mul_expr()))
        return e

    def mul_expr(self) -> Expr:
        e = self.unary()
        while self.at("*") or self.at("/"):
            op = self.advance().text
            e = Op(op, (e, self.unary()))
        return e

    def unary(self) -> Expr:
        if self.accept("not"):
            return Op("not", (self.unary(),))
        if self.at("-"):
            if self.peek().kind == "int" and not (self.peek(2).kind == "op" and self.peek(2).text == "."):
                self.advance()
                return Val(IntVal(-int(self.advance().text)))
            self.advance()
            return Op("neg", (self.unary(),))
        e = self.postfix(allow_call=False)
        assert not isinstance(e, _CallHead)
        return e

    def postfix(self, allow_call: bool):
        e = self.primary()
        while self.at("."):
            dot = self.advance()
            name = self.ident()
            if self.at("("):
                if not allow_call:
                    raise self.error("method call is a statement, not an expression", dot)
                self.advance()
                args = self.expr_list(")")
                return _CallHead(e, name, args)
            e = Balance(e) if name == "balance" else Field(e, name)
        return e

    def expr_list(self, close: str) -> tuple[Expr, ...]:
        items: list[Expr] = []
        if not self.accept(close):
            items.append(self.expr())
            while self.accept(","):
                items.append(self.expr())
            self.expect(close)
        return tuple(items)

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "int":
            self.advance()
            return Val(IntVal(int(t.text)))
        if self.accept("true"):
            return Val(BoolVal(True))
        if self.accept("false"):
            return Val(BoolVal(False))
        if self.accept("@"):
            return Val(AddrVal(self.ident()))
        if t.kind == "ident":
            self.advance()
            return Var(t.text)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        raise self.error(f"expected expression, found {t.text or 'end of input'!r}")

    # -- statements ----------------------------------------------------------

    def stmts(self) -> Stm:
        first = self.stmt()
        if self.accept(";"):
            if self.at("}") or self.tok.kind == "eof":
                return first
            return Seq(first, self.stmts())
        return first

    def block(self) -> Stm:
        self.expect("{")
        if self.accept("}"):
            return SKIP
        s = self.stmts()
        self.expect("}")
        return s

    def stmt(self) -> Stm:
        t = self.tok
        if self.accept("skip"):
            return SKIP
        if self.accept("throw"):
            return THROW
        if self.at("{"):
            return self.block()
        if self.accept("var"):
            b = self.base_type()
            x = self.ident()
            if x in MAGIC_VARS:
                raise self.error(f"cannot declare reserved variable {x!r}", t)
            self.expect(":=")
            init = self.expr()
            self.expect("in")
            body = self.block() if self.at("{") else self.stmts()
            return DeclVar(b, x, init, body)
        if self.accept("if"):
            cond = self.expr()
            self.expect("then")
            then = self.stmt()
            self.expect("else")
            return If(cond, then, self.stmt())
        if self.accept("for"):
            guard = self.expr()
            self.expect("do")
            return For(guard, self.stmt())
        head = self.postfix(allow_call=True)
        if isinstance(head, _CallHead):
            self.expect(":")
            return Call(head.target, head.method, head.args, self.expr())
        if not self.at(":="):
            raise self.error("expected ':=' or a method call")
        self.advance()
        rhs = self.expr()
        if isinstance(head, Var):
            if head.name in MAGIC_VARS:
                raise self.error(f"cannot assign to {head.name!r}", t)
            return Assign(LVar(head.name), rhs)
        if isinstance(head, Balance):
            raise self.error("balance can not be assigned directly", t)
        if isinstance(head, Field) and head.e == Var("this"):
            return Assign(LThisField(head.name), rhs)
        raise self.error("only variables and this.<field> can be assigned", t)

    # -- declarations --------------------------------------------------------

    def value(self) -> Value:
        if self.accept("true"):
            return BoolVal(True)
        if self.accept("false"):
            return BoolVal(False)
        if self.accept("@"):
            return AddrVal(self.ident())
        if self.tok.kind == "ident":
            return AddrVal(self.advance().text)
        return IntVal(self.integer())

    def interface(self) -> InterfaceDecl:
        start = self.expect("interface")
        name = self.ident()
        self.expect("{")
        members: dict[str, MemberType] = {}
        while not self.accept("}"):
            mt = self.tok
            m = self.ident()
            if m in members or m in ("balance", "send"):
                raise DuplicateMember(mt.line, mt.col, f"interface {name}: duplicate member {m!r}")
            if self.accept("("):
                params: list[BaseType] = []
                if not self.accept(")"):
                    params.append(self.base_type())
                    while self.accept(","):
                        params.append(self.base_type())
                    self.expect(")")
                lo, hi = 0, int_max()
                if self.accept("^"):
                    hi = self.integer()
                    self.expect("_")
                    lo = self.integer()
                    if lo > hi:
                        raise self.error(f"empty amount range [{lo}..{hi}]", mt)
                self.expect(":")
                steps = self.integer()
                if steps < 1:
                    raise self.error("method step bound must be at least 1", mt)
                members[m] = MethodType(tuple(params), lo, hi, steps)
            else:
                self.expect(":")
                members[m] = self.base_type()
            self.accept(";")
        return make_interface(name, members, start.line)

    def contract(self) -> ContractDecl:
        start = self.expect("contract")
        name = self.ident()
        iface = self.ident() if self.accept(":") else None
        self.expect("{")
        balance = 0
        if self.tok.kind == "ident" and self.tok.text == "balance" and self.peek().text == ":=":
            self.advance()
            self.advance()
            balance = self.integer()
            self.expect(";")
        fields: list[tuple[str, Value]] = []
        methods: list[MethodDecl] = []
        while not self.accept("}"):
            if self.accept("field"):
                p = self.ident()
                self.expect(":=")
                fields.append((p, self.value()))
                self.expect(";")
                continue
            mt = self.tok
            f = self.ident()
            self.expect("(")
            params: list[str] = []
            if not self.accept(")"):
                params.append(self.ident())
                while self.accept(","):
                    params.append(self.ident())
                self.expect(")")
            body = self.block()
            methods.append(MethodDecl(f, tuple(params), body, mt.line))
        c = ContractDecl(name, balance, tuple(fields), tuple(methods), iface, start.line)
        try:
            validate_contract_shape(c)
        except ShapeError as exc:
            raise ParseError(start.line, start.col, str(exc)) from exc
        return c

    def transaction(self) -> Transaction:
        start = self.tok
        caller = self.ident()
        self.expect("->")
        target = self.ident()
        self.expect(".")
        method = self.ident()
        self.expect("(")
        args: list[Value] = []
        if not self.accept(")"):
            args.append(self.value())
            while self.accept(","):
                args.append(self.value())
            self.expect(")")
        self.expect(":")
        self.expect("(")
        amount = self.integer()
        self.expect(",")
        gas_tok = self.tok
        gas = self.integer()
        if gas < 0:
            raise self.error("gas limit must be non-negative", gas_tok)
        self.expect(")")
        return Transaction(caller, target, method, tuple(args), amount, gas, start.line)

    def program(self) -> SourceFile:
        interfaces: list[InterfaceDecl] = []
        contracts: list[ContractDecl] = []
        txs: list[Transaction] = []
        while self.tok.kind != "eof":
            if self.at("interface"):
                t = self.tok
                i = self.interface()
                if i.name == TOP_INTERFACE or any(j.name == i.name for j in interfaces):
                    raise DuplicateMember(t.line, t.col, f"interface {i.name!r} declared twice")
                interfaces.append(i)
            elif self.at("contract"):
                contracts.append(self.contract())
            elif self.tok.kind == "ident":
                txs.append(self.transaction())
            else:
                raise self.error(f"unexpected {self.tok.text!r} at top level")
            self.accept(";")
        names = {c.name for c in contracts}
        contracts = [_resolve_contract(c, names) for c in contracts]
        return SourceFile(tuple(interfaces), tuple(contracts), tuple(txs))


# -- address resolution ------------------------------------------------------


def _resolve_expr(e: Expr, addrs: set[str], bound: frozenset[str]) -> Expr:
    if isinstance(e, Var):
        if e.name not in bound and e.name in addrs:
            return Val(AddrVal(e.name))
        return e
    if isinstance(e, Balance):
        return Balance(_resolve_expr(e.e, addrs, bound))
    if isinstance(e, Field):
        return Field(_resolve_expr(e.e, addrs, bound), e.name)
    if isinstance(e, Op):
        return Op(e.op, tuple(_resolve_expr(a, addrs, bound) for a in e.args))
    return e


def _resolve_stm(s: Stm, addrs: set[str], bound: frozenset[str]) -> Stm:
    r = lambda e: _resolve_expr(e, addrs, bound)  # noqa: E731
    if isinstance(s, DeclVar):
        return DeclVar(s.type, s.name, r(s.init), _resolve_stm(s.body, addrs, bound | {s.name}))
    if isinstance(s, Assign):
        return Assign(s.target, r(s.e))
    if isinstance(s, Seq):
        return Seq(_resolve_stm(s.first, addrs, bound), _resolve_stm(s.second, addrs, bound))
    if isinstance(s, If):
        return If(r(s.cond), _resolve_stm(s.then, addrs, bound), _resolve_stm(s.orelse, addrs, bound))
    if isinstance(s, For):
        return For(r(s.guard), _resolve_stm(s.body, addrs, bound))
    if isinstance(s, Call):
        return Call(r(s.target), s.method, tuple(r(a) for a in s.args), r(s.amount))
    return s


def _resolve_contract(c: ContractDecl, addrs: set[str]) -> ContractDecl:
    methods = tuple(
        MethodDecl(m.name, m.params,
                   _resolve_stm(m.body, addrs, frozenset(MAGIC_VARS) | frozenset(m.params)), m.line)
        for m in c.methods
    )
    return ContractDecl(c.name, c.balance, c.fields, methods, c.interface, c.line)


# -- entry points --------------------------------------------------------------


def parse_program(text: str) -> SourceFile:
    return Parser(text).program()


def parse_interface(text: str) -> InterfaceDecl:
    p = Parser(text)
    i = p.interface()
    p.expect_eof()
    return i


def parse_contract(text: str) -> ContractDecl:
    p = Parser(text)
    c = p.contract()
    p.expect_eof()
    return c


def parse_expression(text: str) -> Expr:
    p = Parser(text)
    e = p.expr()
    p.expect_eof()
    return e


def parse_statement(text: str) -> Stm:
    p = Parser(text)
    s = p.stmts()
    p.expect_eof()
    return s


def parse_transaction(text: str) -> Transaction:
    p = Parser(text)
    t = p.transaction()
    p.expect_eof()
    return t


def parse_file(path) -> SourceFile:
    with open(path, encoding="utf-8") as fh:
        return parse_program(fh.read())


__all__ = [
    "ParseError", "DuplicateMember", "SourceFile", "parse_program", "parse_interface",
    "parse_contract", "parse_expression", "parse_statement", "parse_transaction", "parse_file",
    "tokenize", "ReservedName",
]
