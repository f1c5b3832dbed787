"""
The infix expression language used in game files.

    disjunction := comparison ('|' comparison)*
    comparison  := sum (('=' | '!=' | '<' | '<=' | '>' | '>=') sum)?
    sum         := product (('+' | '-') product)*
    product     := unary ('*' unary)*
    unary       := '-' unary | atom
    atom        := NUMBER | IDENTIFIER | '(' disjunction ')'

Numbers are unsigned decimal integers or fractions; a leading minus is unary.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from .terms import (
    COMPARISONS, Formula, Poly, TermError, UtilityPair, compare, disj,
    format_infix_number,
)


class ExprError(ValueError):
    def __init__(self, message: str, position: Optional[int] = None):
        if position is not None:
            message = f"{message} at position {position}"
        super().__init__(message)
        self.position = position


@dataclass(frozen=True)
class Symbols:
    constants: tuple = ()
    infinitesimals: tuple = ()

    def __contains__(self, name):
        return name in self.constants or name in self.infinitesimals

    def kind(self, name: str) -> str:
        if name in self.constants:
            return "constant"
        if name in self.infinitesimals:
            return "infinitesimal"
        raise KeyError(name)

    @property
    def names(self) -> tuple:
        return self.constants + self.infinitesimals


class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Lit(Expr):
    value: Fraction


@dataclass(frozen=True)
class Sym(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # one of + - *
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Cmp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Disj(Expr):
    left: Expr
    right: Expr


def is_boolean(e: Expr) -> bool:
    return isinstance(e, (Cmp, Disj))


_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>\d+(?:\.\d+)?|\.\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|!=|=|<|>|\||\+|-|\*|\(|\))
""", re.VERBOSE)


def _tokenize(text: str) -> list:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, symbols: Optional[Symbols]):
        self.tokens = _tokenize(text)
        self.i = 0
        self.symbols = symbols

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_arith(self, e: Expr, pos: int) -> Expr:
        if is_boolean(e):
            raise ExprError("comparison nested in arithmetic", pos)
        return e

    def disjunction(self) -> Expr:
        pos = self.peek()[2]
        left = self.comparison()
        while self.peek()[1] == "|":
            if not is_boolean(left):
                raise ExprError("'|' expects comparisons", pos)
            _, _, pos = self.take()
            right = self.comparison()
            if not is_boolean(right):
                raise ExprError("'|' expects comparisons", pos)
            left = Disj(left, right)
        return left

    def comparison(self) -> Expr:
        pos = self.peek()[2]
        left = self.sum()
        kind, text, op_pos = self.peek()
        if kind == "op" and text in COMPARISONS:
            self.expect_arith(left, pos)
            self.take()
            right = self.expect_arith(self.sum(), op_pos)
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] in COMPARISONS:
                raise ExprError("chained comparison", nxt[2])
            return Cmp(text, left, right)
        return left

    def sum(self) -> Expr:
        pos = self.peek()[2]
        left = self.product()
        while self.peek()[1] in ("+", "-"):
            self.expect_arith(left, pos)
            _, op, pos = self.take()
            left = BinOp(op, left, self.expect_arith(self.product(), pos))
        return left

    def product(self) -> Expr:
        pos = self.peek()[2]
        left = self.unary()
        while self.peek()[1] == "*":
            self.expect_arith(left, pos)
            _, _, pos = self.take()
            left = BinOp("*", left, self.expect_arith(self.unary(), pos))
        return left

    def unary(self) -> Expr:
        if self.peek()[1] == "-":
            _, _, pos = self.take()
            return Neg(self.expect_arith(self.unary(), pos))
        return self.atom()

    def atom(self) -> Expr:
        kind, text, pos = self.take()
        if kind == "num":
            return Lit(Fraction(text))
        if kind == "ident":
            if self.symbols is not None and text not in self.symbols:
                raise ExprError(f"unknown identifier {text!r}", pos)
            return Sym(text)
        if text == "(":
            inner = self.disjunction()
            kind, text, close = self.take()
            if text != ")":
                raise ExprError("expected ')'", close)
            return inner
        if kind == "end":
            raise ExprError("unexpected end of expression", pos)
        raise ExprError(f"unexpected token {text!r}", pos)


def parse_expr(text: str, symbols: Optional[Symbols] = None) -> Expr:
    """Parse `text`; identifiers are checked against `symbols` when given."""
    if not text or not text.strip():
        raise ExprError("empty expression", 0)
    parser = _Parser(text, symbols)
    expr = parser.disjunction()
    kind, tok, pos = parser.peek()
    if kind != "end":
        raise ExprError(f"unexpected token {tok!r}", pos)
    return expr


# precedence levels for printing
_PREC = {Disj: 0, Cmp: 1, Neg: 4, Lit: 5, Sym: 5}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return 3 if e.op == "*" else 2
    return _PREC[type(e)]


def format_expr(e: Expr) -> str:
    """Infix rendering that parses back to the same tree."""
    if isinstance(e, Lit):
        if e.value < 0:
            raise TermError("negative literals are written with unary minus")
        return format_infix_number(e.value)
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Neg):
        inner = format_expr(e.arg)
        if _prec(e.arg) < 4:
            inner = f"({inner})"
        return f"-{inner}"
    p = _prec(e)
    left = format_expr(e.left)
    right = format_expr(e.right)
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    if isinstance(e, Disj):
        return f"{left} | {right}"
    if isinstance(e, Cmp):
        return f"{left} {e.op} {right}"
    if e.op == "*":
        return f"{left}*{right}"
    return f"{left} {e.op} {right}"


def to_utility(e: Expr, symbols: Symbols) -> UtilityPair:
    """Split an arithmetic expression into its real and infinitesimal parts."""
    if isinstance(e, Lit):
        return UtilityPair(Poly.const(e.value))
    if isinstance(e, Sym):
        kind = symbols.kind(e.name)
        if kind == "infinitesimal":
            return UtilityPair(inf=Poly.var(e.name))
        return UtilityPair(Poly.var(e.name))
    if isinstance(e, Neg):
        return -to_utility(e.arg, symbols)
    if isinstance(e, BinOp):
        left = to_utility(e.left, symbols)
        right = to_utility(e.right, symbols)
        if e.op == "+":
            result = left + right
        elif e.op == "-":
            result = left - right
        else:
            result = left * right
        assert result.inf.degree_in(symbols.infinitesimals) <= 1
        assert result.real.degree_in(symbols.infinitesimals) == 0
        return result
    raise ExprError("expected an arithmetic expression")


def to_formula(e: Expr, symbols: Symbols) -> Formula:
    """A Boolean expression as a formula over real atoms."""
    if isinstance(e, Cmp):
        return compare(e.op, to_utility(e.left, symbols), to_utility(e.right, symbols))
    if isinstance(e, Disj):
        return disj(to_formula(e.left, symbols), to_formula(e.right, symbols))
    raise ExprError("expected a comparison or disjunction")


def symbols_of(e: Expr) -> set:
    if isinstance(e, Sym):
        return {e.name}
    if isinstance(e, Lit):
        return set()
    if isinstance(e, Neg):
        return symbols_of(e.arg)
    return symbols_of(e.left) | symbols_of(e.right)


def parse_utility(text: str, symbols: Symbols) -> UtilityPair:
    e = parse_expr(text, symbols)
    if is_boolean(e):
        raise ExprError("utility must be an arithmetic expression")
    return to_utility(e, symbols)


def parse_constraints(texts: Iterable[str], symbols: Symbols) -> list:
    out = []
    for text in texts:
        e = parse_expr(text, symbols)
        if not is_boolean(e):
            raise ExprError("constraint must be a comparison or disjunction")
        out.append(e)
    return out
