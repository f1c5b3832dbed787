"""
Exact symbolic arithmetic for utilities.

Polynomials are kept in a canonical monomial-sum form with rational
coefficients, utilities are (real, infinitesimal) polynomial pairs ordered
lexicographically, and comparisons between utilities expand into Boolean
formulas over `RealAtom`s, i.e. `poly op 0` constraints a solver can take
directly.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Mapping, Optional, Union

Monomial = tuple  # sorted tuple of symbol names, repeats allowed
Number = Union[int, Fraction]

COMPARISONS = ("=", "!=", "<", "<=", ">", ">=")

_FLIP = {"=": "=", "!=": "!=", "<": ">", "<=": ">=", ">": "<", ">=": "<="}
_NEGATE = {"=": "!=", "!=": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}

IDENTIFIER = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class TermError(ValueError):
    pass


def _mono_key(item):
    mono = item[0]
    return (-len(mono), mono)


def format_decimal(value: Fraction) -> str:
    """Render a non-negative rational as a decimal literal, e.g. 2 -> '2.0'."""
    value = Fraction(value)
    if value.denominator == 1:
        return f"{value.numerator}.0"
    den = value.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"(/ {value.numerator}.0 {value.denominator}.0)"
    digits = max(twos, fives)
    scaled = value * 10**digits
    text = str(abs(scaled.numerator)).rjust(digits + 1, "0")
    return f"{'-' if value < 0 else ''}{text[:-digits]}.{text[-digits:]}"


def format_smt_number(value: Fraction) -> str:
    value = Fraction(value)
    if value < 0:
        return f"(- {format_decimal(-value)})"
    return format_decimal(value)


def format_infix_number(value: Fraction) -> str:
    """Literal accepted by the expression grammar (no division available)."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    text = format_decimal(value)
    if text.startswith("("):
        raise TermError(f"{value} has no finite decimal expansion")
    return text


class Poly:
    """Immutable polynomial over named symbols with rational coefficients."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: Optional[Mapping] = None):
        items = [
            (tuple(sorted(mono)), Fraction(coeff))
            for mono, coeff in (terms or {}).items()
        ]
        merged: dict = {}
        for mono, coeff in items:
            merged[mono] = merged.get(mono, 0) + coeff
        self.terms = tuple(sorted(
            ((m, c) for m, c in merged.items() if c != 0), key=_mono_key
        ))
        self._hash = hash(self.terms)

    @classmethod
    def const(cls, value: Number) -> Poly:
        return cls({(): Fraction(value)})

    @classmethod
    def var(cls, name: str) -> Poly:
        return cls({(name,): Fraction(1)})

    def __repr__(self):
        return f"Poly({self.to_infix()!r})"

    def __eq__(self, other):
        return isinstance(other, Poly) and self.terms == other.terms

    def __hash__(self):
        return self._hash

    def __add__(self, other: Poly) -> Poly:
        merged = dict(self.terms)
        for mono, coeff in other.terms:
            merged[mono] = merged.get(mono, 0) + coeff
        return Poly(merged)

    def __neg__(self) -> Poly:
        return Poly({m: -c for m, c in self.terms})

    def __sub__(self, other: Poly) -> Poly:
        return self + (-other)

    def __mul__(self, other: Poly) -> Poly:
        result: dict = {}
        for m1, c1 in self.terms:
            for m2, c2 in other.terms:
                mono = tuple(sorted(m1 + m2))
                result[mono] = result.get(mono, 0) + c1 * c2
        return Poly(result)

    def scale(self, factor: Number) -> Poly:
        return Poly({m: c * factor for m, c in self.terms})

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return all(not mono for mono, _ in self.terms)

    @property
    def constant(self) -> Fraction:
        for mono, coeff in self.terms:
            if not mono:
                return coeff
        return Fraction(0)

    def symbols(self) -> frozenset:
        return frozenset(name for mono, _ in self.terms for name in mono)

    def degree_in(self, names: Iterable[str]) -> int:
        names = set(names)
        return max((sum(1 for n in mono if n in names) for mono, _ in self.terms), default=0)

    def evaluate(self, assignment: Mapping[str, Number]) -> Fraction:
        total = Fraction(0)
        for mono, coeff in self.terms:
            value = coeff
            for name in mono:
                try:
                    value *= Fraction(assignment[name])
                except KeyError:
                    raise TermError(f"no value for symbol {name!r}") from None
            total += value
        return total

    def primitive(self) -> tuple:
        """(p, k) with self == k * p, p having coprime integer coefficients and
        a positive leading coefficient, k a non-zero rational."""
        if not self.terms:
            return self, Fraction(1)
        lcm = 1
        for _, coeff in self.terms:
            lcm = lcm * coeff.denominator // math.gcd(lcm, coeff.denominator)
        gcd = 0
        for _, coeff in self.terms:
            gcd = math.gcd(gcd, (coeff * lcm).numerator)
        factor = Fraction(lcm, gcd)
        if self.terms[0][1] < 0:
            factor = -factor
        return self.scale(factor), 1 / factor

    def _monomial_prefix(self, mono, magnitude: Fraction) -> str:
        factors = list(mono)
        if magnitude != 1 or not factors:
            factors.insert(0, format_decimal(magnitude))
        if len(factors) == 1:
            return factors[0]
        return f"(* {' '.join(factors)})"

    def to_prefix(self, symbol: Callable[[str], str] = str) -> str:
        """SMT-LIB style rendering, e.g. a-2 -> '(- a 2.0)'."""
        if not self.terms:
            return "0.0"
        out = None
        for mono, coeff in self.terms:
            term = self._monomial_prefix(tuple(symbol(n) for n in mono), abs(coeff))
            if out is None:
                out = term if coeff > 0 else f"(- {term})"
            else:
                out = f"({'+' if coeff > 0 else '-'} {out} {term})"
        return out

    def to_infix(self) -> str:
        """Rendering in the input expression language, e.g. '2*a*b - 3'."""
        if not self.terms:
            return "0"
        parts = []
        for i, (mono, coeff) in enumerate(self.terms):
            magnitude = abs(coeff)
            factors = list(mono)
            if magnitude != 1 or not factors:
                factors.insert(0, format_infix_number(magnitude))
            term = "*".join(factors)
            if i == 0:
                parts.append(term if coeff > 0 else f"-{term}")
            else:
                parts.append(f"{'+' if coeff > 0 else '-'} {term}")
        return " ".join(parts)


ZERO_POLY = Poly()


# --------------------------------------------------------------------------
# Boolean formulas over real atoms and Boolean variables


class Formula:
    __slots__ = ()


@dataclass(frozen=True)
class Const(Formula):
    value: bool

    def __repr__(self):
        return "TRUE" if self.value else "FALSE"


TRUE = Const(True)
FALSE = Const(False)


@dataclass(frozen=True)
class RealAtom(Formula):
    """`poly op 0` with `poly` in primitive normal form."""
    op: str
    poly: Poly

    def negate(self) -> RealAtom:
        return RealAtom(_NEGATE[self.op], self.poly)

    def holds(self, assignment: Mapping[str, Number]) -> bool:
        return _test(self.op, self.poly.evaluate(assignment))

    def to_prefix(self, symbol: Callable[[str], str] = str) -> str:
        if self.op == "!=":
            return f"(distinct {self.poly.to_prefix(symbol)} 0.0)"
        return f"({self.op} {self.poly.to_prefix(symbol)} 0.0)"

    def to_bound(self) -> str:
        """Prefix rendering as a variable bound when the atom is univariate
        and linear, e.g. a-2 >= 0 -> '(>= a 2.0)'."""
        terms = self.poly.terms
        linear = [m for m, _ in terms if m]
        if len(linear) != 1 or len(linear[0]) != 1:
            return self.to_prefix()
        (name,) = linear[0]
        coeff = dict(terms)[linear[0]]
        bound = -self.poly.constant / coeff
        op = self.op if coeff > 0 else _FLIP[self.op]
        if op == "!=":
            return f"(distinct {name} {format_smt_number(bound)})"
        return f"({op} {name} {format_smt_number(bound)})"

    def to_infix(self) -> str:
        return f"{self.poly.to_infix()} {self.op} 0"

    def __repr__(self):
        return self.to_prefix()


@dataclass(frozen=True)
class BoolVar(Formula):
    name: str

    def __repr__(self):
        return self.name


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class And(Formula):
    args: tuple


@dataclass(frozen=True)
class Or(Formula):
    args: tuple


def _test(op: str, value: Fraction) -> bool:
    if op == "=":
        return value == 0
    if op == "!=":
        return value != 0
    if op == "<":
        return value < 0
    if op == "<=":
        return value <= 0
    if op == ">":
        return value > 0
    if op == ">=":
        return value >= 0
    raise TermError(f"unknown comparison {op!r}")


def atom(op: str, lhs: Poly, rhs: Poly = ZERO_POLY) -> Formula:
    """`lhs op rhs` as a normalized atom; ground comparisons fold to TRUE/FALSE."""
    if op not in COMPARISONS:
        raise TermError(f"unknown comparison {op!r}")
    diff = lhs - rhs
    if diff.is_constant():
        return TRUE if _test(op, diff.constant) else FALSE
    poly, factor = diff.primitive()
    if factor < 0:
        op = _FLIP[op]
    return RealAtom(op, poly)


def neg(f: Formula) -> Formula:
    if isinstance(f, Const):
        return FALSE if f.value else TRUE
    if isinstance(f, RealAtom):
        return f.negate()
    if isinstance(f, Not):
        return f.arg
    return Not(f)


def conj(*args: Formula) -> Formula:
    flat = []
    seen = set()
    for a in args:
        parts = a.args if isinstance(a, And) else (a,)
        for p in parts:
            if p == FALSE:
                return FALSE
            if p == TRUE or p in seen:
                continue
            seen.add(p)
            flat.append(p)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def disj(*args: Formula) -> Formula:
    flat = []
    seen = set()
    for a in args:
        parts = a.args if isinstance(a, Or) else (a,)
        for p in parts:
            if p == TRUE:
                return TRUE
            if p == FALSE or p in seen:
                continue
            seen.add(p)
            flat.append(p)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def implies(premise: Formula, conclusion: Formula) -> Formula:
    return disj(neg(premise), conclusion)


def iter_atoms(f: Formula) -> Iterator[RealAtom]:
    """Real atoms of `f`, left to right, with repeats."""
    stack = [f]
    while stack:
        node = stack.pop()
        if isinstance(node, RealAtom):
            yield node
        elif isinstance(node, Not):
            stack.append(node.arg)
        elif isinstance(node, (And, Or)):
            stack.extend(reversed(node.args))


def atoms_of(*formulas: Formula) -> list:
    """Distinct real atoms in order of first occurrence."""
    return list(dict.fromkeys(a for f in formulas for a in iter_atoms(f)))


def substitute(f: Formula, mapping: Callable[[RealAtom], Formula]) -> Formula:
    if isinstance(f, RealAtom):
        return mapping(f)
    if isinstance(f, Not):
        return neg(substitute(f.arg, mapping))
    if isinstance(f, And):
        return conj(*(substitute(a, mapping) for a in f.args))
    if isinstance(f, Or):
        return disj(*(substitute(a, mapping) for a in f.args))
    return f


def evaluate_formula(f: Formula, atom_value: Callable[[RealAtom], Optional[bool]],
                     var_value: Callable[[str], Optional[bool]] = lambda name: None) -> Optional[bool]:
    """Kleene three-valued evaluation; None means unknown."""
    if isinstance(f, Const):
        return f.value
    if isinstance(f, RealAtom):
        return atom_value(f)
    if isinstance(f, BoolVar):
        return var_value(f.name)
    if isinstance(f, Not):
        v = evaluate_formula(f.arg, atom_value, var_value)
        return None if v is None else not v
    if isinstance(f, And):
        result = True
        for a in f.args:
            v = evaluate_formula(a, atom_value, var_value)
            if v is False:
                return False
            if v is None:
                result = None
        return result
    if isinstance(f, Or):
        result = False
        for a in f.args:
            v = evaluate_formula(a, atom_value, var_value)
            if v is True:
                return True
            if v is None:
                result = None
        return result
    raise TypeError(f"not a formula: {f!r}")


def holds_at(f: Formula, assignment: Mapping[str, Number]) -> bool:
    """Two-valued truth of a formula without Boolean variables at a point."""
    value = evaluate_formula(f, lambda a: a.holds(assignment))
    if value is None:
        raise TermError("formula contains Boolean variables")
    return value


def to_prefix(f: Formula, atom_text: Callable[[RealAtom], str] = RealAtom.to_prefix) -> str:
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, RealAtom):
        return atom_text(f)
    if isinstance(f, BoolVar):
        return f.name
    if isinstance(f, Not):
        return f"(not {to_prefix(f.arg, atom_text)})"
    op = "and" if isinstance(f, And) else "or"
    return f"({op} {' '.join(to_prefix(a, atom_text) for a in f.args)})"


# --------------------------------------------------------------------------
# utilities


@dataclass(frozen=True)
class UtilityPair:
    """A utility `real + inf` where `inf` collects the infinitesimal monomials."""
    real: Poly = ZERO_POLY
    inf: Poly = ZERO_POLY

    def __add__(self, other: UtilityPair) -> UtilityPair:
        return UtilityPair(self.real + other.real, self.inf + other.inf)

    def __sub__(self, other: UtilityPair) -> UtilityPair:
        return UtilityPair(self.real - other.real, self.inf - other.inf)

    def __neg__(self) -> UtilityPair:
        return UtilityPair(-self.real, -self.inf)

    def __mul__(self, other: UtilityPair) -> UtilityPair:
        if not self.inf.is_zero() and not other.inf.is_zero():
            raise TermError("cannot multiply two infinitesimal utilities")
        return UtilityPair(self.real * other.real,
                           self.real * other.inf + other.real * self.inf)

    def evaluate(self, assignment: Mapping[str, Number]) -> tuple:
        return (self.real.evaluate(assignment), self.inf.evaluate(assignment))

    def __str__(self):
        return f"({self.real.to_infix()}, {self.inf.to_infix()})"


ZERO = UtilityPair()


def utility_arith(op: str, u: UtilityPair, v: UtilityPair) -> UtilityPair:
    if op == "+":
        return u + v
    if op == "-":
        return u - v
    if op == "*":
        return u * v
    raise TermError(f"unknown arithmetic operator {op!r}")


def compare(op: str, u: UtilityPair, v: UtilityPair) -> Formula:
    """Lexicographic comparison of two utilities as a formula over real atoms."""
    dr = u.real - v.real
    di = u.inf - v.inf
    if di.is_zero():
        return atom(op, dr)
    if dr.is_zero():
        return atom(op, di)
    if op == "=":
        return conj(atom("=", dr), atom("=", di))
    if op == "!=":
        return disj(atom("!=", dr), atom("!=", di))
    strict = op[0]
    return disj(atom(strict, dr), conj(atom("=", dr), atom(op, di)))


def compare_values(op: str, x: tuple, y: tuple) -> bool:
    """`compare` on evaluated (real, inf) pairs."""
    if op == "=":
        return x == y
    if op == "!=":
        return x != y
    if op == "<":
        return x < y
    if op == "<=":
        return x <= y
    if op == ">":
        return x > y
    if op == ">=":
        return x >= y
    raise TermError(f"unknown comparison {op!r}")
