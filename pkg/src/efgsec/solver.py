"""
Solver sessions over quantifier-free (non)linear real arithmetic with
Boolean structure, labeled assertions, models and unsat cores.

Two interchangeable implementations: `Z3Session` drives z3 in-process,
`SmtLibSession` talks SMT-LIB 2 to an external solver process.
"""
from __future__ import annotations

import enum
import itertools
import logging
import os
import re
import shlex
import subprocess
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

import z3

from .terms import (
    And, BoolVar, Const, Formula, Not, Or, Poly, RealAtom, neg,
)

log = logging.getLogger(__name__)

SAT, UNSAT, UNKNOWN = "sat", "unsat", "unknown"


class SolverError(RuntimeError):
    """The backend crashed, timed out or answered unknown."""


@dataclass
class CheckResult:
    status: str
    model: dict = field(default_factory=dict)
    core: frozenset = frozenset()
    reason: str = ""

    @property
    def is_sat(self):
        return self.status == SAT

    @property
    def is_unsat(self):
        return self.status == UNSAT


# --------------------------------------------------------------------------
# SMT-LIB rendering

_SIMPLE_SYMBOL = re.compile(r"[A-Za-z~!@$%^&*_+=<>.?/-][A-Za-z0-9~!@$%^&*_+=<>.?/-]*\Z")
_RESERVED = {
    "and", "or", "not", "xor", "distinct", "ite", "true", "false", "let", "forall",
    "exists", "assert", "par", "NUMERAL", "DECIMAL", "STRING", "as", "_", "!",
    "Real", "Bool", "Int", "=>", "=", "<", ">", "<=", ">=", "+", "-", "*", "/",
}


def smt_symbol(name: str) -> str:
    if _SIMPLE_SYMBOL.match(name) and name not in _RESERVED:
        return name
    return "|" + name.replace("|", "%7C").replace("\\", "%5C") + "|"


def smt_term(f: Formula) -> str:
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, RealAtom):
        return f.to_prefix(smt_symbol)
    if isinstance(f, BoolVar):
        return smt_symbol(f.name)
    if isinstance(f, Not):
        return f"(not {smt_term(f.arg)})"
    if isinstance(f, And):
        return f"(and {' '.join(smt_term(a) for a in f.args)})"
    if isinstance(f, Or):
        return f"(or {' '.join(smt_term(a) for a in f.args)})"
    raise TypeError(f"not a formula: {f!r}")


def formula_symbols(f: Formula, reals: set, bools: set) -> bool:
    """Collect symbols of `f`; returns True if some atom is nonlinear."""
    nonlinear = False
    stack = [f]
    while stack:
        node = stack.pop()
        if isinstance(node, RealAtom):
            for mono, _ in node.poly.terms:
                reals.update(mono)
                if len(mono) > 1:
                    nonlinear = True
        elif isinstance(node, BoolVar):
            bools.add(node.name)
        elif isinstance(node, Not):
            stack.append(node.arg)
        elif isinstance(node, (And, Or)):
            stack.extend(node.args)
    return nonlinear


# --------------------------------------------------------------------------
# sessions


class Session:
    """Incremental solving session; labels name assertions for unsat cores."""

    def __init__(self, dump_prefix: Optional[str] = None):
        self._scopes = [[]]          # labels per scope
        self._labels = {}            # label -> backend handle
        self._reals: set = set()
        self._bools: set = set()
        self._nonlinear = False
        self._dump_prefix = dump_prefix
        self._dump_count = 0
        self._transcript = [[]]      # SMT-LIB commands per scope, only when dumping
        self._declared_text: list = []

    @property
    def depth(self) -> int:
        return len(self._scopes) - 1

    @property
    def labels(self) -> list:
        return [label for scope in self._scopes for label in scope]

    def push(self):
        self._scopes.append([])
        self._transcript.append([])
        self._push()

    def pop(self):
        if len(self._scopes) == 1:
            raise SolverError("pop without matching push")
        for label in self._scopes.pop():
            del self._labels[label]
        self._transcript.pop()
        self._pop()

    def add(self, f: Formula, label: Optional[str] = None):
        if label is not None and label in self._labels:
            raise ValueError(f"duplicate label {label!r}")
        reals: set = set()
        bools: set = set()
        if formula_symbols(f, reals, bools):
            self._nonlinear = True
        new_reals = sorted(reals - self._reals)
        new_bools = sorted(bools - self._bools)
        self._reals.update(new_reals)
        self._bools.update(new_bools)
        self._declare(new_reals, new_bools)
        handle = self._assert(f, label)
        if label is not None:
            self._labels[label] = handle
            self._scopes[-1].append(label)

    def add_all(self, formulas: Iterable[Formula]):
        for f in formulas:
            self.add(f)

    def check(self, model: bool = False, labels: Optional[Iterable[str]] = None) -> CheckResult:
        """Check satisfiability; `labels` restricts which labeled assertions
        are active (default: all of them)."""
        active = self.labels if labels is None else list(labels)
        for label in active:
            if label not in self._labels:
                raise ValueError(f"unknown label {label!r}")
        if self._dump_prefix is not None:
            self._dump(active)
        return self._check(model, active)

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # dumping -------------------------------------------------------------

    def _record(self, command: str):
        if self._dump_prefix is not None:
            self._transcript[-1].append(command)

    def _record_decl(self, reals, bools):
        if self._dump_prefix is not None:
            self._declared_text.extend(f"(declare-const {smt_symbol(n)} Real)" for n in reals)
            self._declared_text.extend(f"(declare-const {smt_symbol(n)} Bool)" for n in bools)

    def _label_var(self, label: str) -> str:
        return f"label!{label}"

    def _dump(self, active):
        self._dump_count += 1
        path = f"{self._dump_prefix}-{self._dump_count:04d}.smt2"
        lines = ["(set-option :produce-unsat-cores true)", "(set-logic ALL)"]
        lines += self._declared_text
        lines += [c for scope in self._transcript for c in scope]
        labels = " ".join(smt_symbol(self._label_var(l)) for l in active)
        lines.append(f"(check-sat-assuming ({labels}))" if labels else "(check-sat)")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    def _assert_text(self, f: Formula, label: Optional[str]) -> str:
        if label is None:
            return f"(assert {smt_term(f)})"
        return f"(assert (=> {smt_symbol(self._label_var(label))} {smt_term(f)}))"

    # backend hooks -------------------------------------------------------

    def _push(self):
        raise NotImplementedError

    def _pop(self):
        raise NotImplementedError

    def _declare(self, reals, bools):
        raise NotImplementedError

    def _assert(self, f: Formula, label: Optional[str]):
        raise NotImplementedError

    def _check(self, model: bool, active: list) -> CheckResult:
        raise NotImplementedError


def _z3_number(value: Fraction):
    return z3.Q(value.numerator, value.denominator) if value.denominator != 1 else z3.RealVal(value.numerator)


class Z3Session(Session):
    """In-process z3.

    Nonlinear arithmetic without labels is re-checked with a fresh QF_NRA
    solver because z3's incremental core is incomplete for it.
    """

    def __init__(self, seed: int = 0, timeout_ms: Optional[int] = None,
                 dump_prefix: Optional[str] = None):
        super().__init__(dump_prefix)
        self._seed = seed
        self._timeout = timeout_ms
        self._solver = self._new_solver(z3.Solver())
        self._vars: dict = {}
        self._stack = [[]]  # z3 assertions per scope
        self._atoms: dict = {}  # RealAtom -> z3 expression

    def _new_solver(self, solver):
        solver.set("random_seed", self._seed)
        if self._timeout:
            solver.set("timeout", self._timeout)
        return solver

    def _push(self):
        self._solver.push()
        self._stack.append([])

    def _pop(self):
        self._solver.pop()
        self._stack.pop()

    def _declare(self, reals, bools):
        for name in reals:
            self._vars[name] = z3.Real(name)
        for name in bools:
            self._vars[name] = z3.Bool(name)
        self._record_decl(reals, bools)

    def _poly(self, poly: Poly):
        terms = []
        for mono, coeff in poly.terms:
            factors = [self._vars[n] for n in mono]
            if coeff != 1 or not factors:
                factors.insert(0, _z3_number(coeff))
            terms.append(factors[0] if len(factors) == 1 else z3.Product(*factors))
        if not terms:
            return z3.RealVal(0)
        return terms[0] if len(terms) == 1 else z3.Sum(*terms)

    def translate(self, f: Formula):
        if isinstance(f, RealAtom):
            expr = self._atoms.get(f)
            if expr is None:
                expr = self._atoms[f] = self._translate(f)
            return expr
        return self._translate(f)

    def _translate(self, f: Formula):
        if isinstance(f, Const):
            return z3.BoolVal(f.value)
        if isinstance(f, BoolVar):
            return self._vars[f.name]
        if isinstance(f, RealAtom):
            lhs = self._poly(f.poly)
            zero = z3.RealVal(0)
            return {
                "=": lambda: lhs == zero, "!=": lambda: lhs != zero,
                "<": lambda: lhs < zero, "<=": lambda: lhs <= zero,
                ">": lambda: lhs > zero, ">=": lambda: lhs >= zero,
            }[f.op]()
        if isinstance(f, Not):
            return z3.Not(self.translate(f.arg))
        if isinstance(f, And):
            return z3.And(*(self.translate(a) for a in f.args))
        if isinstance(f, Or):
            return z3.Or(*(self.translate(a) for a in f.args))
        raise TypeError(f"not a formula: {f!r}")

    def _assert(self, f: Formula, label: Optional[str]):
        expr = self.translate(f)
        if self._dump_prefix is not None:
            self._record(self._assert_text(f, label))
        if label is None:
            self._solver.add(expr)
            self._stack[-1].append(expr)
            return None
        handle = z3.Bool(self._label_var(label))
        self._solver.add(z3.Implies(handle, expr))
        self._stack[-1].append((handle, expr))
        return handle

    def _check(self, model: bool, active: list) -> CheckResult:
        if self._nonlinear and not self._labels:
            solver = self._new_solver(z3.SolverFor("QF_NRA"))
            for scope in self._stack:
                solver.add(*scope)
            status = solver.check()
        else:
            solver = self._solver
            status = solver.check(*(self._labels[l] for l in active))
        if status == z3.sat:
            return CheckResult(SAT, self._model(solver.model()) if model else {})
        if status == z3.unsat:
            core = set()
            for c in solver.unsat_core():
                label = c.decl().name()[len("label!"):]
                if label in self._labels:
                    core.add(label)
            core = frozenset(core)
            return CheckResult(UNSAT, core=core)
        return CheckResult(UNKNOWN, reason=solver.reason_unknown())

    def _model(self, m) -> dict:
        out = {}
        for name in sorted(self._reals):
            v = m.eval(self._vars[name], model_completion=True)
            if z3.is_rational_value(v):
                out[name] = Fraction(v.numerator_as_long(), v.denominator_as_long())
            else:
                out[name] = Fraction(v.approx(30).as_fraction())
        for name in sorted(self._bools):
            out[name] = z3.is_true(m.eval(self._vars[name], model_completion=True))
        return out


class SmtLibSession(Session):
    """An external solver process driven over the SMT-LIB 2 text protocol."""

    def __init__(self, command: Iterable[str] = ("z3", "-in", "-smt2"), seed: int = 0,
                 timeout_ms: Optional[int] = None, dump_prefix: Optional[str] = None):
        super().__init__(dump_prefix)
        self._command = list(command)
        try:
            self._proc = subprocess.Popen(
                self._command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL, text=True, bufsize=1,
            )
        except OSError as exc:
            raise SolverError(f"cannot start solver {self._command!r}: {exc}") from None
        self._label_names: dict = {}
        self._fresh = itertools.count()
        for line in (
            "(set-option :print-success false)",
            "(set-option :produce-models true)",
            "(set-option :produce-unsat-cores true)",
            "(set-option :global-declarations true)",
        ):
            self._send(line)
        if seed and os.path.basename(self._command[0]).startswith("z3"):
            self._send(f"(set-option :random-seed {int(seed)})")
        if timeout_ms and os.path.basename(self._command[0]).startswith("z3"):
            self._send(f"(set-option :timeout {int(timeout_ms)})")
        self._send("(set-logic ALL)")

    def _send(self, command: str):
        if self._proc.poll() is not None:
            raise SolverError(f"solver process exited with status {self._proc.returncode}")
        try:
            self._proc.stdin.write(command + "\n")
            self._proc.stdin.flush()
        except BrokenPipeError:
            raise SolverError("solver process closed its input") from None

    def _read(self) -> str:
        text = ""
        depth = 0
        while True:
            line = self._proc.stdout.readline()
            if not line:
                raise SolverError("solver process terminated unexpectedly")
            text += line
            depth += _paren_balance(line)
            if depth <= 0 and text.strip():
                break
        text = text.strip()
        if text.startswith("(error"):
            raise SolverError(f"solver error: {text}")
        return text

    def _push(self):
        self._send("(push 1)")
        self._record("(push 1)")

    def _pop(self):
        self._send("(pop 1)")
        self._record("(pop 1)")

    def _declare(self, reals, bools):
        for name in reals:
            self._send(f"(declare-const {smt_symbol(name)} Real)")
        for name in bools:
            self._send(f"(declare-const {smt_symbol(name)} Bool)")
        self._record_decl(reals, bools)

    def _label_var(self, label: str) -> str:
        if label not in self._label_names:
            self._label_names[label] = f"label!{next(self._fresh)}"
        return self._label_names[label]

    def _assert(self, f: Formula, label: Optional[str]):
        if label is not None:
            self._label_names.pop(label, None)
            name = self._label_var(label)
            self._send(f"(declare-const {smt_symbol(name)} Bool)")
            self._record_decl([], [name])
        text = self._assert_text(f, label)
        self._send(text)
        self._record(text)
        return None if label is None else self._label_names[label]

    def _check(self, model: bool, active: list) -> CheckResult:
        labels = active
        if labels:
            names = " ".join(smt_symbol(self._labels[l]) for l in labels)
            self._send(f"(check-sat-assuming ({names}))")
        else:
            self._send("(check-sat)")
        answer = self._read()
        if answer == SAT:
            return CheckResult(SAT, self._model() if model else {})
        if answer == UNSAT:
            core = frozenset()
            if labels:
                self._send("(get-unsat-core)")
                reverse = {self._labels[l]: l for l in labels}
                core = frozenset(
                    reverse[_unquote(tok)] for tok in parse_sexpr(self._read())
                    if _unquote(tok) in reverse
                )
            return CheckResult(UNSAT, core=core)
        if answer == UNKNOWN:
            self._send("(get-info :reason-unknown)")
            return CheckResult(UNKNOWN, reason=self._read())
        raise SolverError(f"unexpected solver answer {answer!r}")

    def _model(self) -> dict:
        names = sorted(self._reals) + sorted(self._bools)
        if not names:
            return {}
        self._send(f"(get-value ({' '.join(smt_symbol(n) for n in names)}))")
        pairs = parse_sexpr(self._read())
        out = {}
        for name, value in pairs:
            out[_unquote(name)] = _smt_value(value)
        return out

    def close(self):
        if self._proc.poll() is None:
            try:
                self._send("(exit)")
                self._proc.wait(timeout=5)
            except (SolverError, subprocess.TimeoutExpired):
                self._proc.kill()
        for stream in (self._proc.stdin, self._proc.stdout):
            if stream:
                stream.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def _paren_balance(line: str) -> int:
    depth = 0
    quoted = False
    for ch in line:
        if ch == "|" or ch == '"':
            quoted = not quoted
        elif not quoted and ch == "(":
            depth += 1
        elif not quoted and ch == ")":
            depth -= 1
    return depth


def parse_sexpr(text: str):
    tokens = re.findall(r'\(|\)|\|[^|]*\||"[^"]*"|[^\s()]+', text)
    stack = [[]]
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    return stack[0][0] if len(stack[0]) == 1 else stack[0]


def _unquote(tok) -> str:
    if isinstance(tok, str) and tok.startswith("|") and tok.endswith("|"):
        return tok[1:-1]
    return tok


def _smt_value(value):
    if value == "true":
        return True
    if value == "false":
        return False
    if isinstance(value, str):
        return Fraction(value)
    if value[0] == "-" and len(value) == 2:
        inner = _smt_value(value[1])
        return None if inner is None else -inner
    if value[0] == "/" and len(value) == 3:
        num, den = _smt_value(value[1]), _smt_value(value[2])
        return None if num is None or den is None else num / den
    return None  # algebraic numbers and other non-rational values


# --------------------------------------------------------------------------
# backends and entailment


@dataclass
class Backend:
    """Session factory; `kind` is 'z3' (embedded) or 'smtlib' (external process)."""
    kind: str = "z3"
    command: tuple = ("z3", "-in", "-smt2")
    seed: int = 0
    timeout_ms: Optional[int] = None
    dump_dir: Optional[str] = None
    _counter: itertools.count = field(default_factory=itertools.count, repr=False)

    def session(self, tag: str = "query") -> Session:
        prefix = None
        if self.dump_dir:
            os.makedirs(self.dump_dir, exist_ok=True)
            prefix = os.path.join(self.dump_dir, f"{next(self._counter):04d}-{tag}")
        if self.kind == "z3":
            return Z3Session(self.seed, self.timeout_ms, prefix)
        if self.kind == "smtlib":
            return SmtLibSession(self.command, self.seed, self.timeout_ms, prefix)
        raise ValueError(f"unknown solver backend {self.kind!r}")

    @classmethod
    def from_command(cls, command: str, **kwargs) -> Backend:
        return cls("smtlib", tuple(shlex.split(command)), **kwargs)


class Entailment(enum.Enum):
    ENTAILED = "entailed"
    CONTRADICTED = "contradicted"
    UNDETERMINED = "undetermined"


def _expect_known(result: CheckResult) -> CheckResult:
    if result.status == UNKNOWN:
        raise SolverError(f"solver returned unknown ({result.reason})")
    return result


def entails_in(session: Session, f: Formula) -> Entailment:
    """Classify `f` against everything asserted in `session`."""
    session.push()
    try:
        session.add(neg(f))
        negation_unsat = _expect_known(session.check()).is_unsat
    finally:
        session.pop()
    if negation_unsat:
        return Entailment.ENTAILED
    session.push()
    try:
        session.add(f)
        unsat = _expect_known(session.check()).is_unsat
    finally:
        session.pop()
    return Entailment.CONTRADICTED if unsat else Entailment.UNDETERMINED


def entails(backend: Backend, context: Iterable[Formula], f: Formula) -> Entailment:
    with backend.session("entails") as s:
        s.add_all(context)
        return entails_in(s, f)


def is_satisfiable(session: Session) -> bool:
    return _expect_known(session.check()).is_sat
