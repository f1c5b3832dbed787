"""
Case splitting.

Every distinct real atom of the requirements is replaced by a Boolean proxy.
Inside a case, atoms entailed (contradicted) by the assumptions and the case
literals fix their proxy to true (false); still-open atoms are pessimistically
set false under a label. Atoms only occur positively in requirements, so:

* sat means one strategy satisfies the property at every point of the case;
* unsat even with every open atom left free means the property fails at
  every point of the case;
* otherwise the answer may differ inside the case, and we split on an open
  atom that the failure depends on.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional

from .encoding import PropertyFormula, encode
from .game import Game, GameError
from .solver import Backend, Entailment, SolverError, entails_in
from .terms import BoolVar, RealAtom, atoms_of, conj, disj, neg, substitute

log = logging.getLogger(__name__)

SAT, UNSAT, SPLIT, SKIPPED = "sat", "unsat", "split", "skipped"


class AssumptionError(GameError):
    """The initial and property constraints have no common solution."""


@dataclass
class CaseNode:
    literals: tuple
    status: str = SKIPPED
    atom: Optional[RealAtom] = None
    children: tuple = ()
    model: dict = field(default_factory=dict)  # decision and auxiliary variables
    point: dict = field(default_factory=dict)  # a parameter valuation inside the case
    core: frozenset = frozenset()

    def leaves(self):
        if self.status == SPLIT:
            for child in self.children:
                yield from child.leaves()
        else:
            yield self


@dataclass
class PropertyResult:
    game: Game
    history: tuple
    prop: str
    formula: PropertyFormula
    assumptions: list
    root: CaseNode
    holds: bool
    log: list  # ("split", atom) | ("sat", literals) | ("unsat", literals)
    complete: bool

    @property
    def leaf_cases(self) -> list:
        return list(self.root.leaves())

    @property
    def sat_cases(self) -> list:
        return [c for c in self.root.leaves() if c.status == SAT]

    @property
    def unsat_cases(self) -> list:
        return [c for c in self.root.leaves() if c.status == UNSAT]


def case_formula(literals) -> object:
    return conj(*literals)


def format_case(literals) -> str:
    return "[" + ", ".join(a.to_prefix() for a in literals) + "]"


def split(current: tuple, atom: RealAtom) -> tuple:
    return current + (atom,), current + (atom.negate(),)


def check_assumptions(game: Game, prop: str, backend: Backend) -> list:
    assumptions = game.assumptions(prop)
    with backend.session("assumptions") as s:
        s.add_all(assumptions)
        result = s.check()
    if result.status == "unknown":
        raise SolverError(f"solver returned unknown on the assumptions ({result.reason})")
    if result.is_unsat:
        raise AssumptionError(f"initial and {prop} constraints are unsatisfiable",
                              "$.initial_constraints")
    return assumptions


class _Engine:
    def __init__(self, game, formula: PropertyFormula, assumptions, backend: Backend,
                 all_cases: bool, models: bool):
        self.formula = formula
        self.backend = backend
        self.all_cases = all_cases
        self.models = models
        self.log = []
        self.violated = False
        reqs = formula.requirements
        self.universe = atoms_of(*(r.formula for r in reqs))
        self.atom_index = {a: k for k, a in enumerate(self.universe)}

        self.ctx = backend.session("context")
        self.ctx.add_all(assumptions)
        self.main = backend.session("property")
        self.main.add_all(formula.skeleton)
        self.main.add_all(formula.aux)
        for r in reqs:
            self.main.add(substitute(r.formula, self.proxy), label=r.label)

    def proxy(self, a: RealAtom):
        return BoolVar(f"t[{self.atom_index[a]}]")

    def close(self):
        self.ctx.close()
        self.main.close()

    def statuses(self, inherited: dict) -> dict:
        out = {}
        for k, a in enumerate(self.universe):
            prev = inherited.get(k)
            out[k] = prev if prev not in (None, Entailment.UNDETERMINED) else entails_in(self.ctx, a)
        return out

    def run_case(self, node: CaseNode, inherited: dict):
        if len(node.literals) > len(self.universe):
            raise RuntimeError("case depth exceeds the number of candidate atoms")
        self.ctx.push()
        try:
            for lit in node.literals:
                self.ctx.add(lit)
            status = self.statuses(inherited)
            point = {}
            if self.models:
                r = self.ctx.check(model=True)
                point = {k: v for k, v in r.model.items()} if r.is_sat else {}
        finally:
            self.ctx.pop()
        self.main.push()
        try:
            for k, st in status.items():
                t = BoolVar(f"t[{k}]")
                if st == Entailment.ENTAILED:
                    self.main.add(t)
                elif st == Entailment.CONTRADICTED:
                    self.main.add(neg(t))
                else:
                    self.main.add(neg(t), label=f"open[{k}]")
            result = self.main.check(model=self.models)
            if result.status == "unknown":
                raise SolverError(f"solver returned unknown ({result.reason})")
            atom = None
            core = result.core
            if result.is_unsat:
                atom, core = self.pick(core, status)
        finally:
            self.main.pop()

        if result.is_sat:
            node.status, node.model, node.point = SAT, result.model, point
            self.log.append(("sat", node.literals))
            return
        if atom is None:
            node.status, node.core, node.point = UNSAT, core, point
            self.log.append(("unsat", node.literals))
            self.violated = True
            return
        node.status, node.atom = SPLIT, atom
        self.log.append(("split", atom))
        pos, negative = split(node.literals, atom)
        node.children = (CaseNode(pos), CaseNode(negative))
        for child in node.children:
            if self.violated and not self.all_cases:
                break
            self.run_case(child, status)

    def pick(self, core: frozenset, status: dict):
        if not any(lab.startswith("open[") for lab in core):
            return None, core
        return pick_split_atom(self.main, self.formula, status, self.universe), core


def pick_split_atom(session, formula: PropertyFormula, status: dict, universe: list) -> Optional[RealAtom]:
    """Choose the atom to split on after an unsat answer with open atoms.

    None if the property fails with every open atom left unconstrained (the
    case is irreducible). Otherwise, starting from all open atoms, each one
    in document order is freed (its pessimistic assumption dropped) as long
    as the property stays unsat. What remains is a minimal set of open
    atoms responsible for the failure; its first member is returned.

    Runs inside the case scope of `session`, where every open atom k
    carries the label open[k].
    """
    reqs = [r.label for r in formula.requirements]

    def unsat(opens) -> bool:
        r = session.check(labels=reqs + [f"open[{m}]" for m in opens])
        if r.status == "unknown":
            raise SolverError("solver returned unknown while choosing a split atom")
        return r.is_unsat

    if unsat([]):
        return None  # fails whatever the open atoms are: irreducible
    keep = [k for k in sorted(status) if status[k] == Entailment.UNDETERMINED]
    for k in list(keep):
        if len(keep) == 1:
            break
        trial = [m for m in keep if m != k]
        if unsat(trial):
            keep = trial
    return universe[keep[0]]


def check_property(game: Game, h, prop: str, backend: Optional[Backend] = None,
                   all_cases: bool = False, models: bool = True) -> PropertyResult:
    backend = backend or Backend()
    h = tuple(h)
    assumptions = check_assumptions(game, prop, backend)
    formula = encode(game, h, prop)
    engine = _Engine(game, formula, assumptions, backend, all_cases, models)
    root = CaseNode(())
    try:
        engine.run_case(root, {})
    finally:
        engine.close()
    holds = not engine.violated
    complete = all(c.status != SKIPPED for c in root.leaves())
    log.debug("%s %s: %s after %d cases", prop, list(h), "holds" if holds else "violated",
              sum(1 for _ in root.leaves()))
    return PropertyResult(game, h, prop, formula, assumptions, root, holds, engine.log, complete)


def verify_partition(result: PropertyResult, backend: Optional[Backend] = None) -> tuple:
    """(exhaustive, disjoint) for the leaf cases, checked by the solver."""
    backend = backend or Backend()
    leaves = [case_formula(c.literals) for c in result.root.leaves()]
    with backend.session("partition") as s:
        s.add_all(result.assumptions)
        s.push()
        s.add(neg(disj(*leaves)))
        r = s.check()
        s.pop()
        if r.status == "unknown":
            raise SolverError("solver returned unknown during the partition check")
        exhaustive = r.is_unsat
        disjoint = True
        for x, y in itertools.combinations(leaves, 2):
            s.push()
            s.add(conj(x, y))
            r = s.check()
            s.pop()
            if r.status == "unknown":
                raise SolverError("solver returned unknown during the partition check")
            if not r.is_unsat:
                disjoint = False
                break
    return exhaustive, disjoint
