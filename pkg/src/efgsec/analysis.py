"""Strategies, counterexamples and weakest preconditions for analyzed properties."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

from .cases import UNSAT, PropertyResult, case_formula
from .encoding import coalitions, decision_var, group_utility, on_path
from .game import Game
from .solver import Backend, Entailment, SolverError, entails_in
from .terms import (
    FALSE, TRUE, BoolVar, Formula, ZERO, atom, compare, conj, disj, neg,
)

log = logging.getLogger(__name__)


class AnalysisError(RuntimeError):
    """Internal inconsistency between the case engine and the analyses."""


# --------------------------------------------------------------------------
# strategies


@dataclass
class Strategy:
    choice: dict  # node history -> action
    case: tuple


def extract_strategy(model: dict, game: Game, h, case: tuple = ()) -> Strategy:
    choice = {}
    for node in game.branches:
        picked = []
        for a in node.actions:
            name = decision_var(game, node.history, a).name
            if name not in model:
                raise AnalysisError(f"model has no value for {name}")
            if model[name]:
                picked.append(a)
        if len(picked) != 1:
            raise AnalysisError(f"model picks {len(picked)} actions at {list(node.history)}")
        choice[node.history] = picked[0]
    h = tuple(h)
    for i, a in enumerate(h):
        if choice[h[:i]] != a:
            raise AnalysisError("strategy disagrees with the honest history")
    return Strategy(choice, tuple(case))


# --------------------------------------------------------------------------
# counterexamples


@dataclass
class Counterexample:
    prop: str
    case: tuple
    players: tuple             # harmed player, colluding group or deviating player
    attack: tuple = ()         # ((history, action), ...) in preorder
    defense: tuple = ()        # defender choices the attack is conditional on
    prefix: tuple = ()         # practicality: honest prefix before the deviation
    subhistory: tuple = ()     # practicality: the rational alternative continuation

    @property
    def conditional(self) -> bool:
        return bool(self.defense)


class CaseContext:
    """Entailment queries under assumptions plus a case, with caching."""

    def __init__(self, backend: Backend, assumptions, literals):
        self.session = backend.session("analysis")
        self.session.add_all(assumptions)
        self.session.add_all(literals)
        self.cache = {}

    def status(self, f: Formula) -> Entailment:
        if f == TRUE:
            return Entailment.ENTAILED
        if f == FALSE:
            return Entailment.CONTRADICTED
        if f not in self.cache:
            self.cache[f] = entails_in(self.session, f)
        return self.cache[f]

    def false(self, f: Formula) -> bool:
        return self.status(f) == Entailment.CONTRADICTED

    def close(self):
        self.session.close()


def _sorted_picks(game: Game, picks) -> tuple:
    return tuple(sorted(picks, key=lambda pa: (game.index[pa[0]], pa[1])))


def _attack_search(game: Game, h: tuple, backend: Backend, attacker, bad_leaf, limit=None) -> list:
    """All attacks (sets of attacker picks, distinct by blocking) that force the
    play into bad leaves whatever the defenders do off the honest path.

    Defender nodes on the honest path follow it; attacker nodes choose freely.
    """
    s = backend.session("attack")
    nodes = game.nodes
    idx = game.index

    def bad(n):
        return BoolVar(f"bad[{idx[n.history]}]")

    def sel(n, a):
        return BoolVar(f"s[{idx[n.history]}]{a}")

    try:
        for n in nodes:
            if n.is_leaf:
                if not bad_leaf(n):
                    s.add(neg(bad(n)))
                continue
            if attacker(n.player):
                sels = [sel(n, a) for a in n.actions]
                s.add(disj(neg(bad(n)), *sels))
                for i, (a, c) in enumerate(n.children):
                    s.add(disj(neg(sels[i]), bad(c)))
                    for other in sels[i + 1:]:
                        s.add(disj(neg(sels[i]), neg(other)))
            elif on_path(n.history, h):
                s.add(disj(neg(bad(n)), bad(n.child(h[len(n.history)]))))
            else:
                for _, c in n.children:
                    s.add(disj(neg(bad(n)), bad(c)))
        s.add(bad(game.tree))
        found = []
        while limit is None or len(found) < limit:
            r = s.check(model=True)
            if r.status == "unknown":
                raise SolverError("solver returned unknown during counterexample search")
            if r.is_unsat:
                break
            picks = []
            stack = [game.tree]
            while stack:
                n = stack.pop()
                if n.is_leaf:
                    continue
                if attacker(n.player):
                    a = next(a for a in n.actions if r.model.get(sel(n, a).name))
                    picks.append((n.history, a))
                    stack.append(n.child(a))
                elif on_path(n.history, h):
                    stack.append(n.child(h[len(n.history)]))
                else:
                    stack.extend(c for _, c in n.children)
            picks = _sorted_picks(game, picks)
            found.append(picks)
            s.add(neg(conj(*(sel(game.resolve(hist), a) for hist, a in picks))))
        return found
    finally:
        s.close()


def _core_order(result: PropertyResult, case_node, candidates: list) -> list:
    """Candidates named by the case's core provenance first, then the rest."""
    named = []
    for label in sorted(case_node.core, key=_label_key):
        if label.startswith("req["):
            who = result.formula.requirement(label).provenance[2]
            if who in candidates and who not in named:
                named.append(who)
    return named + [c for c in candidates if c not in named]


def _label_key(label: str):
    return (label.split("[")[0], int(label[label.index("[") + 1:-1]))


def _immunity_goal(prop: str, u):
    return atom(">=", u.real) if prop == "weaker_immunity" else compare(">=", u, ZERO)


def counterexample_weak_immunity(result: PropertyResult, case_node, backend: Backend,
                                 all_ces: bool = False) -> list:
    game, h, prop = result.game, result.history, result.prop
    ctx = CaseContext(backend, result.assumptions, case_node.literals)
    out = []
    try:
        for p in _core_order(result, case_node, list(game.players)):
            attacks = _attack_search(
                game, h, backend,
                attacker=lambda q: q != p,
                bad_leaf=lambda z: ctx.false(_immunity_goal(prop, z.utilities[p])),
                limit=None if all_ces else 1,
            )
            out.extend(Counterexample(prop, case_node.literals, (p,), a) for a in attacks)
            if out and not all_ces:
                break
    finally:
        ctx.close()
    if not out:
        raise AnalysisError(f"no counterexample found for case {case_node.literals}")
    return out


counterexample_weaker_immunity = counterexample_weak_immunity


def counterexample_collusion_resilience(result: PropertyResult, case_node, backend: Backend,
                                        all_ces: bool = False) -> list:
    game, h = result.game, result.history
    groups = coalitions(game.players)
    honest = game.honest_leaf_utilities(h)
    ctx = CaseContext(backend, result.assumptions, case_node.literals)

    def profits(S, z) -> bool:
        return ctx.false(compare("<=", group_utility(z.utilities, S), group_utility(honest, S)))

    out = []
    try:
        for S in _core_order(result, case_node, groups):
            members = set(S)
            attacks = _attack_search(
                game, h, backend,
                attacker=lambda q: q in members,
                bad_leaf=lambda z: profits(S, z),
                limit=None if all_ces else 1,
            )
            out.extend(Counterexample(result.prop, case_node.literals, S, a) for a in attacks)
            if out and not all_ces:
                break
        if not out:
            out = _conditional_collusion(result, case_node, backend, groups, profits, all_ces)
    finally:
        ctx.close()
    if not out:
        raise AnalysisError(f"no counterexample found for case {case_node.literals}")
    return out


def _conditional_collusion(result, case_node, backend, groups, profits, all_ces) -> list:
    """Cover every honest-extending strategy by some group's profitable
    deviation against it; each deviation is reported with the defender
    choices it relies on."""
    from .encoding import encode_skeleton

    game, h = result.game, result.history
    out = []
    s = backend.session("cover")
    try:
        s.add_all(encode_skeleton(game, h))
        while True:
            r = s.check(model=True)
            if r.status == "unknown":
                raise SolverError("solver returned unknown during counterexample search")
            if r.is_unsat:
                break
            sigma = extract_strategy(r.model, game, h).choice
            hit = None
            for S in groups:
                path = _profitable_path(game, sigma, set(S), lambda z, S=S: profits(S, z))
                if path is not None:
                    hit = (S, path)
                    break
            if hit is None:
                raise AnalysisError("strategy without a profitable deviation in a violating case")
            S, path = hit
            attack = tuple((hist, a) for hist, a, owner in path if owner in S)
            defense = tuple((hist, a) for hist, a, owner in path
                            if owner not in S and not on_path(hist, h))
            out.append(Counterexample(result.prop, case_node.literals, S, attack, defense))
            if not defense or not all_ces:
                break
            s.add(neg(conj(*(decision_var(game, hist, a) for hist, a in defense))))
    finally:
        s.close()
    return out


def _profitable_path(game, sigma, members, profits):
    def walk(node, path):
        if node.is_leaf:
            return path if profits(node) else None
        if node.player in members:
            for a, c in node.children:
                found = walk(c, path + [(node.history, a, node.player)])
                if found is not None:
                    return found
            return None
        a = sigma[node.history]
        return walk(node.child(a), path + [(node.history, a, node.player)])

    return walk(game.tree, [])


def practical_outcomes(game: Game, ge) -> dict:
    """Subgame-perfect outcome leaves per node, where ge(p, z, w) says that
    leaf z is at least as good as leaf w for p. Ties keep both leaves."""
    sets = {}
    for node in reversed(game.nodes):
        if node.is_leaf:
            sets[node.history] = [node]
            continue
        p = node.player
        keep = []
        for a, child in node.children:
            for z in sets[child.history]:
                if all(any(ge(p, z, w) for w in sets[c.history])
                       for b, c in node.children if b != a):
                    keep.append(z)
        sets[node.history] = keep
    return sets


def _point_ge(point: dict):
    def ge(p, z, w):
        return z.utilities[p].evaluate(point) >= w.utilities[p].evaluate(point)
    return ge


def counterexample_practicality(result: PropertyResult, case_node, backend: Backend,
                                all_ces: bool = False) -> list:
    """Deviations that beat the honest leaf for the mover against every
    continuation that may be practical somewhere in the case. Comparisons
    the case leaves open count as satisfied, which over-approximates the
    practical outcomes at each point; the reported subhistories are the
    ones practical at the case's sample point, when there are any."""
    game, h = result.game, result.history
    ctx = CaseContext(backend, result.assumptions, case_node.literals)
    cache = {}

    def maybe_ge(p, z, w) -> bool:
        key = (p, z.history, w.history)
        if key not in cache:
            cache[key] = not ctx.false(compare(">=", z.utilities[p], w.utilities[p]))
        return cache[key]

    out = []
    try:
        sets = practical_outcomes(game, maybe_ge)
        point = dict.fromkeys(game.symbols.names, 0)
        point.update(case_node.point)
        at_point = practical_outcomes(game, _point_ge(point)) if case_node.point else {}
        honest_leaf = game.resolve(h)
        node = game.tree
        for i in range(len(h)):
            p = node.player
            for a, child in node.children:
                if a == h[i]:
                    continue
                better = [w for w in sets[child.history]
                          if ctx.false(compare(">=", honest_leaf.utilities[p], w.utilities[p]))]
                if better and len(better) == len(sets[child.history]):
                    preferred = at_point.get(child.history, [])
                    better.sort(key=lambda w: w not in preferred)
                    for w in better if all_ces else better[:1]:
                        out.append(Counterexample(result.prop, case_node.literals, (p,),
                                                  prefix=h[:i], subhistory=w.history[i:]))
                    if not all_ces:
                        return out
            node = node.child(h[i])
    finally:
        ctx.close()
    if not out:
        raise AnalysisError(f"no counterexample found for case {case_node.literals}")
    return out


CE_FUNCTIONS = {
    "weak_immunity": counterexample_weak_immunity,
    "weaker_immunity": counterexample_weaker_immunity,
    "collusion_resilience": counterexample_collusion_resilience,
    "practicality": counterexample_practicality,
}


def counterexamples(result: PropertyResult, case_node, backend: Optional[Backend] = None) -> list:
    return CE_FUNCTIONS[result.prop](result, case_node, backend or Backend(), all_ces=False)


def all_counterexamples(result: PropertyResult, case_node, backend: Optional[Backend] = None) -> list:
    return CE_FUNCTIONS[result.prop](result, case_node, backend or Backend(), all_ces=True)


# --------------------------------------------------------------------------
# weakest preconditions


@dataclass
class Precondition:
    clauses: list  # list of tuples of RealAtoms; the formula is their CNF

    @property
    def formula(self) -> Formula:
        return conj(*(disj(*c) for c in self.clauses))

    def to_prefix(self) -> str:
        parts = sorted(_clause_prefix(c) for c in self.clauses)
        if not parts:
            return "true"
        if len(parts) == 1:
            return parts[0]
        return f"(and {' '.join(parts)})"

    def constraints(self) -> list:
        """The precondition as constraint strings in the input language."""
        out = []
        for c in self.clauses:
            if not c:
                out.append("0 > 1")
            else:
                out.append(" | ".join(a.to_infix() for a in c))
        return out

    @property
    def is_false(self) -> bool:
        return any(not c for c in self.clauses)


def _clause_prefix(clause) -> str:
    if not clause:
        return "false"
    if len(clause) == 1:
        return clause[0].to_bound()
    return f"(or {' '.join(sorted(a.to_bound() for a in clause))})"


def _unsat(session, *formulas, labels=None) -> bool:
    session.push()
    try:
        session.add_all(formulas)
        r = session.check(labels=labels)
    finally:
        session.pop()
    if r.status == "unknown":
        raise SolverError("solver returned unknown while simplifying the precondition")
    return r.is_unsat


def _subsume(clauses) -> list:
    """Drop duplicate clauses and clauses containing another clause."""
    out = []
    for c in sorted(set(clauses), key=len):
        if not any(set(d) <= set(c) for d in out):
            out.append(c)
    return out


def weakest_precondition(unsat_cases, assumptions, backend: Optional[Backend] = None) -> Precondition:
    """Negation of the disjunction of the violating cases, simplified."""
    backend = backend or Backend()
    clauses = _subsume(tuple(dict.fromkeys(lit.negate() for lit in case)) for case in unsat_cases)
    with backend.session("precondition") as s:
        s.add_all(assumptions)
        # every clause version is asserted once under a fresh label
        labels = []
        fresh = iter(range(10**9))

        def put(c):
            label = f"clause[{next(fresh)}]"
            s.add(disj(*c), label)
            return label

        labels = [put(c) for c in clauses]
        changed = True
        while changed:
            changed = False
            # drop clauses implied by the assumptions and the other clauses
            for i in range(len(clauses)):
                others = labels[:i] + labels[i + 1:]
                if _unsat(s, neg(disj(*clauses[i])), labels=others):
                    del clauses[i], labels[i]
                    changed = True
                    break
            if changed:
                continue
            # drop literals that are redundant given everything else
            for i, clause in enumerate(clauses):
                others = labels[:i] + labels[i + 1:]
                for lit in clause:
                    rest = tuple(x for x in clause if x != lit)
                    if _unsat(s, neg(disj(*rest)), lit, labels=others):
                        clauses[i] = rest
                        labels[i] = put(rest)
                        changed = True
                        break
                if changed:
                    break
        wp = Precondition(sorted(clauses, key=_clause_prefix))
        verify_precondition(wp, unsat_cases, assumptions, backend)
    return wp


def verify_precondition(wp: Precondition, unsat_cases, assumptions, backend: Backend) -> None:
    violating = disj(*(case_formula(c) for c in unsat_cases))
    with backend.session("precondition-check") as s:
        s.add_all(assumptions)
        if not _unsat(s, wp.formula, violating):
            raise AnalysisError("precondition admits a violating case")
        if not _unsat(s, neg(wp.formula), neg(violating)):
            raise AnalysisError("precondition is stronger than necessary")


# --------------------------------------------------------------------------
# orchestration


@dataclass
class Analysis:
    result: PropertyResult
    strategies: list = field(default_factory=list)        # Strategy per sat case
    counterexamples: list = field(default_factory=list)   # (case, [Counterexample])
    precondition: Optional[Precondition] = None


def analyze(result: PropertyResult, backend: Optional[Backend] = None, strategies: bool = False,
            counterexamples: bool = False, all_counterexamples: bool = False,
            preconditions: bool = False) -> Analysis:
    backend = backend or Backend()
    out = Analysis(result)
    if strategies:
        for case in result.sat_cases:
            out.strategies.append(extract_strategy(case.model, result.game, result.history, case.literals))
    if counterexamples or all_counterexamples:
        fn = CE_FUNCTIONS[result.prop]
        for case in result.leaf_cases:
            if case.status == UNSAT:
                out.counterexamples.append(
                    (case.literals, fn(result, case, backend, all_ces=all_counterexamples)))
    if preconditions and not result.holds:
        if not result.complete:
            raise AnalysisError("preconditions need every case explored")
        out.precondition = weakest_precondition(
            [c.literals for c in result.unsat_cases], result.assumptions, backend)
    return out

