"""Property formulas: strategy skeleton plus labeled requirements."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

from .game import Game
from .terms import (
    TRUE, BoolVar, Formula, UtilityPair, ZERO, atom, compare, conj, disj,
    implies, neg,
)

MAX_COALITION_PLAYERS = 10


class EncodingError(ValueError):
    pass


@dataclass
class Requirement:
    label: str
    formula: Formula
    # ("leaf", history, player) for immunity, ("leaf", history, group) for
    # collusion resilience, ("node", history, action) for practicality
    provenance: tuple


@dataclass
class PropertyFormula:
    prop: str
    history: tuple
    skeleton: list
    requirements: list
    aux: list = field(default_factory=list)

    def requirement(self, label: str) -> Requirement:
        return self._by_label[label]

    @property
    def _by_label(self) -> dict:
        cache = self.__dict__.get("_labels")
        if cache is None:
            cache = {r.label: r for r in self.requirements}
            self.__dict__["_labels"] = cache
        return cache


def decision_var(game: Game, history: tuple, action: str) -> BoolVar:
    return BoolVar(f"d[{game.index[tuple(history)]}]{action}")


def on_path(prefix: tuple, h: tuple) -> bool:
    return len(prefix) < len(h) and h[:len(prefix)] == prefix


def encode_skeleton(game: Game, h) -> list:
    h = tuple(h)
    out = []
    for node in game.branches:
        dvars = [decision_var(game, node.history, a) for a in node.actions]
        out.append(disj(*dvars))
        for x, y in itertools.combinations(dvars, 2):
            out.append(disj(neg(x), neg(y)))
        if on_path(node.history, h):
            out.append(decision_var(game, node.history, h[len(node.history)]))
    return out


def _premise(game: Game, leaf_history: tuple, h: tuple, owned) -> Optional[Formula]:
    """Conjunction of decision variables along the path at nodes with
    owned(player); None when honest fixing makes the premise false."""
    lits = []
    node = game.tree
    for i, action in enumerate(leaf_history):
        if owned(node.player):
            prefix = leaf_history[:i]
            if on_path(prefix, h):
                if action != h[i]:
                    return None
            else:
                lits.append(decision_var(game, prefix, action))
        node = node.child(action)
    return conj(*lits)


class _Labels:
    def __init__(self):
        self.reqs = []

    def add(self, formula: Formula, provenance: tuple):
        if formula == TRUE:
            return
        self.reqs.append(Requirement(f"req[{len(self.reqs)}]", formula, provenance))


def _immunity(game: Game, h, prop: str, real_only: bool) -> PropertyFormula:
    h = tuple(h)
    labels = _Labels()
    for leaf in game.leaves:
        for p in game.players:
            u = leaf.utilities[p]
            goal = atom(">=", u.real) if real_only else compare(">=", u, ZERO)
            if goal == TRUE:
                continue
            premise = _premise(game, leaf.history, h, lambda q: q == p)
            if premise is None:
                continue
            labels.add(implies(premise, goal), ("leaf", leaf.history, p))
    return PropertyFormula(prop, h, encode_skeleton(game, h), labels.reqs)


def encode_weak_immunity(game: Game, h) -> PropertyFormula:
    return _immunity(game, h, "weak_immunity", real_only=False)


def encode_weaker_immunity(game: Game, h) -> PropertyFormula:
    return _immunity(game, h, "weaker_immunity", real_only=True)


def coalitions(players) -> list:
    """Nonempty proper subsets, by size then declaration order."""
    players = tuple(players)
    if len(players) > MAX_COALITION_PLAYERS:
        raise EncodingError(
            f"collusion resilience supports at most {MAX_COALITION_PLAYERS} players, got {len(players)}")
    return [S for k in range(1, len(players)) for S in itertools.combinations(players, k)]


def group_utility(utilities, group) -> UtilityPair:
    total = ZERO
    for p in group:
        total = total + utilities[p]
    return total


def encode_collusion_resilience(game: Game, h) -> PropertyFormula:
    h = tuple(h)
    groups = coalitions(game.players)
    honest = game.honest_leaf_utilities(h)
    honest_sums = {S: group_utility(honest, S) for S in groups}
    labels = _Labels()
    for leaf in game.leaves:
        for S in groups:
            goal = compare("<=", group_utility(leaf.utilities, S), honest_sums[S])
            if goal == TRUE:
                continue
            members = set(S)
            premise = _premise(game, leaf.history, h, lambda q: q not in members)
            if premise is None:
                continue
            labels.add(implies(premise, goal), ("leaf", leaf.history, S))
    return PropertyFormula("collusion_resilience", h, encode_skeleton(game, h), labels.reqs)


def encode_practicality(game: Game, h) -> PropertyFormula:
    """Subgame perfection via outcome classes.

    out(n, p, v) says: following the strategy from n ends in a leaf where p
    gets v. It is only implied by its definition, never forced false, so the
    solver keeps it minimal whenever that helps; atoms occur only in
    consequents, hence satisfiability is unaffected.
    """
    h = tuple(h)
    aux = []
    outcome = {}  # (history, player) -> {UtilityPair: Formula}

    def outcomes(node, p) -> dict:
        key = (node.history, p)
        if key in outcome:
            return outcome[key]
        if node.is_leaf:
            result = {node.utilities[p]: TRUE}
        elif on_path(node.history, h):
            result = outcomes(node.child(h[len(node.history)]), p)
        else:
            idx = game.index[node.history]
            result = {}
            for a, child in node.children:
                for v, f in outcomes(child, p).items():
                    if v not in result:
                        result[v] = BoolVar(f"out[{idx}][{p}][{len(result)}]")
                    aux.append(implies(conj(decision_var(game, node.history, a), f), result[v]))
        outcome[key] = result
        return result

    labels = _Labels()
    for node in game.branches:
        p = node.player
        if on_path(node.history, h):
            chosen = [(h[len(node.history)], TRUE)]
        else:
            chosen = [(a, decision_var(game, node.history, a)) for a in node.actions]
        for c, child in node.children:
            parts = []
            for c1, d in chosen:
                if c1 == c:
                    continue
                alt = outcomes(child, p)
                for v1, f1 in outcomes(node.child(c1), p).items():
                    for v2, f2 in alt.items():
                        goal = compare(">=", v1, v2)
                        if goal != TRUE:
                            parts.append(implies(conj(d, f1, f2), goal))
            if parts:
                labels.add(conj(*parts), ("node", node.history, c))
    return PropertyFormula("practicality", h, encode_skeleton(game, h), labels.reqs, aux)


ENCODERS = {
    "weak_immunity": encode_weak_immunity,
    "weaker_immunity": encode_weaker_immunity,
    "collusion_resilience": encode_collusion_resilience,
    "practicality": encode_practicality,
}


def encode(game: Game, h, prop: str) -> PropertyFormula:
    try:
        encoder = ENCODERS[prop]
    except KeyError:
        raise EncodingError(f"unknown property {prop!r}") from None
    return encoder(game, h)
