"""
Reference semantics on concrete games, random game generators and the
differential harness comparing them with the symbolic checker.

Nothing here touches the solver: utilities are evaluated to exact
(real, infinitesimal) pairs of fractions compared as tuples.
"""
from __future__ import annotations

import itertools
import logging
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .expr import to_formula
from .game import PROPERTIES, Game, game_from_dict, serialize_game
from .terms import format_infix_number, holds_at

log = logging.getLogger(__name__)

ENUMERATION_LIMIT = 10**6


class OracleError(ValueError):
    pass


@dataclass
class ConcreteGame:
    game: Game
    assignment: dict = field(default_factory=dict)

    def __post_init__(self):
        missing = [n for n in self.game.symbols.names if n not in self.assignment]
        if missing:
            raise OracleError(f"no value for {', '.join(missing)}")
        self.assignment = {k: Fraction(v) for k, v in self.assignment.items()}
        self.payoff = {
            leaf.history: {p: u.evaluate(self.assignment) for p, u in leaf.utilities.items()}
            for leaf in self.game.leaves
        }

    def satisfies(self, prop: Optional[str] = None) -> bool:
        if prop is None:
            formulas = [to_formula(e, self.game.symbols) for e in self.game.initial_constraints]
        else:
            formulas = self.game.assumptions(prop)
        return all(holds_at(f, self.assignment) for f in formulas)


def _on_path(prefix, h) -> bool:
    return len(prefix) < len(h) and h[:len(prefix)] == prefix


def strategy_count(game: Game, h) -> int:
    h = tuple(h)
    count = 1
    for n in game.branches:
        if not _on_path(n.history, h):
            count *= len(n.children)
    return count


def strategies(game: Game, h):
    """All total strategies that follow `h` along its path."""
    h = tuple(h)
    free = [n for n in game.branches if not _on_path(n.history, h)]
    fixed = {n.history: h[len(n.history)] for n in game.branches if _on_path(n.history, h)}
    for picks in itertools.product(*(n.actions for n in free)):
        sigma = dict(fixed)
        sigma.update((n.history, a) for n, a in zip(free, picks))
        yield sigma


def _reachable(node, follows, sigma):
    """Leaves reachable when players with follows(p) play sigma and the rest anything."""
    if node.is_leaf:
        yield node
        return
    if follows(node.player):
        yield from _reachable(node.child(sigma[node.history]), follows, sigma)
    else:
        for _, c in node.children:
            yield from _reachable(c, follows, sigma)


def _sum(values, group):
    real = sum((values[p][0] for p in group), Fraction(0))
    inf = sum((values[p][1] for p in group), Fraction(0))
    return (real, inf)


# --- enumeration --------------------------------------------------------------


def _immune_under(cg: ConcreteGame, sigma, real_only: bool) -> bool:
    game = cg.game
    zero = (Fraction(0), Fraction(0))

    def ok(value) -> bool:
        return value[0] >= 0 if real_only else value >= zero

    return all(ok(cg.payoff[z.history][p])
               for p in game.players
               for z in _reachable(game.tree, lambda q, p=p: q == p, sigma))


def _groups(players):
    return [S for k in range(1, len(players)) for S in itertools.combinations(players, k)]


def _resilient_under(cg: ConcreteGame, h, sigma) -> bool:
    honest = cg.payoff[tuple(h)]
    return all(_sum(cg.payoff[z.history], S) <= _sum(honest, S)
               for S in _groups(cg.game.players)
               for z in _reachable(cg.game.tree, lambda q, S=S: q not in S, sigma))


def _practical_under(cg: ConcreteGame, sigma) -> bool:
    game = cg.game
    outcome = {}
    for node in reversed(game.nodes):
        outcome[node.history] = node.history if node.is_leaf else \
            outcome[node.child(sigma[node.history]).history]
    return all(cg.payoff[outcome[node.history]][node.player] >=
               cg.payoff[outcome[c.history]][node.player]
               for node in game.branches for _, c in node.children)


def strategy_ok(cg: ConcreteGame, h, prop: str, sigma) -> bool:
    """Does the total strategy `sigma` (node history -> action) witness the
    property? Agreement with the honest history is not checked here."""
    if prop == "weak_immunity":
        return _immune_under(cg, sigma, False)
    if prop == "weaker_immunity":
        return _immune_under(cg, sigma, True)
    if prop == "collusion_resilience":
        return _resilient_under(cg, h, sigma)
    if prop == "practicality":
        return _practical_under(cg, sigma)
    raise OracleError(f"unknown property {prop!r}")


def _enumerate(cg: ConcreteGame, h, prop: str) -> bool:
    return any(strategy_ok(cg, h, prop, sigma) for sigma in strategies(cg.game, h))


# --- dynamic programming --------------------------------------------------------


def _dp_immunity(cg: ConcreteGame, h, real_only: bool) -> bool:
    # players' requirements involve disjoint choices, so each can be met separately
    game = cg.game
    h = tuple(h)
    zero = (Fraction(0), Fraction(0))

    def good(node, p) -> bool:
        if node.is_leaf:
            v = cg.payoff[node.history][p]
            return v[0] >= 0 if real_only else v >= zero
        if node.player != p:
            return all(good(c, p) for _, c in node.children)
        if _on_path(node.history, h):
            return good(node.child(h[len(node.history)]), p)
        return any(good(c, p) for _, c in node.children)

    return all(good(game.tree, p) for p in game.players)


def _pareto_min(vectors) -> list:
    vectors = sorted(set(vectors))
    out = []
    for v in vectors:
        if not any(all(a <= b for a, b in zip(w, v)) for w in out):
            out.append(v)
    return out


def _dp_collusion(cg: ConcreteGame, h) -> bool:
    """Per subtree, the Pareto-minimal vectors of best group sums reachable by
    each group against some strategy of everybody else."""
    game = cg.game
    h = tuple(h)
    groups = _groups(game.players)
    if not groups:
        return True
    honest = cg.payoff[h]
    limit = tuple(_sum(honest, S) for S in groups)
    table = {}
    for node in reversed(game.nodes):
        if node.is_leaf:
            table[node.history] = [tuple(_sum(cg.payoff[node.history], S) for S in groups)]
            continue
        q = node.player
        inside = [q in S for S in groups]
        choices = [a for a in node.actions]
        if _on_path(node.history, h):
            choices = [h[len(node.history)]]
        vectors = []
        child_sets = [table[c.history] for _, c in node.children]
        for a in choices:
            ai = node.actions.index(a)
            for combo in itertools.product(*child_sets):
                vectors.append(tuple(
                    max(v[i] for v in combo) if inside[i] else combo[ai][i]
                    for i in range(len(groups))))
        table[node.history] = _pareto_min(vectors)
    return any(all(v[i] <= limit[i] for i in range(len(groups))) for v in table[()])


def practical_sets(cg: ConcreteGame) -> dict:
    game = cg.game
    sets = {}
    for node in reversed(game.nodes):
        if node.is_leaf:
            sets[node.history] = [node.history]
            continue
        p = node.player
        keep = []
        for a, child in node.children:
            for z in sets[child.history]:
                if all(any(cg.payoff[z][p] >= cg.payoff[w][p] for w in sets[c.history])
                       for b, c in node.children if b != a):
                    keep.append(z)
        sets[node.history] = keep
    return sets


def _dp_practicality(cg: ConcreteGame, h) -> bool:
    game = cg.game
    h = tuple(h)
    sets = practical_sets(cg)
    node = game.tree
    for i, action in enumerate(h):
        p = node.player
        for a, c in node.children:
            if a != action and not any(cg.payoff[h][p] >= cg.payoff[w][p] for w in sets[c.history]):
                return False
        node = node.child(action)
    return True



_DP = {
    "weak_immunity": lambda cg, h: _dp_immunity(cg, h, False),
    "weaker_immunity": lambda cg, h: _dp_immunity(cg, h, True),
    "collusion_resilience": _dp_collusion,
    "practicality": _dp_practicality,
}


def oracle_check(cg: ConcreteGame, h, prop: str, method: str = "auto") -> bool:
    """Does the property hold on the concrete game?

    method: 'enumerate' tries every honest-extending strategy (guarded),
    'dp' uses per-property recursions, 'auto' enumerates small games.
    """
    if prop not in _DP:
        raise OracleError(f"unknown property {prop!r}")
    if not all(holds_at(f, cg.assignment) for f in cg.game.assumptions(prop)):
        raise OracleError("assignment violates the game's constraints")
    count = strategy_count(cg.game, h)
    if method == "auto":
        method = "enumerate" if count <= 2000 else "dp"
    if method == "enumerate":
        if count > ENUMERATION_LIMIT:
            raise OracleError(f"{count} strategies exceed the enumeration limit")
        return _enumerate(cg, tuple(h), prop)
    if method == "dp":
        return _DP[prop](cg, tuple(h))
    raise OracleError(f"unknown method {method!r}")


# --- generators ----------------------------------------------------------------

VALUE_POOL = tuple(Fraction(x) for x in ("-2", "-1", "-0.5", "0", "0.5", "1", "2", "3"))
PLAYER_NAMES = ("A", "B", "C", "D", "E", "F", "G", "H", "I", "J")


@dataclass
class GenParams:
    max_depth: int = 4
    max_branching: int = 3
    players: int = 2
    pool: tuple = VALUE_POOL
    inf_prob: float = 0.3      # chance that a game uses an infinitesimal
    seed: int = 0
    leaf_prob: float = 0.3     # chance that a non-root node below max depth is a leaf
    jitter: float = 0.25       # chance of a random owner instead of round-robin
    constants: int = 0         # symbolic constants (a, b, ...) in utilities

    def __post_init__(self):
        if self.max_depth < 1 or self.max_branching < 1 or self.players < 1:
            raise ValueError("depth, branching and players must be at least 1")


def _num(x: Fraction) -> str:
    return format_infix_number(abs(x))


def _linear_text(terms) -> str:
    """Render sum of (coefficient, symbol-or-None) as an input expression."""
    parts = []
    for coeff, sym in terms:
        if coeff == 0:
            continue
        body = _num(coeff) if sym is None else (sym if abs(coeff) == 1 else f"{_num(coeff)}*{sym}")
        if not parts:
            parts.append(f"-{body}" if coeff < 0 else body)
        else:
            parts.append(f"{'-' if coeff < 0 else '+'} {body}")
    return " ".join(parts) if parts else "0"


def random_game(params: GenParams) -> Game:
    return game_from_dict(random_document(params))


def _count_nodes(tree: dict) -> int:
    if "utility" in tree:
        return 1
    return 1 + sum(_count_nodes(ch["child"]) for ch in tree["children"])


def random_document(params: GenParams) -> dict:
    """The JSON document of a random game (not yet validated)."""
    rng = random.Random(params.seed)
    players = list(PLAYER_NAMES[:params.players])
    actions = [f"x{i}" for i in range(params.max_branching)]
    use_eps = rng.random() < params.inf_prob
    consts = ["a", "b", "c", "d"][:params.constants]

    def utility():
        terms = [(rng.choice(params.pool), None)]
        for c in consts:
            if rng.random() < 0.5:
                terms.append((Fraction(rng.choice((-2, -1, 1, 2))), c))
        if use_eps and rng.random() < 0.5:
            terms.append((rng.choice([v for v in params.pool if v != 0]), "eps"))
        return _linear_text(terms)

    def build(depth):
        if depth == params.max_depth or (depth > 0 and rng.random() < params.leaf_prob):
            return {"utility": [{"player": p, "value": utility()} for p in players]}
        owner = players[depth % len(players)]
        if rng.random() < params.jitter:
            owner = rng.choice(players)
        k = rng.randint(1, params.max_branching)
        return {"player": owner,
                "children": [{"action": actions[i], "child": build(depth + 1)} for i in range(k)]}

    tree = build(0)

    def leaves(t, h):
        if "utility" in t:
            yield h
            return
        for ch in t["children"]:
            yield from leaves(ch["child"], h + [ch["action"]])

    honest = rng.choice(list(leaves(tree, [])))
    initial = ["eps > 0"] if use_eps else []
    for c in consts:
        initial.append(rng.choice([f"{c} > 0", f"{c} >= -1", f"{c} < 3", f"{c} != 1"]))
    return {
        "players": players,
        "actions": actions,
        "infinitesimals": ["eps"] if use_eps else [],
        "constants": consts,
        "initial_constraints": initial,
        "property_constraints": {p: [] for p in PROPERTIES},
        "honest_histories": [honest],
        "tree": tree,
    }


def concrete(game: Game) -> ConcreteGame:
    """A generated constant game; its infinitesimal only scales the second component."""
    return ConcreteGame(game, {n: 1 for n in game.symbols.names})


def sample_points(game: Game, prop: str, rng: random.Random, count: int, extra=None,
                  grid=(-3, -2, -1, -0.5, 0, 0.5, 1, 1.5, 2, 3, 4), tries: int = 5000) -> list:
    """Assignments of the constants (infinitesimals set to 1) satisfying the
    assumptions and the optional extra formula: grid points first, then
    random rationals when the grid has too few."""
    formulas = list(game.assumptions(prop)) + ([extra] if extra is not None else [])
    names = game.symbols.constants
    out = []
    candidates = list(itertools.product([Fraction(str(g)) for g in grid], repeat=len(names)))
    rng.shuffle(candidates)
    for values in candidates:
        point = dict(zip(names, values))
        point.update({e: Fraction(1) for e in game.symbols.infinitesimals})
        if all(holds_at(f, point) for f in formulas):
            out.append(point)
            if len(out) >= count:
                return out
    # narrow regions: random rationals with denominator 16 in [-10, 10]
    for _ in range(tries):
        point = {n: Fraction(rng.randint(-160, 160), 16) for n in names}
        point.update({e: Fraction(1) for e in game.symbols.infinitesimals})
        if point not in out and all(holds_at(f, point) for f in formulas):
            out.append(point)
            if len(out) >= count:
                break
    return out


# --- differential harness -------------------------------------------------------


@dataclass
class Mismatch:
    seed: int
    prop: str
    symbolic: bool
    oracle: bool
    game_json: str


@dataclass
class DiffReport:
    games: int = 0
    checks: int = 0
    with_infinitesimals: int = 0
    mismatches: list = field(default_factory=list)
    results: list = field(default_factory=list)  # PropertyResult objects, when kept

    @property
    def ok(self) -> bool:
        return not self.mismatches


def differential_run(params: GenParams, count: int, backend=None, keep_results: bool = False,
                     all_cases: bool = False) -> DiffReport:
    from .cases import check_property

    report = DiffReport()
    for i in range(count):
        seed = params.seed + i
        gp = GenParams(**{**params.__dict__, "seed": seed,
                          "players": 1 + (seed % params.players)})
        game = random_game(gp)
        cg = concrete(game)
        report.games += 1
        report.with_infinitesimals += bool(game.symbols.infinitesimals)
        for h in game.honest_histories:
            for prop in PROPERTIES:
                result = check_property(game, h, prop, backend, all_cases=all_cases)
                expected = oracle_check(cg, h, prop)
                report.checks += 1
                if keep_results:
                    report.results.append(result)
                if result.holds != expected:
                    report.mismatches.append(
                        Mismatch(seed, prop, result.holds, expected, serialize_game(game)))
    return report


def scale_game(min_nodes: int, seed: int = 0, players: int = 3, branching: int = 3) -> Game:
    """A generated constant game with at least `min_nodes` nodes."""
    depth = 1
    while True:
        for attempt in range(20):
            doc = random_document(GenParams(max_depth=depth, max_branching=branching, players=players,
                                            seed=seed + attempt, leaf_prob=0.1, inf_prob=0.0))
            if _count_nodes(doc["tree"]) >= min_nodes:
                return game_from_dict(doc)
        depth += 1
