"""Extensive-form game model, JSON frontend and structural validation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from typing import Iterator, Mapping, Optional, Sequence, Union

import jsonschema

from .expr import (
    Expr, ExprError, Symbols, format_expr, is_boolean, parse_expr, to_formula,
    to_utility,
)
from .terms import IDENTIFIER, TermError, UtilityPair

PROPERTIES = ("weak_immunity", "weaker_immunity", "collusion_resilience", "practicality")


class GameError(ValueError):
    """Invalid game document; `path` locates the offending JSON value."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.reason = message


@dataclass(frozen=True)
class Leaf:
    history: tuple
    utilities: Mapping[str, UtilityPair]
    values: Mapping[str, Expr] = field(compare=False, repr=False, default_factory=dict)

    is_leaf = True


@dataclass(frozen=True)
class Branch:
    history: tuple
    player: str
    children: tuple  # ((action, node), ...) in document order

    is_leaf = False

    @property
    def actions(self) -> tuple:
        return tuple(a for a, _ in self.children)

    def child(self, action: str):
        for a, node in self.children:
            if a == action:
                return node
        raise KeyError(action)


Node = Union[Leaf, Branch]


@dataclass(frozen=True)
class Game:
    players: tuple
    actions: tuple
    symbols: Symbols
    initial_constraints: tuple
    property_constraints: Mapping[str, tuple]
    honest_histories: tuple
    tree: Node

    @cached_property
    def nodes(self) -> list:
        """All nodes in preorder (document order)."""
        out = []
        stack = [self.tree]
        while stack:
            node = stack.pop()
            out.append(node)
            if not node.is_leaf:
                stack.extend(child for _, child in reversed(node.children))
        return out

    @cached_property
    def branches(self) -> list:
        return [n for n in self.nodes if not n.is_leaf]

    @cached_property
    def leaves(self) -> list:
        return [n for n in self.nodes if n.is_leaf]

    @cached_property
    def index(self) -> dict:
        """history -> preorder position"""
        return {n.history: i for i, n in enumerate(self.nodes)}

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def resolve(self, history: Sequence[str]) -> Node:
        return resolve(self.tree, history)

    def honest_leaf_utilities(self, history: Sequence[str]) -> Mapping[str, UtilityPair]:
        node = self.resolve(history)
        if not node.is_leaf:
            raise GameError(f"history {list(history)} does not end in a leaf")
        return node.utilities

    def assumptions(self, prop: str) -> list:
        """Initial plus property constraints as formulas over real atoms."""
        exprs = list(self.initial_constraints) + list(self.property_constraints.get(prop, ()))
        return [to_formula(e, self.symbols) for e in exprs]

    def with_constraints(self, extra: Sequence[str]) -> Game:
        """Copy of the game with more initial constraints (infix strings)."""
        parsed = []
        for text in extra:
            e = parse_expr(text, self.symbols)
            if not is_boolean(e):
                raise GameError(f"constraint {text!r} is not Boolean", "$.initial_constraints")
            parsed.append(e)
        return replace(self, initial_constraints=self.initial_constraints + tuple(parsed))


def resolve(tree: Node, history: Sequence[str]) -> Node:
    node = tree
    for i, action in enumerate(history):
        if node.is_leaf:
            raise GameError(f"history {list(history)} continues past a leaf after {list(history[:i])}")
        try:
            node = node.child(action)
        except KeyError:
            raise GameError(
                f"action {action!r} not available after {list(history[:i])}"
            ) from None
    return node


def path_actions(history: Sequence[str]) -> Iterator[tuple]:
    """(prefix, action) pairs along a history."""
    for i, action in enumerate(history):
        yield tuple(history[:i]), action


# --------------------------------------------------------------------------
# JSON frontend


def _schema() -> dict:
    text = resources.files("efgsec").joinpath("schema/input.schema.json").read_text()
    return json.loads(text)


_VALIDATOR = None


def _validator():
    global _VALIDATOR
    if _VALIDATOR is None:
        _VALIDATOR = jsonschema.Draft202012Validator(_schema())
    return _VALIDATOR


def _unique(values: Sequence[str], what: str, path: str):
    seen = set()
    for i, v in enumerate(values):
        if v in seen:
            raise GameError(f"duplicate {what} {v!r}", f"{path}[{i}]")
        seen.add(v)


def _parse_bool(text: str, symbols: Symbols, path: str) -> Expr:
    try:
        e = parse_expr(text, symbols)
        if not is_boolean(e):
            raise GameError(f"constraint {text!r} must be a comparison or disjunction", path)
        to_formula(e, symbols)
    except (ExprError, TermError) as exc:
        raise GameError(f"in {text!r}: {exc}", path) from None
    return e


def game_from_dict(doc: Mapping) -> Game:
    """Build a game from a decoded JSON document, validating everything."""
    errors = sorted(_validator().iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise GameError(f"schema violation: {err.message}", err.json_path)

    players = tuple(doc["players"])
    actions = tuple(doc["actions"])
    _unique(players, "player", "$.players")
    _unique(actions, "action", "$.actions")
    constants = tuple(doc["constants"])
    infinitesimals = tuple(doc["infinitesimals"])
    for key, names in (("constants", constants), ("infinitesimals", infinitesimals)):
        _unique(names, "symbol", f"$.{key}")
        for i, name in enumerate(names):
            if not IDENTIFIER.match(name):
                raise GameError(f"invalid symbol name {name!r}", f"$.{key}[{i}]")
    for i, name in enumerate(infinitesimals):
        if name in constants:
            raise GameError(f"symbol {name!r} is both constant and infinitesimal",
                            f"$.infinitesimals[{i}]")
    symbols = Symbols(constants, infinitesimals)

    initial = tuple(
        _parse_bool(text, symbols, f"$.initial_constraints[{i}]")
        for i, text in enumerate(doc["initial_constraints"])
    )
    prop_constraints = {
        prop: tuple(
            _parse_bool(text, symbols, f"$.property_constraints.{prop}[{i}]")
            for i, text in enumerate(doc["property_constraints"][prop])
        )
        for prop in PROPERTIES
    }

    player_set = set(players)
    action_set = set(actions)

    def build(obj, history: tuple, path: str) -> Node:
        if "utility" in obj:
            utilities = {}
            values = {}
            for i, entry in enumerate(obj["utility"]):
                p = entry["player"]
                where = f"{path}.utility[{i}]"
                if p not in player_set:
                    raise GameError(f"undeclared player {p!r}", where)
                if p in utilities:
                    raise GameError(f"utility given twice for player {p!r}", where)
                try:
                    e = parse_expr(entry["value"], symbols)
                    if is_boolean(e):
                        raise GameError("utility must be an arithmetic term", where + ".value")
                    utilities[p] = to_utility(e, symbols)
                except (ExprError, TermError) as exc:
                    raise GameError(f"in {entry['value']!r}: {exc}", where + ".value") from None
                values[p] = e
            for p in players:
                if p not in utilities:
                    raise GameError(f"utility missing for player {p!r}", f"{path}.utility")
            return Leaf(history, utilities, values)
        player = obj["player"]
        if player not in player_set:
            raise GameError(f"undeclared player {player!r}", f"{path}.player")
        children = []
        seen = set()
        for i, entry in enumerate(obj["children"]):
            action = entry["action"]
            where = f"{path}.children[{i}]"
            if action not in action_set:
                raise GameError(f"undeclared action {action!r}", where + ".action")
            if action in seen:
                raise GameError(f"duplicate sibling action {action!r}", where + ".action")
            seen.add(action)
            children.append((action, build(entry["child"], history + (action,), where + ".child")))
        return Branch(history, player, tuple(children))

    tree = build(doc["tree"], (), "$.tree")

    histories = []
    for i, history in enumerate(doc["honest_histories"]):
        path = f"$.honest_histories[{i}]"
        try:
            node = resolve(tree, history)
        except GameError as exc:
            raise GameError(exc.reason, path) from None
        if not node.is_leaf:
            raise GameError("honest history must reach a leaf", path)
        histories.append(tuple(history))

    return Game(players, actions, symbols, initial, prop_constraints, tuple(histories), tree)


def parse_game(document: str) -> Game:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise GameError(f"invalid JSON: {exc}") from None
    return game_from_dict(doc)


def load_game(path) -> Game:
    with open(path) as fh:
        return parse_game(fh.read())


def bundled_game(name: str = "running_example") -> Game:
    text = resources.files("efgsec").joinpath(f"games/{name}.json").read_text()
    return parse_game(text)


def game_to_dict(game: Game) -> dict:
    def dump(node: Node) -> dict:
        if node.is_leaf:
            return {"utility": [
                {"player": p, "value": format_expr(node.values[p]) if p in node.values
                 else _utility_text(node.utilities[p])}
                for p in game.players
            ]}
        return {"player": node.player,
                "children": [{"action": a, "child": dump(c)} for a, c in node.children]}

    return {
        "players": list(game.players),
        "actions": list(game.actions),
        "infinitesimals": list(game.symbols.infinitesimals),
        "constants": list(game.symbols.constants),
        "initial_constraints": [format_expr(e) for e in game.initial_constraints],
        "property_constraints": {
            prop: [format_expr(e) for e in game.property_constraints.get(prop, ())]
            for prop in PROPERTIES
        },
        "honest_histories": [list(h) for h in game.honest_histories],
        "tree": dump(game.tree),
    }


def _utility_text(u: UtilityPair) -> str:
    if u.inf.is_zero():
        return u.real.to_infix()
    if u.real.is_zero():
        return u.inf.to_infix()
    return f"{u.real.to_infix()} + ({u.inf.to_infix()})"


def serialize_game(game: Game, indent: Optional[int] = 1) -> str:
    return json.dumps(game_to_dict(game), indent=indent)
