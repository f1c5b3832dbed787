import json

import pytest

from efgsec.game import PROPERTIES, bundled_game, game_from_dict
from efgsec.solver import Backend


def leaf(**values):
    return {"utility": [{"player": p, "value": str(v)} for p, v in values.items()]}


def branch(player, **children):
    return {"player": player,
            "children": [{"action": a, "child": c} for a, c in children.items()]}


def make_doc(tree, honest, players=("A", "B"), constants=(), infinitesimals=(),
             initial=(), actions=None):
    if actions is None:
        actions = []
        stack = [tree]
        while stack:
            node = stack.pop()
            for entry in node.get("children", []):
                if entry["action"] not in actions:
                    actions.append(entry["action"])
                stack.append(entry["child"])
    return {
        "players": list(players),
        "actions": list(actions),
        "infinitesimals": list(infinitesimals),
        "constants": list(constants),
        "initial_constraints": list(initial),
        "property_constraints": {p: [] for p in PROPERTIES},
        "honest_histories": [list(h) for h in honest],
        "tree": tree,
    }


def make_game(tree, honest, **kwargs):
    return game_from_dict(make_doc(tree, honest, **kwargs))


@pytest.fixture(scope="session")
def backend():
    return Backend()


@pytest.fixture(scope="session")
def example():
    return bundled_game()


@pytest.fixture
def example_doc():
    from importlib import resources
    return json.loads(resources.files("efgsec").joinpath("games/running_example.json").read_text())


def pytest_terminal_summary(terminalreporter):
    import test_acceptance
    if test_acceptance.LINES:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.LINES:
            terminalreporter.write_line(line)
