import copy
import json

import pytest

from conftest import branch, leaf, make_doc, make_game
from efgsec.expr import parse_utility
from efgsec.game import GameError, game_from_dict, load_game, parse_game, serialize_game
from efgsec.oracle import GenParams, random_game


def test_example_shape(example):
    assert example.players == ("A", "B")
    assert example.honest_histories == (("r_A", "l_B"),)
    assert example.node_count == 5
    assert len(example.players) == 2 and len(example.honest_histories) == 1
    assert [n.history for n in example.nodes] == [(), ("l_A",), ("r_A",), ("r_A", "l_B"), ("r_A", "r_B")]


def test_resolve(example):
    assert example.resolve(()) is example.tree
    node = example.resolve(["r_A"])
    assert not node.is_leaf and node.player == "B"
    with pytest.raises(GameError, match="l_B"):
        example.resolve(["l_B"])


def test_honest_leaf_utilities(example):
    syms = example.symbols
    got = example.honest_leaf_utilities(("r_A", "l_B"))
    assert got == {"A": parse_utility("a-2", syms), "B": parse_utility("b", syms)}
    assert example.honest_leaf_utilities(("l_A",)) == {
        "A": parse_utility("a-1", syms), "B": parse_utility("a", syms)}
    single = make_game(leaf(A=3), [[]], players=("A",))
    assert single.honest_leaf_utilities(()) == {"A": parse_utility("3", single.symbols)}


def test_missing_utility(example_doc):
    example_doc["tree"]["children"][0]["child"]["utility"].pop()
    with pytest.raises(GameError, match="utility missing for player 'B'") as exc:
        game_from_dict(example_doc)
    assert exc.value.path == "$.tree.children[0].child.utility"


def test_honest_history_must_reach_leaf(example_doc):
    example_doc["honest_histories"] = [["r_A"]]
    with pytest.raises(GameError, match="honest history must reach a leaf"):
        game_from_dict(example_doc)


@pytest.mark.parametrize("mutate,message", [
    (lambda d: d.pop("actions"), "schema violation"),
    (lambda d: d.update(extra=1), "schema violation"),
    (lambda d: d["property_constraints"].pop("practicality"), "schema violation"),
    (lambda d: d.update(actions=["l_A", "r_A", "l_B"]), "undeclared action 'r_B'"),
    (lambda d: d["tree"].update(player="C"), "undeclared player 'C'"),
    (lambda d: d.update(initial_constraints=["z>0"]), "unknown identifier"),
    (lambda d: d.update(initial_constraints=["a+1"]), "not Boolean|comparison"),
    (lambda d: d.update(infinitesimals=["a"]), "both constant and infinitesimal"),
    (lambda d: d["tree"]["children"][1].update(action="l_A"), "duplicate sibling action"),
    (lambda d: d.update(honest_histories=[["l_B"]]), "l_B"),
])
def test_validation_errors(example_doc, mutate, message):
    mutate(example_doc)
    with pytest.raises(GameError, match=message):
        game_from_dict(example_doc)


def test_infinitesimal_product_rejected():
    doc = make_doc(leaf(A="e*f"), [[]], players=("A",), infinitesimals=("e", "f"))
    with pytest.raises(GameError, match="infinitesimal"):
        game_from_dict(doc)


def test_unsatisfiable_assumptions_rejected():
    from efgsec.cases import AssumptionError, check_property
    game = make_game(leaf(A="a"), [[]], players=("A",), constants=("a",), initial=("a>0", "a<0"))
    with pytest.raises(AssumptionError):
        check_property(game, (), "weak_immunity")


def test_parse_game_errors(tmp_path):
    with pytest.raises(GameError, match="JSON"):
        parse_game("{not json")
    with pytest.raises(OSError):
        load_game(tmp_path / "missing.json")


def test_serialize_round_trip(example):
    assert parse_game(serialize_game(example)) == example
    for seed in range(30):
        game = random_game(GenParams(seed=seed, players=3, constants=2))
        assert parse_game(serialize_game(game)) == game


def test_sibling_order_preserved(example_doc):
    doc = copy.deepcopy(example_doc)
    doc["tree"]["children"].reverse()
    game = game_from_dict(doc)
    assert game.tree.actions == ("r_A", "l_A")
    assert json.loads(serialize_game(game))["tree"]["children"][0]["action"] == "r_A"


def test_with_constraints(example):
    g = example.with_constraints(["a >= 2", "b >= 0"])
    assert len(g.initial_constraints) == 3
    with pytest.raises(GameError):
        example.with_constraints(["a + 1"])


def test_branch_helper_builds_valid_game():
    game = make_game(branch("A", x=leaf(A=1, B=0), y=leaf(A=0, B=1)), [["x"]])
    assert game.tree.actions == ("x", "y")
