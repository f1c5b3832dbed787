import sys
from fractions import Fraction

import pytest

from efgsec.expr import Symbols, parse_expr, parse_utility, to_formula
from efgsec.solver import Backend, Entailment, SolverError, entails, parse_sexpr
from efgsec.terms import BoolVar, ZERO, compare, conj, disj, neg

SYMS = Symbols(constants=("a", "b"))

FAKE_SOLVER = """
import sys
for line in sys.stdin:
    line = line.strip()
    if line.startswith("(check-sat"):
        print("unknown", flush=True)
    elif line.startswith("(get-info"):
        print('(:reason-unknown "canned")', flush=True)
    elif line.startswith("(exit"):
        break
"""


def f(text):
    return to_formula(parse_expr(text, SYMS), SYMS)


def ge0(text):
    return compare(">=", parse_utility(text, SYMS), ZERO)


@pytest.fixture(params=["z3", "smtlib"])
def any_backend(request):
    if request.param == "z3":
        return Backend()
    return Backend.from_command("z3 -in -smt2")


def test_labeled_sat_and_unsat(any_backend):
    with any_backend.session() as s:
        s.add(f("a > 0"), "init")
        r = s.check(model=True)
        assert r.is_sat and r.model["a"] > 0
        s.add(f("a < 0"), "other")
        r = s.check()
        assert r.is_unsat and r.core <= {"init", "other"}
        with pytest.raises(ValueError, match="duplicate label"):
            s.add(f("b > 0"), "init")


def test_push_pop_restores(any_backend):
    with any_backend.session() as s:
        s.add(f("a > 0"))
        s.push()
        s.add(f("a < 0"), "x")
        assert s.check().is_unsat
        s.pop()
        assert s.check().is_sat
        assert "x" not in s.labels
        s.add(f("a < -1"), "x")  # label usable again after pop
        assert s.check().is_unsat


def test_label_subsets(any_backend):
    with any_backend.session() as s:
        s.add(f("a > 1"), "p")
        s.add(f("a < 0"), "q")
        s.add(f("b > 0"), "r")
        assert s.check(labels=["p", "r"]).is_sat
        assert s.check(labels=["p", "q"]).is_unsat
        with pytest.raises(ValueError):
            s.check(labels=["nope"])


def test_core_soundness(any_backend):
    parts = {"c0": f("a > 2"), "c1": f("b > a"), "c2": f("b < 1"), "c3": f("a*b > 0")}
    with any_backend.session() as s:
        for label, g in parts.items():
            s.add(g, label)
        r = s.check()
        assert r.is_unsat and r.core
    with any_backend.session() as s:
        for label in sorted(r.core):
            s.add(parts[label], label)
        assert s.check().is_unsat


def test_models_cover_bools_and_rationals(any_backend):
    x = BoolVar("d[0]x")
    with any_backend.session() as s:
        s.add(conj(x, f("2*a = 1")))
        r = s.check(model=True)
    assert r.model["d[0]x"] is True
    assert r.model["a"] == Fraction(1, 2)


def test_nonlinear(any_backend):
    with any_backend.session() as s:
        s.add(f("a*a = 2"))
        s.add(f("a > 0"))
        assert s.check().is_sat
        s.add(f("a*a*a > 3"))
        assert s.check().is_unsat


def test_entailment_examples(any_backend):
    assert entails(any_backend, [f("a > 0")], ge0("a-2")) == Entailment.UNDETERMINED
    assert entails(any_backend, [f("a > 2")], ge0("a-2")) == Entailment.ENTAILED
    assert entails(any_backend, [f("a > 0"), f("a < 1")], ge0("a-2")) == Entailment.CONTRADICTED


def test_reference_violating_case_unsat(example, any_backend):
    from efgsec.encoding import encode
    phi = encode(example, ("r_A", "l_B"), "weak_immunity")
    case = [ge0("b"), neg(ge0("a-2"))]
    with any_backend.session() as s:
        s.add_all(example.assumptions("weak_immunity") + case + phi.skeleton + phi.aux)
        for r in phi.requirements:
            s.add(r.formula, r.label)
        assert s.check().is_unsat
    sat_case = [ge0("b"), ge0("a-2")]
    with any_backend.session() as s:
        s.add_all(example.assumptions("weak_immunity") + sat_case + phi.skeleton + phi.aux)
        s.add_all(r.formula for r in phi.requirements)
        assert s.check().is_sat


def test_determinism(any_backend):
    def run():
        with any_backend.session() as s:
            s.add(disj(f("a > 3"), f("b < 0")), "x")
            s.add(f("a < 1"), "y")
            first = s.check().status
            s.add(f("b > 0"), "z")
            return first, s.check().status
    assert run() == run() == ("sat", "unsat")


def test_dump_smt(tmp_path):
    backend = Backend(dump_dir=str(tmp_path))
    with backend.session("probe") as s:
        s.add(f("a > 0"), "init")
        s.check()
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files and files[0].startswith("0000-probe")
    text = (tmp_path / files[0]).read_text()
    assert "(declare-const a Real)" in text and "(check-sat" in text


def test_unknown_answer(tmp_path):
    script = tmp_path / "fake_solver.py"
    script.write_text(FAKE_SOLVER)
    backend = Backend("smtlib", (sys.executable, str(script)))
    with backend.session() as s:
        s.add(f("a > 0"))
        r = s.check()
    assert r.status == "unknown" and "canned" in r.reason
    with pytest.raises(SolverError):
        entails(backend, [f("a > 0")], f("a > 1"))


def test_missing_solver_binary():
    with pytest.raises(SolverError, match="cannot start"):
        Backend.from_command("/nonexistent/solver").session()


def test_parse_sexpr():
    assert parse_sexpr("((a 1.0) (|x y| (- 2.0)))") == [["a", "1.0"], ["|x y|", ["-", "2.0"]]]
