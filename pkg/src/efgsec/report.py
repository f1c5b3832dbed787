"""Text and JSON renderings of analysis results."""
from __future__ import annotations

import json

from .cases import format_case

TITLES = {
    "weak_immunity": "WEAK IMMUNITY",
    "weaker_immunity": "WEAKER IMMUNITY",
    "collusion_resilience": "COLLUSION RESILIENCE",
    "practicality": "PRACTICALITY",
}

ADJECTIVES = {
    "weak_immunity": "weak immune",
    "weaker_immunity": "weaker immune",
    "collusion_resilience": "collusion resilient",
    "practicality": "practical",
}


def format_history(h) -> str:
    return "[" + ", ".join(h) + "]"


def _move(game, history, action) -> str:
    player = game.resolve(history).player
    return f"Player {player} takes action {action} after history {format_history(history)}"


def render_counterexample(game, ce) -> list:
    lines = []
    if ce.prop in ("weak_immunity", "weaker_immunity"):
        lines.append(f"\tPlayer {ce.players[0]} can be harmed if:")
        lines += [f"\t{_move(game, hist, a)}" for hist, a in ce.attack]
    elif ce.prop == "collusion_resilience":
        lines.append(f"\tGroup {format_history(ce.players)} can profit if:")
        lines += [f"\t{_move(game, hist, a)}" for hist, a in ce.attack]
        if ce.defense:
            lines.append("\tprovided that:")
            lines += [f"\t{_move(game, hist, a)}" for hist, a in ce.defense]
    else:
        lines.append(f"\tPlayer {ce.players[0]} can deviate after history "
                     f"{format_history(ce.prefix)} to the rational subhistory "
                     f"{format_history(ce.subhistory)}")
    return lines


def render_analysis(analysis) -> str:
    r = analysis.result
    adjective = ADJECTIVES[r.prop]
    lines = [TITLES[r.prop], "", f"Is history {format_history(r.history)} {adjective}?"]
    for kind, value in r.log:
        if kind == "split":
            lines.append(f"\tRequire case split on {value.to_prefix()}")
        elif kind == "sat":
            lines.append(f"\tCase {format_case(value)} satisfies property.")
        else:
            lines.append(f"\tCase {format_case(value)} violates property.")
    lines.append(f"YES, it is {adjective}." if r.holds else f"NO, it is not {adjective}.")
    for strategy in analysis.strategies:
        lines += ["", f"Case {format_case(strategy.case)}: strategy:"]
        lines += [f"\t{format_history(hist)}: {a}" for hist, a in
                  sorted(strategy.choice.items(), key=lambda kv: r.game.index[kv[0]])]
    for case, ces in analysis.counterexamples:
        for ce in ces:
            lines += ["", f"Counterexample for {format_case(case)}:"]
            lines += render_counterexample(r.game, ce)
    if analysis.precondition is not None:
        lines += ["", "Weakest Precondition:", f"\t{analysis.precondition.to_prefix()}"]
    return "\n".join(lines) + "\n"


def render_report(analyses) -> str:
    return "\n".join(render_analysis(a) for a in analyses)


# --- JSON -------------------------------------------------------------------------


def _case_json(node) -> dict:
    out = {"literals": [a.to_prefix() for a in node.literals], "status": node.status}
    if node.atom is not None:
        out["split_on"] = node.atom.to_prefix()
    return out


def _ce_json(ce) -> dict:
    out = {"players": list(ce.players)}
    if ce.prop == "practicality":
        out["prefix"] = list(ce.prefix)
        out["subhistory"] = list(ce.subhistory)
    else:
        out["attack"] = [{"history": list(h), "action": a} for h, a in ce.attack]
        if ce.defense:
            out["defense"] = [{"history": list(h), "action": a} for h, a in ce.defense]
    return out


def analysis_json(analysis) -> dict:
    r = analysis.result
    out = {
        "property": r.prop,
        "history": list(r.history),
        "holds": r.holds,
        "complete": r.complete,
        "log": [
            {"split": v.to_prefix()} if k == "split" else {k: [a.to_prefix() for a in v]}
            for k, v in r.log
        ],
        "cases": [_case_json(c) for c in r.leaf_cases],
    }
    if analysis.strategies:
        out["strategies"] = [
            {"case": [a.to_prefix() for a in s.case],
             "choice": [{"history": list(h), "action": a} for h, a in
                        sorted(s.choice.items(), key=lambda kv: r.game.index[kv[0]])]}
            for s in analysis.strategies
        ]
    if analysis.counterexamples:
        out["counterexamples"] = [
            {"case": [a.to_prefix() for a in case], "counterexamples": [_ce_json(ce) for ce in ces]}
            for case, ces in analysis.counterexamples
        ]
    if analysis.precondition is not None:
        out["precondition"] = {
            "formula": analysis.precondition.to_prefix(),
            "constraints": analysis.precondition.constraints(),
        }
    return out


def report_json(analyses, exit_status: int) -> str:
    doc = {"results": [analysis_json(a) for a in analyses], "exit_status": exit_status}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
