"""Command-line entry point: checkmate GAME FLAGS, plus a `bench` subcommand."""
from __future__ import annotations

import argparse
import logging
import sys
import time

from .analysis import AnalysisError, analyze
from .cases import check_property
from .encoding import EncodingError
from .expr import ExprError
from .game import PROPERTIES, GameError, bundled_game, load_game
from .report import format_history, render_analysis, report_json
from .solver import Backend, SolverError

log = logging.getLogger("efgsec")

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_BACKEND = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _backend_args(parser):
    parser.add_argument("--solver", choices=("z3", "smtlib"), default="z3",
                        help="embedded z3 (default) or an external SMT-LIB solver process")
    parser.add_argument("--solver-command", default="z3 -in -smt2",
                        help="command line of the external solver (with --solver smtlib)")
    parser.add_argument("--timeout", type=int, default=None, metavar="MS",
                        help="per-query solver timeout in milliseconds")
    parser.add_argument("--seed", type=int, default=0, help="solver random seed")
    parser.add_argument("-v", "--verbose", action="count", default=0)


def _make_backend(args, dump_dir=None) -> Backend:
    if args.solver == "smtlib":
        return Backend.from_command(args.solver_command, seed=args.seed,
                                    timeout_ms=args.timeout, dump_dir=dump_dir)
    return Backend("z3", seed=args.seed, timeout_ms=args.timeout, dump_dir=dump_dir)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="checkmate",
                description="Check game-theoretic security properties of an extensive-form game.")
    p.add_argument("game", help="game description (JSON)")
    p.add_argument("--preconditions", action="store_true",
                   help="compute weakest preconditions for violated properties")
    p.add_argument("--counterexamples", action="store_true",
                   help="report a counterexample per violating case")
    p.add_argument("--all_counterexamples", action="store_true",
                   help="report every counterexample per violating case")
    p.add_argument("--all_cases", action="store_true",
                   help="explore every case instead of stopping at the first violation")
    p.add_argument("--strategies", action="store_true",
                   help="report a strategy per satisfied case")
    for prop in PROPERTIES:
        p.add_argument(f"--{prop}", action="store_true", help=f"check {prop.replace('_', ' ')}")
    p.add_argument("--json-out", metavar="PATH", help="also write a JSON report")
    p.add_argument("--dump-smt", metavar="DIR", help="write every solver query as SMT-LIB")
    _backend_args(p)
    return p


def _setup_logging(verbosity: int):
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def run(args) -> int:
    props = [p for p in PROPERTIES if getattr(args, p)] or list(PROPERTIES)
    counterexamples = args.counterexamples or args.all_counterexamples
    all_cases = args.all_cases or args.preconditions
    try:
        game = load_game(args.game)
    except OSError as exc:
        print(f"checkmate: cannot read {args.game}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_INPUT
    except (GameError, ExprError) as exc:
        print(f"checkmate: invalid game {args.game}: {exc}", file=sys.stderr)
        return EXIT_INPUT

    backend = _make_backend(args, args.dump_smt)
    analyses = []
    status = EXIT_OK
    try:
        for h in game.honest_histories:
            for prop in props:
                log.info("checking %s for history %s", prop, format_history(h))
                result = check_property(game, h, prop, backend, all_cases=all_cases)
                analysis = analyze(result, backend, strategies=args.strategies,
                                   counterexamples=counterexamples,
                                   all_counterexamples=args.all_counterexamples,
                                   preconditions=args.preconditions)
                analyses.append(analysis)
                sys.stdout.write(render_analysis(analysis) + "\n")
                sys.stdout.flush()
                if not result.holds:
                    status = EXIT_VIOLATION
    except (GameError, EncodingError) as exc:
        print(f"checkmate: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, AnalysisError) as exc:
        print(f"checkmate: analysis failed: {exc}", file=sys.stderr)
        return EXIT_BACKEND

    if args.json_out:
        with open(args.json_out, "w") as fh:
            fh.write(report_json(analyses, status))
    return status


# --- bench -----------------------------------------------------------------------


def build_bench_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="checkmate bench", description="Time the checker on bundled and generated games.")
    p.add_argument("--sizes", type=int, nargs="*", default=[200, 2000],
                   help="minimum node counts of generated games")
    p.add_argument("--properties", nargs="*", choices=PROPERTIES, default=list(PROPERTIES))
    p.add_argument("--game-seed", type=int, default=7, help="seed for generated games")
    _backend_args(p)
    return p


def bench(args) -> int:
    from .oracle import scale_game

    backend = _make_backend(args)
    rows = [("G (running example)", bundled_game())]
    rows += [(f"generated >= {n}", scale_game(n, seed=args.game_seed)) for n in args.sizes]
    header = f"{'game':<24}{'nodes':>8}{'players':>9}{'histories':>11}{'seconds':>10}"
    print(header)
    print("-" * len(header))
    try:
        for name, game in rows:
            start = time.perf_counter()
            for h in game.honest_histories:
                for prop in args.properties:
                    check_property(game, h, prop, backend)
            elapsed = time.perf_counter() - start
            print(f"{name:<24}{game.node_count:>8}{len(game.players):>9}"
                  f"{len(game.honest_histories):>11}{elapsed:>10.2f}")
    except (SolverError, AnalysisError) as exc:
        print(f"checkmate: analysis failed: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "bench":
        args = build_bench_parser().parse_args(argv[1:])
        _setup_logging(args.verbose)
        return bench(args)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT
    _setup_logging(args.verbose)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
