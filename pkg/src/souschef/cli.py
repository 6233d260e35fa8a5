"""Command line front end.

Subcommands:
  dag     parse a recipe and print its dependency structure and frontier
  run     drive one persona scenario end to end and write the transcript
  eval    run the persona evaluation matrix and report pass rates
  check   run violation checks over an existing transcript file
  serve   start the HTTP session service

Exit codes: 0 success, 1 evaluation/violation failures, 2 bad input.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .eval_harness import (
    MODES,
    PersonaScript,
    render_score_table,
    run_scenario,
    score_unit_tests,
)
from .planner import RecipeLibrary, UnknownRecipe
from .policy import CompliantBackend, SloppyBackend
from .recipe_graph import RecipeError, load_recipe_file
from .runtime import FaultConfig, KitchenWorld
from .violations import check_violations, render_violation_table

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_BAD_INPUT = 2


def _library(args) -> RecipeLibrary:
    if getattr(args, "recipe_dir", None):
        return RecipeLibrary.from_dir(args.recipe_dir)
    return RecipeLibrary.packaged()


def _world(args) -> KitchenWorld:
    if getattr(args, "world", None):
        return KitchenWorld.from_file(args.world)
    return KitchenWorld.default()


def _faults(args) -> FaultConfig:
    if getattr(args, "faults", None):
        return FaultConfig.from_file(args.faults)
    return FaultConfig()


def _backend(args, recipes: tuple[str, ...]):
    kind = getattr(args, "backend", "compliant")
    if kind == "compliant":
        return CompliantBackend(recipes)
    if kind == "sloppy":
        return SloppyBackend(CompliantBackend(recipes), p=args.sloppy_p, seed=args.seed + 1000003)
    if kind == "replay":
        from .gateway import ReplayBackend

        if not args.replay_log:
            raise SystemExit("--backend replay needs --replay-log")
        return ReplayBackend(args.replay_log)
    if kind == "live":
        from .gateway import LiveBackend

        return LiveBackend()
    raise SystemExit(f"unknown backend {kind!r}")


def _persona(args) -> PersonaScript:
    spec = args.persona
    if spec.startswith("file:"):
        return PersonaScript.from_file(spec[len("file:"):])
    if spec == "nominal":
        return PersonaScript.nominal(args.recipe)
    if spec == "hard":
        return PersonaScript.hard(args.recipe)
    if spec.startswith("easy:"):
        mode = spec[len("easy:"):]
        if mode not in MODES:
            raise SystemExit(f"easy persona mode must be one of {MODES}, got {mode!r}")
        return PersonaScript.easy(args.recipe, mode)
    raise SystemExit(
        "persona must be nominal, hard, easy:<A|B|C|D>, or file:<path>"
    )


# -- dag ------------------------------------------------------------------------


def cmd_dag(args) -> int:
    path = Path(args.recipe)
    try:
        if path.is_file():
            dag = load_recipe_file(path)
        else:
            dag = _library(args).load(args.recipe)
    except RecipeError as exc:
        print(f"recipe parse error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except UnknownRecipe as exc:
        print(f"unknown recipe: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    print(f"recipe: {dag.recipe_name or '(unnamed)'}")
    print(f"subtasks: {dag.node_count}")
    for node in dag.nodes:
        deps = ", ".join(node.parents) if node.parents else "-"
        print(f"  {node.id}  [depends on: {deps}]")
    print("frontier:", ", ".join(dag.available_subtasks()) or "-")
    return EXIT_OK


# -- run ------------------------------------------------------------------------


def cmd_run(args) -> int:
    library = _library(args)
    try:
        recipe = library.resolve(args.recipe)
    except UnknownRecipe:
        print(f"unknown recipe {args.recipe!r}; have: {', '.join(library.names)}", file=sys.stderr)
        return EXIT_BAD_INPUT
    args.recipe = recipe
    persona = _persona(args)
    result = run_scenario(
        recipe,
        persona,
        planner_kind=args.planner,
        backend=_backend(args, library.names),
        seed=args.seed,
        library=library,
        world=_world(args),
        faults=_faults(args),
    )
    if args.out:
        Path(args.out).write_text(result.transcript_text(), encoding="utf-8")
        print(f"transcript: {args.out} ({len(result.transcript)} records)")
    rate, verdicts = score_unit_tests(result.transcript, library.names)
    report = check_violations(result.transcript)
    print(f"finished: {result.finished}  completion: {result.session.completion_fraction():.0%}")
    if verdicts:
        print(render_score_table(verdicts))
    print(render_violation_table(report))
    failed = bool(report) or rate < 1.0 or result.budget_exceeded
    return EXIT_FAILURES if failed else EXIT_OK


# -- eval -----------------------------------------------------------------------


def cmd_eval(args) -> int:
    library = _library(args)
    recipes = (
        [library.resolve(name) for name in args.recipes]
        if args.recipes
        else list(library.names)
    )
    personas: list[tuple[str, PersonaScript]] = []
    for recipe in recipes:
        if args.suite in ("easy", "full"):
            for mode in args.modes:
                personas.append((f"easy:{mode}", PersonaScript.easy(recipe, mode)))
        if args.suite in ("hard", "full"):
            personas.append(("hard", PersonaScript.hard(recipe)))

    rows = []
    all_pass = True
    for name, persona in personas:
        for rep in range(args.reps):
            seed = args.seed + rep
            result = run_scenario(
                persona.recipe_target,
                persona,
                planner_kind=args.planner,
                backend=_backend(args, library.names),
                seed=seed,
                library=library,
                world=_world(args),
                faults=_faults(args),
            )
            rate, verdicts = score_unit_tests(result.transcript, library.names)
            report = check_violations(result.transcript)
            ok = (
                result.finished
                and not result.budget_exceeded
                and rate == 1.0
                and not report
            )
            all_pass = all_pass and ok
            rows.append(
                {
                    "recipe": persona.recipe_target,
                    "persona": name,
                    "seed": seed,
                    "finished": result.finished,
                    "unit_pass_rate": rate,
                    "violations": len(report),
                    "ok": ok,
                    "verdicts": verdicts,
                }
            )
            print(
                f"{persona.recipe_target:<22} {name:<8} seed={seed:<4} "
                f"finished={'y' if result.finished else 'n'} "
                f"units={rate:.0%} violations={len(report)} "
                f"{'PASS' if ok else 'FAIL'}"
            )
    passed = sum(1 for r in rows if r["ok"])
    print(f"\n{passed}/{len(rows)} scenario runs passed")
    if args.out:
        Path(args.out).write_text(
            json.dumps({"rows": rows, "passed": passed, "total": len(rows)}, indent=2)
            + "\n",
            encoding="utf-8",
        )
        print(f"report: {args.out}")
    return EXIT_OK if all_pass else EXIT_FAILURES


# -- check ----------------------------------------------------------------------


def cmd_check(args) -> int:
    path = Path(args.transcript)
    if not path.is_file():
        print(f"no such transcript: {path}", file=sys.stderr)
        return EXIT_BAD_INPUT
    transcript = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                transcript.append(json.loads(line))
            except json.JSONDecodeError as exc:
                print(f"line {lineno}: bad JSON: {exc}", file=sys.stderr)
                return EXIT_BAD_INPUT
    report = check_violations(transcript)
    print(render_violation_table(report))
    return EXIT_FAILURES if report else EXIT_OK


# -- serve ----------------------------------------------------------------------


def cmd_serve(args) -> int:
    from .service import serve

    serve(host=args.host, port=args.port, storage_dir=args.storage_dir)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="souschef",
        description="human-in-the-loop kitchen task orchestration",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_dag = sub.add_parser("dag", help="inspect a recipe dependency graph")
    p_dag.add_argument("recipe", help="recipe file path or library name")
    p_dag.add_argument("--recipe-dir", help="load recipes from this directory")
    p_dag.set_defaults(func=cmd_dag)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--planner", choices=("tree", "one-prompt"), default="tree")
    common.add_argument(
        "--backend", choices=("compliant", "sloppy", "replay", "live"), default="compliant"
    )
    common.add_argument("--sloppy-p", type=float, default=0.3, help="corruption rate for --backend sloppy")
    common.add_argument("--replay-log", help="recording file for --backend replay")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--recipe-dir", help="load recipes from this directory")
    common.add_argument("--world", help="world JSON file (defaults to the packaged kitchen)")
    common.add_argument("--faults", help="fault-injection JSON file")

    p_run = sub.add_parser("run", parents=[common], help="run one persona scenario")
    p_run.add_argument("--recipe", required=True)
    p_run.add_argument(
        "--persona",
        default="nominal",
        help="nominal, hard, easy:<A|B|C|D>, or file:<persona.json>",
    )
    p_run.add_argument("--out", help="write the transcript JSONL here")
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", parents=[common], help="run the evaluation matrix")
    p_eval.add_argument("--recipes", nargs="*", default=[], help="default: every packaged recipe")
    p_eval.add_argument("--suite", choices=("easy", "hard", "full"), default="full")
    p_eval.add_argument(
        "--modes", nargs="*", default=list(MODES), choices=list(MODES), help="easy-suite injection modes"
    )
    p_eval.add_argument("--reps", type=int, default=1)
    p_eval.add_argument("--out", help="write the JSON report here")
    p_eval.set_defaults(func=cmd_eval)

    p_check = sub.add_parser("check", help="violation-check a transcript file")
    p_check.add_argument("transcript")
    p_check.set_defaults(func=cmd_check)

    p_serve = sub.add_parser("serve", help="start the HTTP session service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8080)
    p_serve.add_argument("--storage-dir", help="persist sessions for restart recovery")
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except (RecipeError, UnknownRecipe, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
