"""Command line entry point ``irs-matchsel``.

Exit codes: 0 success, 1 check found blocking pairs or invalid pairs,
2 no feasible solution, 3 invalid input, 4 resource guard tripped.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .bounds import BRUTE_FORCE_LIMIT, NODE_LIMIT, InstanceTooLargeError, branch_and_bound_exact, brute_force, optimize_duals
from .experiments import (
    EXPERIMENTS,
    PARETO_COLUMNS,
    SWEEP_COLUMNS,
    ExperimentError,
    load_config,
    point_rows,
    preset,
    run_experiment,
    scenario_points,
    to_csv,
)
from .feasibility import EnumerationCapError, FeasibleSet, achievable_coverage
from .fileio import (
    ScenarioFormatError,
    bound_to_dict,
    dumps_result,
    load_scenario,
    scenario_to_json,
    solution_from_dict,
    solution_to_dict,
)
from .generator import GeneratorParams, generate
from .matching import Context, Matching, Variant, blocking_pairs, matching_violations, solve
from .model import InvalidScenarioError
from .utility import BudgetSemantics

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INFEASIBLE = 2
EXIT_INVALID = 3
EXIT_GUARD = 4


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _semantics(value: str) -> BudgetSemantics:
    try:
        return BudgetSemantics.parse(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown budget semantics {value!r}") from None


def _context(path: str, budget: float | None = None) -> Context:
    scenario = load_scenario(path)
    if budget is not None:
        scenario = scenario.replace(budget_xi=budget)
    return Context.of(scenario)


def cmd_gen(args) -> int:
    params = GeneratorParams(
        n_nodes=args.nodes,
        n_attacks=args.attacks,
        n_countermeasures=args.countermeasures,
        coverage_fraction=args.coverage,
        budget_xi=args.budget,
        betas=tuple(args.betas),
        seed=args.seed,
        coverage_density=args.coverage_density,
        node_density=args.node_density,
    )
    _emit(scenario_to_json(generate(params)), args.output)
    return EXIT_OK


def cmd_solve(args) -> int:
    ctx = _context(args.scenario, args.budget)
    sol = solve(ctx, args.variant, all_starts=args.all_starts, start=args.start, semantics=args.budget_semantics)
    _emit(dumps_result(solution_to_dict(sol)), args.output)
    return EXIT_OK if sol.feasible else EXIT_INFEASIBLE


def cmd_check(args) -> int:
    ctx = _context(args.scenario)
    doc = json.loads(Path(args.solution).read_text(encoding="utf-8"))
    pairs = solution_from_dict(doc)
    info = doc.get("matching") or {}
    # without a recorded feasible set every countermeasure takes part in the game
    members = info.get("feasible_set") or ctx.index.countermeasure_ids
    fs = FeasibleSet(tuple(members), achievable_coverage(members, ctx.index))
    matching = Matching(
        pairs,
        Variant.parse(info.get("variant", "asm")),
        int(info.get("start_point", 0)),
        fs,
        sum(ctx.index.n_a.get(a, 0) for a in pairs),
        int(info.get("steps", 0)),
    )
    blocking = blocking_pairs(matching, ctx.prefs)
    problems = matching_violations(matching, ctx.prefs, ctx.index)
    if matching.coverage < ctx.threshold:
        problems.append(f"coverage {matching.coverage} below threshold {ctx.threshold}")
    report = {
        "stable": not blocking,
        "valid": not problems,
        "blocking_pairs": [
            {"attack": b.attack, "countermeasure": b.countermeasure, "conditions": list(b.conditions)} for b in blocking
        ],
        "violations": problems,
    }
    _emit(dumps_result(report), args.output)
    return EXIT_OK if not blocking and not problems else EXIT_CHECK_FAILED


def cmd_bound(args) -> int:
    ctx = _context(args.scenario, args.budget)
    result = optimize_duals(ctx, args.iterations, args.t0, args.step_rule, semantics=args.budget_semantics)
    _emit(dumps_result(bound_to_dict(result)), args.output)
    return EXIT_OK


def cmd_exact(args) -> int:
    ctx = _context(args.scenario, args.budget)
    if args.method == "brute":
        sol = brute_force(ctx, semantics=args.budget_semantics, limit=args.limit)
    else:
        sol = branch_and_bound_exact(ctx, semantics=args.budget_semantics, node_limit=args.limit)
    _emit(dumps_result(solution_to_dict(sol)), args.output)
    if sol.exhausted:
        return EXIT_GUARD
    return EXIT_OK if sol.feasible else EXIT_INFEASIBLE


def cmd_experiment(args) -> int:
    if args.config:
        config = load_config(args.config)
        if args.runs:
            config = replace(config, runs=args.runs)
        if args.base_seed is not None:
            config = replace(config, base_seed=args.base_seed)
    elif args.name:
        config = preset(args.name, args.runs, args.base_seed or 0, args.variant)
    else:
        raise ValueError("give a preset name or --config")
    config = replace(config, output=args.output, semantics=args.budget_semantics or config.semantics)
    try:
        rows = run_experiment(config, workers=args.workers)
    except ExperimentError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_GUARD if e.guard_tripped else EXIT_INVALID
    if not args.output:
        sys.stdout.write(to_csv(rows, PARETO_COLUMNS if config.name == "pareto" else SWEEP_COLUMNS))
    return EXIT_OK


def cmd_pareto(args) -> int:
    ctx = _context(args.scenario, args.budget)
    variants = (Variant.ASM, Variant.CSM) if args.variant == "both" else (Variant.parse(args.variant),)
    rows = point_rows(scenario_points(ctx, variants, args.budget_semantics))
    if args.front_only:
        rows = [r for r in rows if r["on_front"]]
        rows.sort(key=lambda r: (-r["security"], r["qos_cost"]))
    _emit(to_csv(rows, PARETO_COLUMNS), args.output)
    return EXIT_OK if rows else EXIT_INFEASIBLE


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        # usage errors are invalid input, not the infeasible code argparse would use
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="irs-matchsel", description="Countermeasure selection by stable matching.")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_cmd(name: str, help: str, budget_flags: bool = True) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.add_argument("scenario", help="scenario JSON file")
        p.add_argument("-o", "--output", help="output file (default: stdout)")
        if budget_flags:
            p.add_argument("--budget-semantics", type=_semantics, default=BudgetSemantics.PER_PAIR,
                           help="per-pair (default) or per-countermeasure")
            p.add_argument("--budget", type=float, help="override the scenario's monetary budget")
        return p

    p = sub.add_parser("gen", help="generate a random scenario")
    p.add_argument("--nodes", type=int, default=100)
    p.add_argument("--attacks", type=int, default=20)
    p.add_argument("--countermeasures", type=int, default=10)
    p.add_argument("--coverage", type=float, default=1.0, help="required coverage fraction")
    p.add_argument("--budget", type=float, default=12.0)
    p.add_argument("--betas", type=float, nargs=3, default=(1 / 3, 1 / 3, 1 / 3), metavar=("TIME", "ENERGY", "MONEY"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coverage-density", type=float, default=0.5)
    p.add_argument("--node-density", type=float)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen)

    p = scenario_cmd("solve", "run ASM or CSM over every feasible set")
    p.add_argument("--variant", choices=[v.value for v in Variant], default="asm")
    p.add_argument("--start", type=int, default=0, help="rotation start point")
    p.add_argument("--all-starts", action="store_true", help="try every rotation start")
    p.set_defaults(func=cmd_solve)

    p = scenario_cmd("check", "report blocking pairs of a solution", budget_flags=False)
    p.add_argument("solution", help="solution JSON from solve or exact")
    p.set_defaults(func=cmd_check)

    p = scenario_cmd("bound", "Lagrangian upper bound with subgradient-optimized multipliers")
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--t0", type=float, default=1.0, help="initial step length")
    p.add_argument("--step-rule", choices=("normalized", "sqrt"), default="normalized")
    p.set_defaults(func=cmd_bound)

    p = scenario_cmd("exact", "optimal solution by branch and bound or brute force")
    p.add_argument("--method", choices=("bb", "brute"), default="bb")
    p.add_argument("--limit", type=int, help="node limit (bb) or assignment limit (brute)")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("experiment", help="run a preset sweep or a JSON config, write CSV")
    p.add_argument("name", nargs="?", choices=EXPERIMENTS)
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--runs", type=int)
    p.add_argument("--base-seed", type=int)
    p.add_argument("--variant", choices=("asm", "csm", "both"), default="both")
    p.add_argument("--budget-semantics", type=_semantics)
    p.add_argument("--workers", type=int, help="worker processes (capped by IRS_MATCHSEL_THREADS)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_experiment)

    p = scenario_cmd("pareto", "multi-start points and their Pareto front as CSV")
    p.add_argument("--variant", choices=("asm", "csm", "both"), default="both")
    p.add_argument("--front-only", action="store_true", help="emit only non-dominated points")
    p.set_defaults(func=cmd_pareto)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # usage errors and --help
        return int(e.code or 0)
    if getattr(args, "func", None) is cmd_exact and args.limit is None:
        args.limit = BRUTE_FORCE_LIMIT if args.method == "brute" else NODE_LIMIT
    try:
        return args.func(args)
    except (EnumerationCapError, InstanceTooLargeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_GUARD
    except (ScenarioFormatError, InvalidScenarioError, ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
