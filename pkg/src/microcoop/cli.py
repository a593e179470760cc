"""Command-line front end.

The ``cmd_*`` functions are the library entry points behind each subcommand;
``main`` only parses arguments, loads inputs and writes what they return.
"""
from __future__ import annotations

import argparse
import logging
import sys
from itertools import combinations
from pathlib import Path
from typing import Optional

import numpy as np

from . import game
from .errors import MicrocoopError, ValidationError
from .game import GameTable, allocate_table, build_game_table, mask_of, members
from .io import (
    Report,
    emit_plot_data,
    format_report,
    load_game_table,
    load_scenario,
    scenario_digest,
    scenario_document,
)
from .lp import brute_force_cost, oracle_tolerance, solve_coalition
from .lp.oracle import MAX_INTERVALS, MAX_STEPS
from .model import Scenario
from .synth import random_scenario

log = logging.getLogger("microcoop")

EXIT_OK, EXIT_VALIDATION, EXIT_INFEASIBLE, EXIT_INTERNAL, EXIT_UNSTABLE = 0, 1, 2, 3, 4


def _individual(scenario: Scenario):
    schedules = {mg.id: solve_coalition([n], scenario) for n, mg in enumerate(scenario.microgrids)}
    return schedules, {uid: s.cost for uid, s in schedules.items()}


def cmd_individual(scenario: Scenario) -> Report:
    schedules, costs = _individual(scenario)
    return Report("individual", scenario=scenario_digest(scenario),
                  individual_costs=costs, individual_schedules=schedules)


def cmd_coalition(scenario: Scenario) -> Report:
    schedules, costs = _individual(scenario)
    grand = solve_coalition(range(scenario.user_count), scenario)
    return Report("coalition", scenario=scenario_digest(scenario), individual_costs=costs,
                  individual_schedules=schedules, coalition=grand)


def cmd_game_table(scenario: Scenario, workers: Optional[int] = None) -> Report:
    table = build_game_table(scenario, workers=workers)
    return Report("game-table", scenario=scenario_digest(scenario), game_table=table)


def cmd_allocate(scenario: Optional[Scenario] = None, table: Optional[GameTable] = None,
                 method: str = "auto", skip_shapley_above: int = game.DEFAULT_SKIP_SHAPLEY_ABOVE,
                 workers: Optional[int] = None) -> Report:
    """Full pipeline. With ``table`` given, no scheduling LP is solved."""
    if table is None:
        if scenario is None:
            raise ValidationError("allocate needs a scenario or a game table")
        table = build_game_table(scenario, workers=workers)
    allocation = allocate_table(table, skip_shapley_above, method)
    report = Report("allocate", game_table=table, allocation=allocation)
    if scenario is not None:
        report.scenario = scenario_digest(scenario)
        report.individual_costs = {table.labels[n]: table.value(1 << n)
                                   for n in range(table.user_count)}
    return report


def cmd_audit(scenario: Scenario, steps: Optional[int] = None, embed_scenario: bool = False,
              workers: Optional[int] = None) -> Report:
    """Sub-additivity and submodularity of the scenario game, plus an optional
    LP-versus-grid-search comparison on every coalition of at most two users."""
    table = build_game_table(scenario, workers=workers)
    labels = table.labels
    sub = game.check_subadditivity(table)
    submod = game.check_submodularity(table)

    def names(mask):
        return [labels[i] for i in members(mask)]

    audit = {
        "subadditive": not sub,
        "subadditivity_violations": [
            {"s": names(s), "t": names(t), "excess": ex} for s, t, ex in sub],
        "submodular": not submod,
        "submodularity_violations": [
            {"s": names(v.smaller), "t": names(v.larger), "i": labels[v.player],
             "gain_s": v.gain_smaller, "gain_t": v.gain_larger} for v in submod],
    }
    if steps is not None:
        audit["oracle"] = _oracle_audit(scenario, table, steps)
    if embed_scenario:
        audit["scenario"] = scenario_document(scenario)
    return Report("audit", scenario=scenario_digest(scenario), game_table=table, audit=audit)


def _oracle_audit(scenario, table, steps):
    T = scenario.time_grid.interval_count
    if T > MAX_INTERVALS or steps > MAX_STEPS:
        return {"skipped": f"grid search needs T<={MAX_INTERVALS} and steps<={MAX_STEPS}"}
    checks = []
    for size in (1, 2):
        for group in combinations(range(scenario.user_count), size):
            mask = mask_of(group)
            brute = brute_force_cost(group, scenario, steps)
            tol = oracle_tolerance(group, scenario, steps)
            lp_value = table.value(mask)
            checks.append({"coalition": [table.labels[i] for i in group], "lp": lp_value,
                           "grid_search": brute, "tolerance": tol,
                           "within": bool(abs(lp_value - brute) <= tol + 1e-9)})
    return {"steps": steps, "checks": checks}


def cost_bars(report: Report, skip_shapley_above: int = game.DEFAULT_SKIP_SHAPLEY_ABOVE) -> dict:
    """Per-user costs under stand-alone, Shapley and fairness-LP allocations."""
    table = report.game_table
    bars = {"users": list(table.labels),
            "individual": [table.value(1 << n) for n in range(table.user_count)]}
    if table.user_count <= skip_shapley_above:
        bars["shapley"] = list(game.shapley_values(table))
    bars["fair_lp"] = list(game.fair_core_allocation(table).costs)
    return bars


# ---------------------------------------------------------------------- CLI

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microcoop",
        description="Cooperative battery scheduling and stable cost allocation for microgrids.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario_required=True):
        p.add_argument("--scenario", type=Path, required=scenario_required,
                       help="scenario file (.json, .yaml)")
        p.add_argument("--out", type=Path, help="report destination (default: stdout)")
        p.add_argument("--format", choices=("json", "text"), default="json")
        p.add_argument("--workers", type=int, default=None,
                       help="processes for the coalition solves")

    p = sub.add_parser("individual", help="optimize each user alone")
    common(p)
    p.add_argument("--plot-data", type=Path, help="directory for plot-data files and figures")
    p.add_argument("--no-figures", action="store_true", help="write plot data without PNGs")

    p = sub.add_parser("coalition", help="optimize the grand coalition jointly")
    common(p)
    p.add_argument("--plot-data", type=Path)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("game-table", help="optimal cost of every coalition")
    common(p)

    p = sub.add_parser("allocate", help="build the game and allocate the grand-coalition cost")
    common(p, scenario_required=False)
    p.add_argument("--game-table", type=Path, help="pre-computed coalition values instead of a scenario")
    p.add_argument("--method", choices=("auto", "shapley", "fair-lp"), default="auto")
    p.add_argument("--skip-shapley-above", type=int, default=game.DEFAULT_SKIP_SHAPLEY_ABOVE)
    p.add_argument("--plot-data", type=Path)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("audit", help="check game properties and the LP against grid search")
    common(p, scenario_required=False)
    p.add_argument("--seed", type=int, help="audit a random scenario drawn with this seed")
    p.add_argument("--tou-only", action="store_true",
                   help="with --seed: zero demand charge (ToU-only tariff)")
    p.add_argument("--steps", type=int, help="grid points per interval for the grid-search check")
    return parser


def _emit_plots(args, report, scenario):
    if getattr(args, "plot_data", None) is None:
        return
    bars = None
    coalition = report.coalition
    individual = report.individual_schedules
    if report.game_table is not None:
        bars = cost_bars(report, getattr(args, "skip_shapley_above", game.DEFAULT_SKIP_SHAPLEY_ABOVE))
    if scenario is not None and report.command == "allocate":
        individual = {mg.id: solve_coalition([n], scenario) for n, mg in enumerate(scenario.microgrids)}
        coalition = solve_coalition(range(scenario.user_count), scenario)
    paths = emit_plot_data(args.plot_data, scenario, individual, coalition, bars)
    if not args.no_figures:
        from .plotting import render_figures
        paths += render_figures(args.plot_data)
    for path in paths:
        log.info("wrote %s", path)


def run(args) -> int:
    scenario = load_scenario(args.scenario) if args.scenario is not None else None
    exit_code = EXIT_OK
    if args.command == "individual":
        report = cmd_individual(scenario)
    elif args.command == "coalition":
        report = cmd_coalition(scenario)
    elif args.command == "game-table":
        report = cmd_game_table(scenario, workers=args.workers)
    elif args.command == "allocate":
        if (scenario is None) == (args.game_table is None):
            raise ValidationError("allocate needs exactly one of --scenario or --game-table")
        table = load_game_table(args.game_table) if args.game_table is not None else None
        report = cmd_allocate(scenario, table, args.method, args.skip_shapley_above, args.workers)
        if not report.allocation.core_status.in_core:
            exit_code = EXIT_UNSTABLE
    else:
        embed = False
        if scenario is None:
            if args.seed is None:
                raise ValidationError("audit needs --scenario or --seed")
            rng = np.random.default_rng(args.seed)
            scenario = random_scenario(rng, demand_charge=0.0 if args.tou_only else None)
            embed = True
        report = cmd_audit(scenario, steps=args.steps, embed_scenario=embed, workers=args.workers)
        if not report.audit["subadditive"]:
            exit_code = EXIT_INTERNAL

    text = format_report(report, args.format)
    if args.out is not None:
        try:
            args.out.write_text(text)
        except OSError as exc:
            raise MicrocoopError(f"{args.out}: cannot write report ({exc.strerror})") from exc
    else:
        sys.stdout.write(text)
    _emit_plots(args, report, scenario)
    return exit_code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    try:
        return run(args)
    except MicrocoopError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
