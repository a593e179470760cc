"""Epigraph LPs for individual and coalition battery scheduling.

The peak term ``alpha * max_t x_t`` is replaced by a scalar ``z`` with
``z >= x_t`` for every interval, so the objective becomes
``sum_t p_t x_t + alpha z``. Variable names in the produced problem:

    ("x", t)        aggregate grid draw in interval t, x >= 0
    "z"             peak epigraph variable
    ("e", id, t)    dispatch of user ``id`` (positive discharges)
    ("c", id, k)    charge level of user ``id`` at boundary k = 0..T
"""
from __future__ import annotations

from typing import Iterable

import numpy as np

from ..errors import DimensionError, DomainError, InfeasibleError
from ..model import Microgrid, Scenario, Schedule, Tariff, TimeGrid, evaluate_cost
from .simplex import EQ, GE, LPBuilder, LPProblem, LPSolution, solve_lp


def _build(members: list[Microgrid], tariff: Tariff, T: int) -> LPProblem:
    lp = LPBuilder()
    x = [lp.add_var(("x", t), 0.0, np.inf, tariff.tou_prices[t]) for t in range(T)]
    z = lp.add_var("z", cost=tariff.demand_charge)
    for t in range(T):
        lp.add_row({z: 1.0, x[t]: -1.0}, GE, 0.0)

    total_demand = np.zeros(T)
    dispatch = {t: [] for t in range(T)}
    for mg in members:
        total_demand += mg.demand
        spec = mg.storage
        if spec is None:
            continue
        e = [lp.add_var(("e", mg.id, t), spec.dispatch_min, spec.dispatch_max) for t in range(T)]
        c = []
        for k in range(T + 1):
            lo, hi = spec.capacity_min, spec.capacity_max
            if k == 0 and spec.initial_charge is not None:
                lo = hi = spec.initial_charge
            c.append(lp.add_var(("c", mg.id, k), lo, hi))
        for t in range(T):
            dispatch[t].append(e[t])
            lp.add_row({c[t + 1]: 1.0, c[t]: -1.0, e[t]: 1.0}, EQ, 0.0)
        lp.add_row({c[0]: 1.0, c[T]: -1.0}, EQ, 0.0)

    for t in range(T):
        row = {x[t]: 1.0}
        for j in dispatch[t]:
            row[j] = 1.0
        lp.add_row(row, EQ, total_demand[t])
    return lp.build()


def build_individual_lp(microgrid: Microgrid, tariff: Tariff, grid: TimeGrid) -> LPProblem:
    T = grid.interval_count
    if len(tariff) != T or microgrid.demand.size != T:
        raise DimensionError(
            f"inconsistent lengths: grid {T}, tariff {len(tariff)}, demand {microgrid.demand.size}")
    return _build([microgrid], tariff, T)


def _members(coalition: Iterable[int], scenario: Scenario) -> list[int]:
    idx = sorted(set(int(i) for i in coalition))
    if not idx:
        raise DomainError("coalition must be nonempty")
    if idx[0] < 0 or idx[-1] >= scenario.user_count:
        raise DomainError(f"coalition {idx} references users outside 0..{scenario.user_count - 1}")
    return idx


def build_coalition_lp(coalition: Iterable[int], scenario: Scenario) -> LPProblem:
    idx = _members(coalition, scenario)
    return _build([scenario.microgrids[i] for i in idx], scenario.tariff,
                  scenario.time_grid.interval_count)


def extract_schedule(problem: LPProblem, solution: LPSolution, members: list[Microgrid],
                     tariff: Tariff) -> Schedule:
    T = len(tariff)
    vals = solution.variable_values
    x = np.array([vals[problem.index(("x", t))] for t in range(T)])
    dispatch, charge = {}, {}
    for mg in members:
        if mg.storage is None:
            continue
        dispatch[mg.id] = np.array([vals[problem.index(("e", mg.id, t))] for t in range(T)])
        charge[mg.id] = np.array([vals[problem.index(("c", mg.id, k))] for k in range(T + 1)])
    return Schedule(grid_draw=x, dispatch=dispatch, charge_trajectory=charge,
                    cost=float(solution.objective_value), members=tuple(mg.id for mg in members))


def solve_coalition(coalition: Iterable[int], scenario: Scenario) -> Schedule:
    """Optimal joint schedule for ``coalition``; raises InfeasibleError if none exists."""
    idx = _members(coalition, scenario)
    problem = build_coalition_lp(idx, scenario)
    solution = solve_lp(problem)
    names = [scenario.microgrids[i].id for i in idx]
    if not solution.optimal:
        raise InfeasibleError(f"coalition {{{', '.join(names)}}} scheduling LP is {solution.status}",
                              coalition=tuple(names))
    return extract_schedule(problem, solution, [scenario.microgrids[i] for i in idx], scenario.tariff)


def solve_individual(index: int, scenario: Scenario) -> Schedule:
    return solve_coalition([index], scenario)


def epigraph_gap(schedule: Schedule, tariff: Tariff) -> float:
    """Relative gap between the LP objective and the bill of its grid draw."""
    billed = evaluate_cost(schedule.grid_draw, tariff)
    return abs(schedule.cost - billed) / max(1.0, abs(billed))
