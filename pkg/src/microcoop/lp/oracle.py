"""Exhaustive grid search over dispatch, used to cross-check the LP solver."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from ..errors import SizeError
from ..model import Microgrid, Scenario
from .formulation import _members

MAX_INTERVALS = 5
MAX_MEMBERS = 2
MAX_STEPS = 21
_CHUNK = 4_000_000
_EPS = 1e-12


def grid_spacing(mg: Microgrid, steps: int) -> float:
    if mg.storage is None:
        return 0.0
    return (mg.storage.dispatch_max - mg.storage.dispatch_min) / (steps - 1)


def _candidates(mg: Microgrid, T: int, steps: int) -> np.ndarray:
    """All grid dispatch vectors of one user passing the relaxed storage checks."""
    spec = mg.storage
    if spec is None:
        return np.zeros((1, T))
    h = grid_spacing(mg, steps)
    levels = np.linspace(spec.dispatch_min, spec.dispatch_max, steps)
    span_limit = spec.capacity_max - spec.capacity_min + 2 * h + _EPS
    # prefixes[:, k] is the cumulative discharge after k intervals
    seqs = np.zeros((1, 0))
    prefix = np.zeros((1, 1))
    for _ in range(T):
        k = seqs.shape[0]
        seqs = np.hstack([np.repeat(seqs, steps, axis=0), np.tile(levels, k)[:, None]])
        prefix = np.hstack([np.repeat(prefix, steps, axis=0),
                            (np.repeat(prefix[:, -1], steps) + np.tile(levels, k))[:, None]])
        if spec.initial_charge is None:
            keep = prefix.max(axis=1) - prefix.min(axis=1) <= span_limit
        else:
            charge = spec.initial_charge - prefix
            keep = np.all((charge >= spec.capacity_min - h - _EPS)
                          & (charge <= spec.capacity_max + h + _EPS), axis=1)
        seqs, prefix = seqs[keep], prefix[keep]
    cyclic = np.abs(prefix[:, -1]) <= h + _EPS
    return seqs[cyclic]


def brute_force_cost(coalition: Iterable[int], scenario: Scenario, steps: int) -> float:
    """Minimum coalition bill over dispatch restricted to ``steps`` grid points.

    Charge bounds and the cyclic condition are relaxed by one grid spacing so
    the discrete feasible set stays nonempty. Returns ``inf`` when no grid
    trajectory survives.
    """
    idx = _members(coalition, scenario)
    T = scenario.time_grid.interval_count
    if T > MAX_INTERVALS or len(idx) > MAX_MEMBERS or not 2 <= steps <= MAX_STEPS:
        raise SizeError(
            f"brute force limited to T<={MAX_INTERVALS}, <={MAX_MEMBERS} users, "
            f"2<=steps<={MAX_STEPS}; got T={T}, {len(idx)} users, steps={steps}")
    members = [scenario.microgrids[i] for i in idx]
    demand = sum(mg.demand for mg in members)
    draw_tol = sum(grid_spacing(mg, steps) for mg in members) + _EPS
    p = scenario.tariff.tou_prices
    alpha = scenario.tariff.demand_charge

    sets = [np.unique(np.round(_candidates(mg, T, steps), 12), axis=0) for mg in members]
    if any(s.shape[0] == 0 for s in sets):
        return float("inf")
    first = sets[0]
    second = sets[1] if len(sets) > 1 else np.zeros((1, T))
    best = float("inf")
    rows = max(1, _CHUNK // max(1, second.shape[0] * T))
    for start in range(0, first.shape[0], rows):
        total = first[start:start + rows, None, :] + second[None, :, :]
        x = demand - total
        ok = np.all(x >= -draw_tol, axis=2)
        if not ok.any():
            continue
        cost = x @ p + alpha * x.max(axis=2)
        best = min(best, float(cost[ok].min()))
    return best


def oracle_tolerance(coalition: Iterable[int], scenario: Scenario, steps: int) -> float:
    """Allowed |LP - brute force| gap at resolution ``steps``.

    Summed grid spacing priced at the demand charge plus the ToU price sum,
    doubled: rounding the LP optimum onto the grid costs up to one such term,
    and the one-spacing slack in the charge and cyclic checks lets the grid
    search undercut the LP by about as much again.
    """
    idx = _members(coalition, scenario)
    h = sum(grid_spacing(scenario.microgrids[i], steps) for i in idx)
    return 2.0 * h * (scenario.tariff.demand_charge + float(np.sum(scenario.tariff.tou_prices)))
