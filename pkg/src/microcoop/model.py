"""Tariffs, microgrids and storage, plus direct evaluation of the bill.

Every quantity is an energy per interval. ``TimeGrid.interval_length`` is
carried along for reporting only and never enters a computation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DimensionError, ValidationError

SCHEDULE_TOL = 1e-6


def _frozen_vector(values, name):
    arr = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeGrid:
    interval_count: int
    interval_length: float = 1.0

    def __post_init__(self):
        if int(self.interval_count) != self.interval_count or self.interval_count < 1:
            raise ValidationError(f"interval_count must be a positive integer, got {self.interval_count}")
        if not self.interval_length > 0:
            raise ValidationError(f"interval_length must be positive, got {self.interval_length}")
        object.__setattr__(self, "interval_count", int(self.interval_count))
        object.__setattr__(self, "interval_length", float(self.interval_length))


@dataclass(frozen=True)
class Tariff:
    tou_prices: np.ndarray
    demand_charge: float

    def __post_init__(self):
        prices = _frozen_vector(self.tou_prices, "tou_prices")
        if prices.size == 0:
            raise ValidationError("tou_prices must not be empty")
        if np.any(prices < 0):
            raise ValidationError("tou_prices must be non-negative")
        if not self.demand_charge >= 0:
            raise ValidationError(f"demand_charge must be non-negative, got {self.demand_charge}")
        object.__setattr__(self, "tou_prices", prices)
        object.__setattr__(self, "demand_charge", float(self.demand_charge))

    def __len__(self):
        return self.tou_prices.size


@dataclass(frozen=True)
class StorageSpec:
    """Battery limits. ``initial_charge=None`` leaves the starting level free."""

    capacity_min: float
    capacity_max: float
    dispatch_min: float
    dispatch_max: float
    initial_charge: Optional[float] = None

    def __post_init__(self):
        for name in ("capacity_min", "capacity_max", "dispatch_min", "dispatch_max"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValidationError(f"storage {name} must be finite")
            object.__setattr__(self, name, value)
        if self.capacity_min > self.capacity_max:
            raise ValidationError("storage capacity_min exceeds capacity_max")
        if self.dispatch_min > self.dispatch_max:
            raise ValidationError("storage dispatch_min exceeds dispatch_max")
        if not self.dispatch_min <= 0 <= self.dispatch_max:
            raise ValidationError("storage dispatch range must contain 0 (idle)")
        if self.initial_charge is not None:
            ic = float(self.initial_charge)
            if not self.capacity_min <= ic <= self.capacity_max:
                raise ValidationError("storage initial_charge outside capacity bounds")
            object.__setattr__(self, "initial_charge", ic)


@dataclass(frozen=True)
class Microgrid:
    id: str
    demand: np.ndarray
    storage: Optional[StorageSpec] = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValidationError("microgrid id must be a non-empty string")
        demand = _frozen_vector(self.demand, f"demand of {self.id!r}")
        if np.any(demand < 0):
            raise ValidationError(f"demand of {self.id!r} has negative entries")
        object.__setattr__(self, "demand", demand)


@dataclass(frozen=True)
class Scenario:
    time_grid: TimeGrid
    tariff: Tariff
    microgrids: tuple

    def __post_init__(self):
        grids = tuple(self.microgrids)
        if not grids:
            raise ValidationError("scenario needs at least one microgrid")
        T = self.time_grid.interval_count
        if len(self.tariff) != T:
            raise DimensionError(f"tariff has {len(self.tariff)} prices, time grid has {T} intervals")
        seen = set()
        for mg in grids:
            if mg.demand.size != T:
                raise DimensionError(f"demand of {mg.id!r} has length {mg.demand.size}, expected {T}")
            if mg.id in seen:
                raise ValidationError(f"duplicate microgrid id {mg.id!r}")
            seen.add(mg.id)
        object.__setattr__(self, "microgrids", grids)

    @property
    def user_count(self):
        return len(self.microgrids)

    @property
    def ids(self):
        return [mg.id for mg in self.microgrids]

    def replace_tariff(self, tariff):
        return Scenario(self.time_grid, tariff, self.microgrids)


@dataclass(frozen=True)
class Schedule:
    """Optimal schedule of one user or coalition.

    ``dispatch`` and ``charge_trajectory`` are keyed by microgrid id and only
    hold users that own storage. Charge trajectories have T+1 entries.
    """

    grid_draw: np.ndarray
    dispatch: Mapping[str, np.ndarray] = field(default_factory=dict)
    charge_trajectory: Mapping[str, np.ndarray] = field(default_factory=dict)
    cost: float = 0.0
    members: tuple = ()

    def violations(self, scenario: Scenario, tol: float = SCHEDULE_TOL) -> list[str]:
        """Return a description of every broken schedule invariant (empty if none)."""
        problems = []
        by_id = {mg.id: mg for mg in scenario.microgrids}
        x = self.grid_draw
        if np.any(x < -tol):
            problems.append("negative grid draw")
        total_demand = sum(by_id[m].demand for m in self.members)
        total_dispatch = sum(self.dispatch.values()) if self.dispatch else 0.0
        if np.max(np.abs(x - (total_demand - total_dispatch))) > tol:
            problems.append("energy balance")
        for uid, e in self.dispatch.items():
            spec = by_id[uid].storage
            c = self.charge_trajectory[uid]
            if np.max(np.abs(c[1:] - (c[:-1] - e))) > tol:
                problems.append(f"charge recursion of {uid}")
            if np.any(e < spec.dispatch_min - tol) or np.any(e > spec.dispatch_max + tol):
                problems.append(f"dispatch bounds of {uid}")
            if np.any(c < spec.capacity_min - tol) or np.any(c > spec.capacity_max + tol):
                problems.append(f"charge bounds of {uid}")
            if abs(c[0] - c[-1]) > tol:
                problems.append(f"cyclic charge of {uid}")
            if spec.initial_charge is not None and abs(c[0] - spec.initial_charge) > tol:
                problems.append(f"initial charge of {uid}")
        return problems


def evaluate_cost(grid_draw: Sequence[float], tariff: Tariff) -> float:
    """ToU energy cost plus demand charge on the peak interval."""
    x = np.asarray(grid_draw, dtype=float).reshape(-1)
    if x.size != len(tariff):
        raise DimensionError(f"grid draw has length {x.size}, tariff has {len(tariff)}")
    return float(np.dot(tariff.tou_prices, x) + tariff.demand_charge * np.max(x))
