"""Random scenario family used by the audits and the property tests."""
from __future__ import annotations

import numpy as np

from .model import Microgrid, Scenario, StorageSpec, Tariff, TimeGrid


def random_storage(rng: np.random.Generator, fixed_initial: bool = False) -> StorageSpec:
    cap_min = float(rng.uniform(0.0, 2.0))
    cap_max = cap_min + float(rng.uniform(0.5, 10.0))
    dis_max = float(rng.uniform(0.2, 5.0))
    dis_min = -float(rng.uniform(0.2, 5.0))
    initial = float(rng.uniform(cap_min, cap_max)) if fixed_initial else None
    return StorageSpec(cap_min, cap_max, dis_min, dis_max, initial)


def random_scenario(
    rng: np.random.Generator,
    users=(2, 3, 4),
    intervals=(3, 4, 5, 6),
    storage_probability: float = 0.75,
    demand_charge: float | None = None,
) -> Scenario:
    """Demands uniform in [0, 10], ToU prices in [0, 5], demand charge in [0, 20].

    Pass ``demand_charge=0`` for ToU-only tariffs.
    """
    N = int(rng.choice(users))
    T = int(rng.choice(intervals))
    prices = rng.uniform(0.0, 5.0, size=T)
    alpha = float(rng.uniform(0.0, 20.0)) if demand_charge is None else float(demand_charge)
    grids = []
    for n in range(N):
        storage = None
        if rng.random() < storage_probability:
            storage = random_storage(rng, fixed_initial=rng.random() < 0.25)
        grids.append(Microgrid(f"u{n + 1}", rng.uniform(0.0, 10.0, size=T), storage))
    return Scenario(TimeGrid(T, 1.0), Tariff(prices, alpha), tuple(grids))


def grid_aligned_scenario(rng: np.random.Generator, users: int, intervals: int,
                          steps: int = 11) -> Scenario:
    """Small instance whose dispatch grid (and every refinement by doubling the
    step count minus one) contains zero, so idle is always representable."""
    T = intervals
    grids = []
    for n in range(users):
        h = float(rng.uniform(0.1, 0.6))
        below = int(rng.integers(1, steps - 1))
        spec = StorageSpec(
            capacity_min=0.0,
            capacity_max=float(rng.uniform(0.5, 4.0)),
            dispatch_min=-below * h,
            dispatch_max=(steps - 1 - below) * h,
        )
        grids.append(Microgrid(f"u{n + 1}", rng.uniform(0.0, 10.0, size=T), spec))
    tariff = Tariff(rng.uniform(0.0, 5.0, size=T), float(rng.uniform(0.0, 20.0)))
    return Scenario(TimeGrid(T, 1.0), tariff, tuple(grids))
