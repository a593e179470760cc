"""Cooperative battery scheduling for microgrids under ToU and demand-charge
tariffs, with stable cost allocation over the resulting coalition game."""

from .game import (
    Allocation,
    CoreStatus,
    Fairness,
    GameTable,
    allocate,
    allocate_table,
    build_game_table,
    check_subadditivity,
    check_submodularity,
    fair_core_allocation,
    is_in_core,
    shapley,
)
from .io import Report, load_game_table, load_scenario, write_report
from .lp import brute_force_cost, build_coalition_lp, build_individual_lp, solve_lp
from .model import Microgrid, Scenario, Schedule, StorageSpec, Tariff, TimeGrid, evaluate_cost

__version__ = "0.1.0"
