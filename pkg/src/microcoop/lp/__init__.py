from .formulation import (
    build_coalition_lp,
    build_individual_lp,
    epigraph_gap,
    extract_schedule,
    solve_coalition,
    solve_individual,
)
from .oracle import brute_force_cost, oracle_tolerance
from .simplex import (
    EQ,
    GE,
    INFEASIBLE,
    LE,
    OPTIMAL,
    UNBOUNDED,
    LPBuilder,
    LPProblem,
    LPSolution,
    solve_lp,
)
