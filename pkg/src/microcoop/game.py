"""Coalition cost games built from the joint scheduling LP, and their allocations.

Coalitions are bitmasks over user positions: bit ``i`` set means user ``i``
takes part. ``v(empty) = 0`` throughout.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from math import factorial
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import EmptyCoreError, MissingCoalitionError, SizeError, ValidationError
from .lp.formulation import solve_coalition
from .lp.simplex import EQ, GE, LE, LPBuilder, solve_lp
from .model import Scenario

MAX_USERS = 20
DEFAULT_SKIP_SHAPLEY_ABOVE = 12
DEGENERATE_COST = 1e-9
DEGENERATE_REL = 1e-6
CHECK_TOL = 1e-6
GENERATION_TOL = 1e-9
GENERATION_BATCH = 8

SHAPLEY, FAIR_LP = "shapley", "fair_lp"


def members(mask: int) -> list[int]:
    return [i for i in range(mask.bit_length()) if mask >> i & 1]


def mask_of(users) -> int:
    mask = 0
    for i in users:
        mask |= 1 << int(i)
    return mask


@dataclass(frozen=True)
class GameTable:
    user_count: int
    values: dict
    labels: tuple = ()

    def __post_init__(self):
        N = int(self.user_count)
        if N < 1:
            raise ValidationError("a game needs at least one user")
        if N > MAX_USERS:
            raise SizeError(f"{N} users exceeds the exhaustive-enumeration cap of {MAX_USERS}")
        labels = tuple(self.labels) or tuple(str(i + 1) for i in range(N))
        if len(labels) != N:
            raise ValidationError("one label per user required")
        values = {int(k): float(v) for k, v in self.values.items()}
        full = (1 << N) - 1
        stray = [k for k in values if k <= 0 or k > full]
        if stray:
            raise ValidationError(f"coalition masks {stray} outside 1..{full}")
        object.__setattr__(self, "user_count", N)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "values", values)

    @property
    def grand(self) -> int:
        return (1 << self.user_count) - 1

    def is_complete(self) -> bool:
        return len(self.values) == self.grand

    def require_complete(self):
        missing = [m for m in range(1, self.grand + 1) if m not in self.values]
        if missing:
            raise MissingCoalitionError(
                f"game table lacks {len(missing)} coalition(s), first {self.name(missing[0])}")

    def value(self, mask: int) -> float:
        if mask == 0:
            return 0.0
        try:
            return self.values[mask]
        except KeyError:
            raise MissingCoalitionError(f"no value for coalition {self.name(mask)}") from None

    def name(self, mask: int) -> str:
        return "{" + ",".join(self.labels[i] for i in members(mask)) + "}"

    def dense(self) -> np.ndarray:
        """Values indexed by mask, entry 0 holding v(empty) = 0."""
        self.require_complete()
        v = np.zeros(self.grand + 1)
        for k, val in self.values.items():
            v[k] = val
        return v

    def scaled(self, k: float) -> "GameTable":
        return GameTable(self.user_count, {m: k * v for m, v in self.values.items()}, self.labels)

    def permuted(self, order: Sequence[int]) -> "GameTable":
        """Table where new user ``j`` is old user ``order[j]``."""
        def remap(mask):
            return mask_of(j for j, old in enumerate(order) if mask >> old & 1)
        return GameTable(self.user_count, {remap(m): v for m, v in self.values.items()},
                         tuple(self.labels[o] for o in order))


class CoreViolation(NamedTuple):
    coalition: int
    allocated: float
    value: float
    excess: float


@dataclass(frozen=True)
class CoreStatus:
    in_core: bool
    violations: tuple = ()

    def __str__(self):
        return "in_core" if self.in_core else "violated"


@dataclass(frozen=True)
class Fairness:
    lambda_min: float
    lambda_max: float
    delta: float


@dataclass(frozen=True)
class Allocation:
    costs: np.ndarray
    method: str
    core_status: CoreStatus
    fairness: Optional[Fairness] = None

    def savings(self, table: GameTable) -> np.ndarray:
        singles = np.array([table.value(1 << n) for n in range(table.user_count)])
        return singles - self.costs


def _solve_one(args):
    mask, scenario = args
    return mask, solve_coalition(members(mask), scenario).cost


def build_game_table(scenario: Scenario, workers: Optional[int] = None) -> GameTable:
    """Optimal joint scheduling cost of every nonempty coalition.

    ``workers > 1`` spreads the coalition solves over a process pool.
    """
    N = scenario.user_count
    if N > MAX_USERS:
        raise SizeError(f"{N} users exceeds the exhaustive-enumeration cap of {MAX_USERS}")
    jobs = [(mask, scenario) for mask in range(1, 1 << N)]
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_solve_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_solve_one(job) for job in jobs]
    return GameTable(N, dict(results), tuple(scenario.ids))


def check_subadditivity(table: GameTable) -> list[tuple[int, int, float]]:
    """Disjoint pairs (S, T), S < T, with v(S u T) > v(S) + v(T) beyond tolerance."""
    table.require_complete()
    v = table.dense()
    out = []
    for S in range(1, table.grand + 1):
        rest = table.grand & ~S
        T = rest
        while T:
            if T > S:
                bound = v[S] + v[T]
                excess = v[S | T] - bound
                if excess > CHECK_TOL * max(abs(bound), 1e-3):
                    out.append((S, T, float(excess)))
            T = (T - 1) & rest
    return sorted(out)


class SubmodularityViolation(NamedTuple):
    smaller: int
    larger: int
    player: int
    gain_smaller: float
    gain_larger: float


def check_submodularity(table: GameTable) -> list[SubmodularityViolation]:
    """Every S within T within N minus {i} where joining S gains less than joining T."""
    table.require_complete()
    v = table.dense()
    out = []
    for i in range(table.user_count):
        bit = 1 << i
        others = table.grand & ~bit
        T = others
        while True:
            gain_T = v[T | bit] - v[T]
            S = T
            while True:
                if S != T:
                    gain_S = v[S | bit] - v[S]
                    scale = max(1.0, abs(v[T | bit]), abs(v[S | bit]))
                    if gain_S < gain_T - CHECK_TOL * scale:
                        out.append(SubmodularityViolation(S, T, i, float(gain_S), float(gain_T)))
                if S == 0:
                    break
                S = (S - 1) & T
            if T == 0:
                break
            T = (T - 1) & others
    return sorted(out)


def shapley_values(table: GameTable) -> np.ndarray:
    """Weighted average marginal cost of each user over all coalitions of the others."""
    N = table.user_count
    v = table.dense()
    masks = np.arange(1 << N)
    sizes = np.array([bin(m).count("1") for m in range(1 << N)])
    weights = np.array([factorial(s) * factorial(N - s - 1) / factorial(N) if s < N else 0.0
                        for s in range(N + 1)])
    psi = np.empty(N)
    for n in range(N):
        bit = 1 << n
        without = masks[(masks & bit) == 0]
        psi[n] = np.sum(weights[sizes[without]] * (v[without | bit] - v[without]))
    return psi


def shapley(table: GameTable) -> Allocation:
    psi = shapley_values(table)
    return Allocation(psi, SHAPLEY, is_in_core(psi, table))


def core_records(costs, table: GameTable) -> list[dict]:
    """One record per core inequality: proper coalitions by size then mask, grand last."""
    psi = np.asarray(costs, dtype=float)
    grand = table.grand
    order = sorted(range(1, grand), key=lambda m: (bin(m).count("1"), members(m)))
    records = []
    for mask in order + [grand]:
        lhs = float(sum(psi[i] for i in members(mask)))
        rhs = table.value(mask)
        if mask == grand:
            ok = abs(lhs - rhs) <= CHECK_TOL * max(1.0, abs(rhs))
            relation = "="
        else:
            ok = lhs <= rhs + CHECK_TOL * max(1.0, abs(rhs))
            relation = "<="
        records.append({"coalition": mask, "allocated": lhs, "value": rhs,
                        "relation": relation, "satisfied": bool(ok)})
    return records


def is_in_core(costs, table: GameTable) -> CoreStatus:
    psi = np.asarray(costs, dtype=float).reshape(-1)
    if psi.size != table.user_count:
        raise ValidationError(f"allocation has {psi.size} entries for {table.user_count} users")
    table.require_complete()
    bad = tuple(
        CoreViolation(r["coalition"], r["allocated"], r["value"], r["allocated"] - r["value"])
        for r in core_records(psi, table) if not r["satisfied"]
    )
    return CoreStatus(not bad, bad)


def _rated(table: GameTable) -> list[int]:
    """Users whose savings rate is meaningful: stand-alone cost above an
    absolute floor and above a tiny fraction of the largest stand-alone cost."""
    singles = [table.value(1 << n) for n in range(table.user_count)]
    floor = max(DEGENERATE_COST, DEGENERATE_REL * max(abs(v) for v in singles))
    return [n for n, v in enumerate(singles) if v > floor]


def _fairness(psi, table) -> Fairness:
    rates = [(table.value(1 << n) - psi[n]) / table.value(1 << n) for n in _rated(table)]
    if not rates:
        return Fairness(0.0, 0.0, 0.0)
    lo, hi = float(min(rates)), float(max(rates))
    return Fairness(lo, hi, hi - lo)


def _subset_sums(psi: np.ndarray) -> np.ndarray:
    """Allocated cost of every coalition, indexed by mask."""
    sums = np.zeros(1)
    for value in psi:
        sums = np.concatenate([sums, sums + value])
    return sums


def _solve_generated(lp_rows, build, dense, psi_of):
    """Solve with a growing set of coalition rows until no core row is violated.

    ``build(rows)`` returns an LPProblem holding only the coalition rows in
    ``rows``; the first optimum that satisfies every coalition of the full
    game is optimal for the full LP as well.
    """
    tol = GENERATION_TOL * np.maximum(1.0, np.abs(dense))
    while True:
        problem = build(lp_rows)
        solution = solve_lp(problem)
        if not solution.optimal:
            return problem, solution
        excess = _subset_sums(psi_of(solution)) - dense - tol
        excess[0] = excess[-1] = -np.inf
        worst = np.argsort(excess)[::-1][:GENERATION_BATCH]
        worst = [int(m) for m in worst if excess[m] > 0 and int(m) not in lp_rows]
        if not worst:
            return problem, solution
        lp_rows.update(worst)


def fair_core_allocation(table: GameTable) -> Allocation:
    """Core allocation minimizing the spread of percentage savings.

    Stage 1 minimizes max rate minus min rate over the core. Stage 2 keeps
    that spread and minimizes the largest rate, which makes ties deterministic.
    Users whose stand-alone cost is negligible (see ``_rated``) get
    0 <= psi_n <= v({n}) in place of the rate constraints.

    Coalition rows are generated lazily: the LP starts from the grand
    coalition and the singletons and adds the most violated coalitions
    until the allocation lies in the full core.
    """
    dense = table.dense()
    N = table.user_count
    grand = table.grand
    rated = _rated(table)

    def build(coalitions, spread=None):
        lp = LPBuilder()
        psi = []
        for n in range(N):
            single = table.value(1 << n)
            if n in rated:
                psi.append(lp.add_var(("psi", n)))
            else:
                psi.append(lp.add_var(("psi", n), 0.0, max(single, 0.0)))
        if rated:
            lam_min = lp.add_var("lambda_min", cost=-1.0 if spread is None else 0.0)
            lam_max = lp.add_var("lambda_max", cost=1.0)
        else:
            lam_min = lp.add_var("lambda_min", 0.0, 0.0)
            lam_max = lp.add_var("lambda_max", 0.0, 0.0)
        lp.add_row({psi[n]: 1.0 for n in range(N)}, EQ, table.value(grand))
        for mask in sorted(coalitions):
            lp.add_row({psi[n]: 1.0 for n in members(mask)}, LE, table.value(mask))
        for n in rated:
            single = table.value(1 << n)
            # lambda_min <= (v_n - psi_n) / v_n <= lambda_max, multiplied through by v_n
            lp.add_row({psi[n]: 1.0, lam_min: single}, LE, single)
            lp.add_row({psi[n]: 1.0, lam_max: single}, GE, single)
        lp.add_row({lam_max: 1.0, lam_min: -1.0}, GE, 0.0)
        if spread is not None:
            lp.add_row({lam_max: 1.0, lam_min: -1.0}, LE, spread + 1e-9 * max(1.0, abs(spread)))
        return lp.build()

    def psi_of(solution):
        return solution.variable_values[:N]

    coalitions = {1 << n for n in range(N)} - {grand}
    _, first = _solve_generated(coalitions, build, dense, psi_of)
    if not first.optimal:
        raise EmptyCoreError(f"core of the game is empty (fairness LP {first.status})")
    solution = first
    if rated:
        spread = first.objective_value
        _, second = _solve_generated(coalitions, lambda rows: build(rows, spread), dense, psi_of)
        if second.optimal:
            solution = second
    costs = np.array(psi_of(solution))
    return Allocation(costs, FAIR_LP, is_in_core(costs, table), _fairness(costs, table))


def allocate_table(table: GameTable, skip_shapley_above: int = DEFAULT_SKIP_SHAPLEY_ABOVE,
                   method: str = "auto") -> Allocation:
    """Shapley when it lies in the core, otherwise the fairness LP.

    ``method`` forces a branch: ``"shapley"`` or ``"fair_lp"``. With
    ``"auto"``, Shapley is skipped entirely for more than
    ``skip_shapley_above`` users.
    """
    method = method.replace("-", "_")
    if method == SHAPLEY:
        return shapley(table)
    if method == FAIR_LP:
        return fair_core_allocation(table)
    if method != "auto":
        raise ValidationError(f"unknown allocation method {method!r}")
    if table.user_count <= skip_shapley_above:
        candidate = shapley(table)
        if candidate.core_status.in_core:
            return candidate
    return fair_core_allocation(table)


def allocate(scenario: Scenario, skip_shapley_above: int = DEFAULT_SKIP_SHAPLEY_ABOVE,
             method: str = "auto", workers: Optional[int] = None):
    table = build_game_table(scenario, workers=workers)
    return table, allocate_table(table, skip_shapley_above, method)
