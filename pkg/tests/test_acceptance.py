"""Exit criteria A1-A9, each at its stated tolerance and time limit.

Every criterion records one PASS/FAIL line, printed in the terminal summary
(and immediately when run with ``-s``).
"""
import time
from itertools import combinations

import numpy as np
import pytest

import microcoop.game as game_module
from conftest import F1_DEMANDS, F2_VALUES, SCENARIOS, highs_coalition_cost
from microcoop.game import (
    GameTable,
    build_game_table,
    check_subadditivity,
    check_submodularity,
    fair_core_allocation,
    is_in_core,
    members,
    shapley,
    shapley_values,
)
from microcoop.io import load_scenario
from microcoop.lp import brute_force_cost, oracle_tolerance, solve_coalition
from microcoop.model import Microgrid, Scenario, Tariff, TimeGrid, evaluate_cost
from microcoop.synth import grid_aligned_scenario, random_scenario

pytestmark = pytest.mark.acceptance

RESULTS = {}
RANDOM_COUNT = 200
RANDOM_SEED = 20240611
TOU_SEED = 20240612
ORACLE_SEED = 20240613

# (scenario, coalition members, schedule) for every scheduling LP solved here
SOLVED = []


def record(tag, ok, detail):
    line = f"{tag} {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[tag] = line
    print(line)
    return ok


@pytest.fixture(autouse=True, scope="module")
def _record_solves():
    original = game_module.solve_coalition

    def recording(coalition, scenario):
        schedule = original(coalition, scenario)
        SOLVED.append((scenario, tuple(coalition), schedule))
        return schedule

    game_module.solve_coalition = recording
    yield
    game_module.solve_coalition = original


@pytest.fixture(scope="module")
def random_family(_record_solves):
    rng = np.random.default_rng(RANDOM_SEED)
    start = time.perf_counter()
    scenarios = [random_scenario(rng) for _ in range(RANDOM_COUNT)]
    tables = [build_game_table(s) for s in scenarios]
    return scenarios, tables, time.perf_counter() - start


def f1_scenario():
    grids = tuple(Microgrid(str(i + 1), d) for i, d in enumerate(F1_DEMANDS))
    return Scenario(TimeGrid(2), Tariff([0.0, 0.0], 1.0), grids)


def test_a1_f1_counterexample():
    start = time.perf_counter()
    table = build_game_table(f1_scenario())
    violations = check_submodularity(table)
    elapsed = time.perf_counter() - start
    expected = {0b001: 2.0, 0b011: 3.0, 0b101: 3.0, 0b111: 5.0}
    values_ok = all(abs(table.value(m) - v) <= 1e-9 for m, v in expected.items())
    hit = [v for v in violations if (v.smaller, v.larger, v.player) == (0b001, 0b011, 2)]
    margins_ok = bool(hit) and abs(hit[0].gain_smaller - 1) <= 1e-9 and abs(hit[0].gain_larger - 2) <= 1e-9
    ok = values_ok and margins_ok and elapsed < 1.0
    record("A1", ok, f"v(1),v(12),v(13),v(123)={[table.value(m) for m in expected]}, "
                     f"S={{1}} T={{1,2}} i=3 margins 1 vs 2: {margins_ok}, {elapsed:.3f}s")
    assert ok


def test_a2_f2_table():
    start = time.perf_counter()
    table = GameTable(3, F2_VALUES)
    sh = shapley(table)
    fair = fair_core_allocation(table)
    elapsed = time.perf_counter() - start
    psi = sh.costs
    checks = {
        "psi1+psi3": abs(psi[0] + psi[2] - 45873) <= 1,
        "shapley vector": np.all(np.abs(psi - [24994.33, 20300.83, 20878.83]) <= 0.5),
        "only {1,3} flagged": [v.coalition for v in sh.core_status.violations] == [0b101],
        "fair vector": np.all(np.abs(fair.costs - [24881, 20323, 20970]) <= 2),
        "fair in core": fair.core_status.in_core and len(fair.core_status.violations) == 0,
        "{1,3} tight": abs(fair.costs[0] + fair.costs[2] - 45851) <= 1e-6,
        "grand tight": abs(fair.costs.sum() - 66174) <= 1e-6,
        "delta": abs(fair.fairness.delta - 0.02138) <= 0.001,
        "time": elapsed < 1.0,
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    record("A2", ok, f"shapley={np.round(psi, 2).tolist()} fair={np.round(fair.costs, 3).tolist()} "
                     f"delta={fair.fairness.delta:.5f} {elapsed:.3f}s" + (f" failed: {failed}" if failed else ""))
    assert ok


def test_a3_cooperation_never_costs_more(random_family):
    scenarios, tables, elapsed = random_family
    worst = max(t.value(t.grand) - sum(t.value(1 << n) for n in range(t.user_count)) for t in tables)
    ok = worst <= 1e-6 and elapsed < 60.0
    record("A3", ok, f"{len(tables)} scenarios, max f_coop - f_noncoop = {worst:.3e}, {elapsed:.2f}s")
    assert ok


def test_a4_subadditivity(random_family):
    _, tables, _ = random_family
    bad = sum(1 for t in tables if check_subadditivity(t))
    record("A4", bad == 0, f"{bad} of {len(tables)} tables with sub-additivity violations")
    assert bad == 0


def test_a5_core_nonempty(random_family):
    _, tables, _ = random_family
    failures = 0
    for t in tables:
        try:
            alloc = fair_core_allocation(t)
            if not is_in_core(alloc.costs, t).in_core:
                failures += 1
        except Exception:
            failures += 1
    record("A5", failures == 0, f"{failures} of {len(tables)} fairness allocations failed or left the core")
    assert failures == 0


def _oracle_gap(scenario, group, steps):
    lp = solve_coalition(group, scenario)
    SOLVED.append((scenario, tuple(group), lp))
    return abs(lp.cost - brute_force_cost(group, scenario, steps))


def test_a6_oracle_equivalence():
    rng = np.random.default_rng(ORACLE_SEED)
    worst_ratio = 0.0
    outside = 0
    for _ in range(50):
        sc = grid_aligned_scenario(rng, users=int(rng.integers(1, 3)), intervals=int(rng.integers(2, 5)))
        for size in range(1, sc.user_count + 1):
            for group in combinations(range(sc.user_count), size):
                gap = _oracle_gap(sc, group, 11)
                tol = oracle_tolerance(group, sc, 11)
                outside += gap > tol + 1e-9
                worst_ratio = max(worst_ratio, gap / tol if tol > 0 else 0.0)
    # 6 -> 11 -> 21 points: each refinement halves the spacing and keeps the coarser grid
    fixed = np.random.default_rng(ORACLE_SEED + 1)
    fixed_instances = [grid_aligned_scenario(fixed, users=1 + k % 2, intervals=3) for k in range(10)]
    means = []
    for steps in (6, 11, 21):
        means.append(float(np.mean([_oracle_gap(sc, range(sc.user_count), steps)
                                    for sc in fixed_instances])))
    shrinking = means[0] >= means[1] >= means[2]
    ok = outside == 0 and shrinking
    record("A6", ok, f"{outside} gaps beyond eps (worst gap/eps {worst_ratio:.3f}); "
                     f"mean gap at 6/11/21 points {[round(m, 4) for m in means]}")
    assert ok


def test_a7_tou_only_submodularity():
    rng = np.random.default_rng(TOU_SEED)
    counterexamples = []
    for k in range(RANDOM_COUNT):
        sc = random_scenario(rng, demand_charge=0.0)
        found = check_submodularity(build_game_table(sc))
        if found:
            counterexamples.append((k, sc, found))
    fixture = load_scenario(SCENARIOS / "tou_only_counterexample.json")
    fixture_table = build_game_table(fixture)
    confirmed = all(abs(fixture_table.value(m) - highs_coalition_cost(fixture, members(m))) <= 1e-6
                    for m in range(1, fixture_table.grand + 1))
    fixture_violates = bool(check_submodularity(fixture_table))
    ok = not counterexamples
    detail = f"{len(counterexamples)} of {RANDOM_COUNT} zero-demand-charge games not submodular"
    if counterexamples:
        k, _, found = counterexamples[0]
        v = max(found, key=lambda v: v.gain_larger - v.gain_smaller)
        detail += (f"; first at draw {k}, worst margin {v.gain_smaller:.4f} vs {v.gain_larger:.4f}; "
                   f"preserved fixture violates: {fixture_violates}, values confirmed by HiGHS: {confirmed}")
    record("A7", ok, detail)
    # the fixture must be a genuine counterexample, not a solver artifact
    assert fixture_violates and confirmed
    if counterexamples:
        pytest.xfail("ToU-only games are not submodular once grid draw is kept nonnegative; "
                     "see scenarios/tou_only_counterexample.json")


def test_a8_epigraph_consistency(random_family):
    if len(SOLVED) < 100:
        # running this criterion alone: solve the A1, A3 and A6 workloads here
        build_game_table(f1_scenario())
        test_a6_oracle_equivalence()
    worst_rel = 0.0
    broken = []
    for scenario, group, schedule in SOLVED:
        billed = evaluate_cost(schedule.grid_draw, scenario.tariff)
        worst_rel = max(worst_rel, abs(billed - schedule.cost) / max(1.0, abs(billed)))
        problems = schedule.violations(scenario)
        if problems:
            broken.append((group, problems))
    ok = worst_rel <= 1e-6 and not broken
    record("A8", ok, f"{len(SOLVED)} schedules, worst |objective - bill| rel {worst_rel:.2e}, "
                     f"{len(broken)} breaking an invariant" + (f" first: {broken[0]}" if broken else ""))
    assert ok


def _symmetric_table():
    # users 1 and 2 interchangeable, user 4 a dummy that never changes any cost
    values = {}
    for m in range(1, 16):
        pair = bin(m & 0b0011).count("1")
        third = bool(m & 0b0100)
        values[m] = (0.0, 4.0, 7.0)[pair] + (6.0 if third else 0.0) - (1.5 if pair and third else 0.0)
    return GameTable(4, values)


def test_a9_shapley_axioms():
    rng = np.random.default_rng(9)
    additive_err = 0.0
    for N in (2, 3, 5, 8):
        singles = rng.uniform(0, 100, N)
        table = GameTable(N, {m: float(sum(singles[i] for i in members(m))) for m in range(1, 1 << N)})
        psi = shapley_values(table)
        additive_err = max(additive_err, float(np.max(np.abs(psi - singles) / np.maximum(1, singles))))
    psi = shapley_values(_symmetric_table())
    symmetric_gap = abs(psi[0] - psi[1])
    dummy = abs(psi[3])
    ok = additive_err <= 1e-12 and symmetric_gap <= 1e-9 and dummy <= 1e-6
    record("A9", ok, f"additive max rel error {additive_err:.1e}, symmetric gap {symmetric_gap:.1e}, "
                     f"dummy share {dummy:.1e}")
    assert ok
