"""Scenario files, game-table files, reports and plot-data files.

Formats are documented in ``docs/scenario.md`` and ``docs/report.md``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .errors import MicrocoopError, ScenarioParseError, ValidationError
from .game import CHECK_TOL, Allocation, GameTable, core_records, mask_of, members
from .model import Microgrid, Scenario, Schedule, StorageSpec, Tariff, TimeGrid

FLOAT_FMT = "{:.6f}"


# ----------------------------------------------------------------- reading

def _read_document(path: Path):
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioParseError(f"{path}: cannot read file ({exc.strerror})") from exc
    if path.suffix.lower() in (".yaml", ".yml"):
        try:
            return yaml.safe_load(text)
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark
            raise ScenarioParseError(
                f"{path}:{mark.line + 1}:{mark.column + 1}: {exc.problem}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _field(doc, key, where, kind=None):
    if not isinstance(doc, dict) or key not in doc:
        raise ValidationError(f"{where}: missing field {key!r}")
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise ValidationError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}")
    return value


def _numbers(values, where):
    if not isinstance(values, list):
        raise ValidationError(f"{where}: expected a list of numbers")
    try:
        return [float(v) for v in values]
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: expected a list of numbers") from None


def expand_blocks(blocks, T: int) -> list[float]:
    """Per-interval prices from 1-based inclusive blocks.

    A block with ``from_interval > to_interval`` wraps past interval T, which
    is how overnight periods such as 9pm-9am are written.
    """
    prices = [None] * T
    for k, block in enumerate(blocks):
        where = f"tariff.blocks[{k}]"
        start = int(_field(block, "from_interval", where))
        stop = int(_field(block, "to_interval", where))
        price = float(_field(block, "price", where))
        if not (1 <= start <= T and 1 <= stop <= T):
            raise ValidationError(f"{where}: interval range {start}..{stop} outside 1..{T}")
        span = range(start, stop + 1) if start <= stop else [*range(start, T + 1), *range(1, stop + 1)]
        for t in span:
            if prices[t - 1] is not None:
                raise ValidationError(f"{where}: interval {t} covered by more than one block")
            prices[t - 1] = price
    gaps = [t + 1 for t, p in enumerate(prices) if p is None]
    if gaps:
        raise ValidationError(f"tariff.blocks: intervals {gaps} not covered by any block")
    return prices


def read_demand_csv(path: Path) -> dict[str, list[float]]:
    """Columns of a demand CSV keyed by header, rows ordered by interval."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ScenarioParseError(f"{path}: cannot read demand file ({exc.strerror})") from exc
    if not rows or not rows[0] or rows[0][0].strip() != "interval":
        raise ScenarioParseError(f"{path}:1: header must start with 'interval'")
    header = [h.strip() for h in rows[0]]
    body = []
    for line, row in enumerate(rows[1:], start=2):
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ScenarioParseError(f"{path}:{line}: expected {len(header)} cells, got {len(row)}")
        try:
            body.append([float(cell) for cell in row])
        except ValueError:
            raise ScenarioParseError(f"{path}:{line}: non-numeric cell") from None
    body.sort(key=lambda r: r[0])
    intervals = [r[0] for r in body]
    if intervals != [float(t) for t in range(1, len(body) + 1)]:
        raise ScenarioParseError(f"{path}: intervals must run 1..{len(body)} without gaps")
    return {name: [r[j] for r in body] for j, name in enumerate(header) if j > 0}


def scenario_from_document(doc, base_dir: Path = Path(".")) -> Scenario:
    if not isinstance(doc, dict):
        raise ValidationError("scenario document must be a mapping")
    grid_doc = _field(doc, "time_grid", "scenario", dict)
    try:
        grid = TimeGrid(int(_field(grid_doc, "interval_count", "time_grid")),
                        float(grid_doc.get("interval_length_hours", 1.0)))
    except ValidationError as exc:
        raise ValidationError(f"time_grid: {exc}") from None
    T = grid.interval_count

    tariff_doc = _field(doc, "tariff", "scenario", dict)
    if "tou_prices" in tariff_doc and "blocks" in tariff_doc:
        raise ValidationError("tariff: give either tou_prices or blocks, not both")
    if "blocks" in tariff_doc:
        prices = expand_blocks(_field(tariff_doc, "blocks", "tariff", list), T)
    else:
        prices = _numbers(_field(tariff_doc, "tou_prices", "tariff"), "tariff.tou_prices")
    if len(prices) != T:
        raise ValidationError(f"tariff.tou_prices: length {len(prices)} differs from interval_count {T}")
    try:
        tariff = Tariff(prices, float(_field(tariff_doc, "demand_charge", "tariff")))
    except ValidationError as exc:
        raise ValidationError(f"tariff: {exc}") from None

    csv_cache = {}
    grids = []
    for k, mg_doc in enumerate(_field(doc, "microgrids", "scenario", list)):
        where = f"microgrids[{k}]"
        uid = str(_field(mg_doc, "id", where))
        if "demand" in mg_doc:
            demand = _numbers(mg_doc["demand"], f"{where}.demand")
        elif "demand_csv" in mg_doc:
            csv_path = base_dir / str(mg_doc["demand_csv"])
            if csv_path not in csv_cache:
                csv_cache[csv_path] = read_demand_csv(csv_path)
            column = str(mg_doc.get("demand_column", uid))
            if column not in csv_cache[csv_path]:
                raise ValidationError(f"{where}: column {column!r} not found in {csv_path}")
            demand = csv_cache[csv_path][column]
        else:
            raise ValidationError(f"{where}: needs 'demand' or 'demand_csv'")
        if len(demand) != T:
            raise ValidationError(f"{where}.demand: length {len(demand)} differs from interval_count {T}")
        storage = None
        if mg_doc.get("storage") is not None:
            sd = mg_doc["storage"]
            try:
                storage = StorageSpec(
                    float(_field(sd, "capacity_min", f"{where}.storage")),
                    float(_field(sd, "capacity_max", f"{where}.storage")),
                    float(_field(sd, "dispatch_min", f"{where}.storage")),
                    float(_field(sd, "dispatch_max", f"{where}.storage")),
                    None if sd.get("initial_charge") is None else float(sd["initial_charge"]),
                )
            except ValidationError as exc:
                raise ValidationError(f"{where}.storage: {exc}") from None
        try:
            grids.append(Microgrid(uid, demand, storage))
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from None
    return Scenario(grid, tariff, tuple(grids))


def load_scenario(path) -> Scenario:
    path = Path(path)
    return scenario_from_document(_read_document(path), path.parent)


def scenario_document(scenario: Scenario) -> dict:
    mgs = []
    for mg in scenario.microgrids:
        entry = {"id": mg.id, "demand": [float(d) for d in mg.demand]}
        if mg.storage is not None:
            s = mg.storage
            entry["storage"] = {
                "capacity_min": s.capacity_min, "capacity_max": s.capacity_max,
                "dispatch_min": s.dispatch_min, "dispatch_max": s.dispatch_max,
            }
            if s.initial_charge is not None:
                entry["storage"]["initial_charge"] = s.initial_charge
        mgs.append(entry)
    return {
        "time_grid": {"interval_count": scenario.time_grid.interval_count,
                      "interval_length_hours": scenario.time_grid.interval_length},
        "tariff": {"tou_prices": [float(p) for p in scenario.tariff.tou_prices],
                   "demand_charge": scenario.tariff.demand_charge},
        "microgrids": mgs,
    }


def dump_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_document(scenario), indent=2) + "\n")


def scenario_digest(scenario: Scenario) -> dict:
    canonical = json.dumps(scenario_document(scenario), sort_keys=True, separators=(",", ":"))
    return {
        "sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "users": scenario.ids,
        "interval_count": scenario.time_grid.interval_count,
        "interval_length_hours": scenario.time_grid.interval_length,
        "demand_charge": scenario.tariff.demand_charge,
    }


# -------------------------------------------------------------- game tables

def _coalition_key(mask, labels):
    return ",".join(labels[i] for i in members(mask))


def load_game_table(path) -> GameTable:
    """Read ``{"users": [...], "values": {"1,3": 45851, ...}}``."""
    path = Path(path)
    doc = _read_document(path)
    if isinstance(doc, dict) and "game_table" in doc and "users" not in doc:
        doc = _table_from_report(doc)
    users = [str(u) for u in _field(doc, "users", "game table", list)]
    if len(set(users)) != len(users):
        raise ValidationError("game table: duplicate user labels")
    position = {u: i for i, u in enumerate(users)}
    values = {}
    for key, value in _field(doc, "values", "game table", dict).items():
        names = [part.strip() for part in str(key).split(",")]
        unknown = [n for n in names if n not in position]
        if unknown:
            raise ValidationError(f"game table: coalition {key!r} names unknown users {unknown}")
        mask = mask_of(position[n] for n in names)
        if mask in values:
            raise ValidationError(f"game table: coalition {key!r} listed twice")
        try:
            values[mask] = float(value)
        except (TypeError, ValueError):
            raise ValidationError(f"game table: value of {key!r} is not a number") from None
    table = GameTable(len(users), values, tuple(users))
    table.require_complete()
    return table


def _table_from_report(doc):
    rows = _field(doc, "game_table", "report", list)
    users = sorted({u for row in rows for u in row["coalition"]},
                   key=lambda u: next(i for i, row in enumerate(rows) if row["coalition"] == [u]))
    return {"users": users, "values": {",".join(row["coalition"]): row["value"] for row in rows}}


def game_table_document(table: GameTable) -> dict:
    order = sorted(table.values, key=lambda m: (bin(m).count("1"), members(m)))
    return {"users": list(table.labels),
            "values": {_coalition_key(m, table.labels): table.values[m] for m in order}}


def dump_game_table(table: GameTable, path) -> None:
    Path(path).write_text(json.dumps(game_table_document(table), indent=2) + "\n")


# ------------------------------------------------------------------ reports

@dataclass
class Report:
    command: str
    scenario: Optional[dict] = None
    individual_costs: Optional[dict] = None
    individual_schedules: Optional[dict] = field(default=None, repr=False)
    coalition: Optional[Schedule] = None
    game_table: Optional[GameTable] = None
    allocation: Optional[Allocation] = None
    audit: Optional[dict] = None

    @property
    def f_non_coop(self) -> Optional[float]:
        if self.individual_costs is None:
            return None
        return float(sum(self.individual_costs.values()))


def _labels(report: Report):
    if report.game_table is not None:
        return list(report.game_table.labels)
    if report.scenario is not None:
        return list(report.scenario["users"])
    return list(report.individual_costs or [])


def report_document(report: Report) -> dict:
    doc = {"command": report.command}
    if report.scenario is not None:
        doc["scenario"] = report.scenario
    if report.individual_costs is not None:
        doc["individual"] = {"costs": dict(report.individual_costs),
                             "f_non_coop": report.f_non_coop}
    if report.coalition is not None:
        sched = report.coalition
        doc["coalition"] = {
            "members": list(sched.members),
            "cost": sched.cost,
            "grid_draw": [float(v) for v in sched.grid_draw],
            "dispatch": {k: [float(v) for v in e] for k, e in sched.dispatch.items()},
            "charge": {k: [float(v) for v in c] for k, c in sched.charge_trajectory.items()},
        }
    table = report.game_table
    if table is not None:
        order = sorted(table.values, key=lambda m: (bin(m).count("1"), members(m)))
        doc["game_table"] = [{"coalition": [table.labels[i] for i in members(m)],
                              "value": table.values[m]} for m in order]
    if report.allocation is not None and table is not None:
        alloc = report.allocation
        labels = table.labels
        saved = alloc.savings(table)
        entry = {
            "method": alloc.method,
            "costs": {labels[n]: float(alloc.costs[n]) for n in range(table.user_count)},
            "savings": {
                labels[n]: {
                    "absolute": float(saved[n]),
                    "percent": (100.0 * float(saved[n]) / table.value(1 << n)
                                if table.value(1 << n) > 0 else 0.0),
                }
                for n in range(table.user_count)
            },
            "core_status": str(alloc.core_status),
        }
        if alloc.fairness is not None:
            entry["fairness"] = {"lambda_min": alloc.fairness.lambda_min,
                                 "lambda_max": alloc.fairness.lambda_max,
                                 "delta": alloc.fairness.delta}
        if alloc.core_status.violations:
            entry["violations"] = [
                {"coalition": [labels[i] for i in members(v.coalition)], "excess": v.excess}
                for v in alloc.core_status.violations
            ]
        doc["allocation"] = entry
        doc["core_check"] = [
            {"coalition": [labels[i] for i in members(r["coalition"])],
             "allocated": r["allocated"], "relation": r["relation"],
             "value": r["value"], "satisfied": r["satisfied"]}
            for r in core_records(alloc.costs, table)
        ]
    if report.audit is not None:
        doc["audit"] = report.audit
    return doc


def _emit(obj, indent=0) -> str:
    pad = "  " * (indent + 1)
    close = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_emit(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + close + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, str)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_emit(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _emit(v, indent + 1) for v in obj) + "\n" + close + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            return json.dumps(str(float(obj)))
        text = FLOAT_FMT.format(float(obj))
        return "0.000000" if text == "-0.000000" else text
    return json.dumps(str(obj))


def _fmt(x) -> str:
    text = FLOAT_FMT.format(float(x))
    return "0.000000" if text == "-0.000000" else text


def render_text(doc: dict) -> str:
    lines = [f"command: {doc['command']}"]
    if "scenario" in doc:
        sc = doc["scenario"]
        lines.append(f"scenario: {len(sc['users'])} users, {sc['interval_count']} intervals, "
                     f"sha256 {sc['sha256'][:16]}")
    if "individual" in doc:
        lines.append("")
        lines.append("individual optimal costs")
        for uid, cost in doc["individual"]["costs"].items():
            lines.append(f"  {uid:<12} {_fmt(cost)}")
        lines.append(f"  {'f_non_coop':<12} {_fmt(doc['individual']['f_non_coop'])}")
    if "coalition" in doc:
        lines.append("")
        lines.append(f"coalition {{{','.join(doc['coalition']['members'])}}} cost {_fmt(doc['coalition']['cost'])}")
        lines.append("  grid draw: " + " ".join(_fmt(v) for v in doc["coalition"]["grid_draw"]))
    if "game_table" in doc:
        lines.append("")
        lines.append("game table")
        for row in doc["game_table"]:
            lines.append(f"  v({','.join(row['coalition'])}) = {_fmt(row['value'])}")
    if "allocation" in doc:
        alloc = doc["allocation"]
        lines.append("")
        lines.append(f"allocation: {alloc['method']} ({alloc['core_status']})")
        for uid, cost in alloc["costs"].items():
            s = alloc["savings"][uid]
            lines.append(f"  {uid:<12} {_fmt(cost)}  saving {_fmt(s['absolute'])} ({_fmt(s['percent'])}%)")
        if "fairness" in alloc:
            f = alloc["fairness"]
            lines.append(f"  lambda_min {_fmt(f['lambda_min'])}  lambda_max {_fmt(f['lambda_max'])}"
                         f"  delta {_fmt(f['delta'])}")
        lines.append("")
        lines.append("core check")
        for r in doc["core_check"]:
            mark = "ok" if r["satisfied"] else "VIOLATED"
            lines.append(f"  {'+'.join('psi' + c for c in r['coalition'])} = {_fmt(r['allocated'])} "
                         f"{r['relation']} v({','.join(r['coalition'])}) = {_fmt(r['value'])}  {mark}")
    if "audit" in doc:
        lines.append("")
        lines.append("audit")
        lines.append(_emit(doc["audit"], 1))
    return "\n".join(lines) + "\n"


def format_report(report: Report, fmt: str = "json") -> str:
    doc = report_document(report)
    if fmt == "json":
        return _emit(doc) + "\n"
    if fmt == "text":
        return render_text(doc)
    raise ValidationError(f"unknown report format {fmt!r}")


def write_report(report: Report, path, fmt: str = "json") -> None:
    text = format_report(report, fmt)
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise MicrocoopError(f"{path}: cannot write report ({exc.strerror})") from exc


def read_report(path) -> dict:
    return json.loads(Path(path).read_text())


def recheck_core_records(doc: dict) -> list[bool]:
    """Verdicts recomputed from the recorded sides of every core inequality."""
    verdicts = []
    for r in doc.get("core_check", []):
        lhs, rhs = float(r["allocated"]), float(r["value"])
        slack = CHECK_TOL * max(1.0, abs(rhs))
        if r["relation"] == "=":
            verdicts.append(abs(lhs - rhs) <= slack)
        else:
            verdicts.append(lhs <= rhs + slack)
    return verdicts


# ---------------------------------------------------------------- plot data

def _write_rows(path: Path, header, rows):
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([c if isinstance(c, str) else _fmt(c) for c in row])
    except OSError as exc:
        raise MicrocoopError(f"{path}: cannot write plot data ({exc.strerror})") from exc


def emit_plot_data(directory, scenario: Optional[Scenario] = None,
                   individual: Optional[dict] = None, coalition: Optional[Schedule] = None,
                   cost_bars: Optional[dict] = None) -> list[Path]:
    """Write delimiter-separated plot data; returns the written paths.

    ``users.csv``      t, <id>_demand, <id>_draw per user (individual optimum)
    ``aggregate.csv``  t, sum_individual_x, coop_x
    ``costs.csv``      user, individual, shapley, fair_lp (blank when absent)
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if scenario is not None and individual:
        T = scenario.time_grid.interval_count
        header = ["t"]
        for mg in scenario.microgrids:
            header += [f"{mg.id}_demand", f"{mg.id}_draw"]
        rows = []
        for t in range(T):
            row = [str(t + 1)]
            for mg in scenario.microgrids:
                row += [mg.demand[t], individual[mg.id].grid_draw[t]]
            rows.append(row)
        _write_rows(out / "users.csv", header, rows)
        written.append(out / "users.csv")
    if scenario is not None and (individual or coalition is not None):
        T = scenario.time_grid.interval_count
        if individual:
            summed = sum(s.grid_draw for s in individual.values())
        else:
            summed = sum(mg.demand for mg in scenario.microgrids)
        rows = [[str(t + 1), summed[t], "" if coalition is None else coalition.grid_draw[t]]
                for t in range(T)]
        _write_rows(out / "aggregate.csv", ["t", "sum_individual_x", "coop_x"], rows)
        written.append(out / "aggregate.csv")
    if cost_bars:
        labels = list(cost_bars["users"])
        columns = ["individual", "shapley", "fair_lp"]
        rows = []
        for n, uid in enumerate(labels):
            row = [uid]
            for col in columns:
                values = cost_bars.get(col)
                row.append("" if values is None else values[n])
            rows.append(row)
        _write_rows(out / "costs.csv", ["user"] + columns, rows)
        written.append(out / "costs.csv")
    return written


def read_plot_table(path) -> dict[str, list]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {h: [r[j] for r in body] for j, h in enumerate(header)}
