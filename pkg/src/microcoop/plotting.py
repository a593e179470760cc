"""Figures rendered from the plot-data files written by ``io.emit_plot_data``.

Works from the CSV files alone, so the PNGs always show exactly what was
exported. Uses the object-oriented Figure API; no pyplot global state.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

from .io import read_plot_table

DPI = 120
STYLE = {
    "individual": dict(color="tab:red", label="sum of individual optima"),
    "coop": dict(color="tab:blue", label="cooperative"),
}


def _floats(column):
    return np.array([float(v) if v != "" else np.nan for v in column])


def plot_users(table, path: Path):
    t = _floats(table["t"])
    users = [h[: -len("_demand")] for h in table if h.endswith("_demand")]
    fig = Figure(figsize=(7, 1.8 * len(users) + 0.6))
    axes = fig.subplots(len(users), 1, sharex=True, squeeze=False)[:, 0]
    for ax, uid in zip(axes, users):
        ax.step(t, _floats(table[f"{uid}_demand"]), where="mid", color="0.5", label="demand")
        ax.step(t, _floats(table[f"{uid}_draw"]), where="mid", color="tab:green", label="grid draw")
        ax.set_ylabel(uid)
        ax.grid(alpha=0.3)
    axes[0].legend(loc="upper right", fontsize=8, frameon=False)
    axes[-1].set_xlabel("interval")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)


def plot_aggregate(table, path: Path):
    t = _floats(table["t"])
    fig = Figure(figsize=(7, 3))
    ax = fig.subplots()
    ax.step(t, _floats(table["sum_individual_x"]), where="mid", **STYLE["individual"])
    coop = _floats(table["coop_x"])
    if not np.all(np.isnan(coop)):
        ax.step(t, coop, where="mid", **STYLE["coop"])
    ax.set_xlabel("interval")
    ax.set_ylabel("grid draw")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)


def plot_costs(table, path: Path):
    users = table["user"]
    series = [(name, _floats(table[name])) for name in ("individual", "shapley", "fair_lp")
              if any(v != "" for v in table[name])]
    x = np.arange(len(users))
    width = 0.8 / max(1, len(series))
    fig = Figure(figsize=(6, 3.2))
    ax = fig.subplots()
    for k, (name, values) in enumerate(series):
        ax.bar(x + (k - (len(series) - 1) / 2) * width, values, width, label=name.replace("_", " "))
    ax.set_xticks(x)
    ax.set_xticklabels(users)
    ax.set_ylabel("cost")
    ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)


_RENDERERS = {"users.csv": plot_users, "aggregate.csv": plot_aggregate, "costs.csv": plot_costs}


def render_figures(directory) -> list[Path]:
    """Render a PNG next to each known plot-data file in ``directory``."""
    directory = Path(directory)
    written = []
    for name, render in _RENDERERS.items():
        src = directory / name
        if src.exists():
            dest = src.with_suffix(".png")
            render(read_plot_table(src), dest)
            written.append(dest)
    return written
