"""Figures written next to the CSV reports.

Uses the object-oriented matplotlib API (no pyplot state), so it is safe to
call from a headless CLI and produces identical files for identical inputs.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from matplotlib.figure import Figure

from .data_model import Journey

MONTHS = ("Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")
RC = {"dpi": 100}


def _save(fig: Figure, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=RC["dpi"], metadata={"Software": None})
    return path


def monthly_latemins(journeys: Iterable[Journey], train: str, station: str,
                     path: str | Path) -> Path:
    """Individual late minutes at one station of one train, by month, with monthly means."""
    by_month: dict[int, list[int]] = defaultdict(list)
    for j in journeys:
        if j.train_number != train:
            continue
        for s in j.stops:
            if s.station_code == station:
                by_month[s.month].append(s.latemin)
    fig = Figure(figsize=(6, 3.5))
    ax = fig.add_subplot()
    for m, vals in sorted(by_month.items()):
        ax.scatter([m] * len(vals), vals, s=10, alpha=0.6)
    months = sorted(by_month)
    ax.plot(months, [np.mean(by_month[m]) for m in months], "k-o", lw=1, ms=4, label="monthly mean")
    ax.set_xticks(range(1, 13), MONTHS, fontsize=8)
    ax.set_ylabel("late minutes")
    ax.set_title(f"Train {train} at {station}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def journey_profile(journeys: Iterable[Journey], train: str, month: int | None,
                    path: str | Path) -> Path:
    """Mean late minutes at each in-line station of a train, optionally for one month."""
    sums: dict[int, list[int]] = defaultdict(list)
    names: dict[int, str] = {}
    for j in journeys:
        if j.train_number != train or (month is not None and j.date.month != month):
            continue
        for i, s in enumerate(j.stops):
            sums[i].append(s.latemin)
            names[i] = s.station_code
    pos = sorted(sums)
    fig = Figure(figsize=(7, 3.5))
    ax = fig.add_subplot()
    ax.plot(pos, [np.mean(sums[i]) for i in pos], "o-", ms=4)
    ax.set_xticks(pos, [names[i] for i in pos], rotation=60, fontsize=7)
    ax.set_ylabel("mean late minutes")
    title = f"Train {train}" + (f", {MONTHS[month - 1]}" if month else "")
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def prediction_vs_actual(stations: Sequence[str], predicted: Sequence[float],
                         actual: Sequence[float] | None, title: str, path: str | Path) -> Path:
    fig = Figure(figsize=(7, 3.5))
    ax = fig.add_subplot()
    x = np.arange(len(stations))
    ax.plot(x, predicted, "o-", ms=4, label="predicted")
    if actual is not None:
        ax.plot(x, actual, "s--", ms=4, label="actual")
    ax.set_xticks(x, stations, rotation=60, fontsize=7)
    ax.set_ylabel("late minutes")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def coverage_by_order(series: dict[str, dict[int, dict[int, float]]], path: str | Path) -> Path:
    """series: label -> N -> level -> percent."""
    fig = Figure(figsize=(6, 3.5))
    ax = fig.add_subplot()
    for label, by_n in series.items():
        ns = sorted(by_n)
        for level, style in ((68, ":"), (95, "-"), (99, "--")):
            ax.plot(ns, [by_n[n][level] for n in ns], style, marker="o", ms=3,
                    label=f"{label} CI{level}")
    ax.set_xlabel("N")
    ax.set_ylabel("% predictions inside CI")
    ax.set_ylim(0, 100)
    ax.legend(fontsize=6, ncol=2)
    fig.tight_layout()
    return _save(fig, path)


def order_counts(counts: dict[str, dict[int, int]], path: str | Path) -> Path:
    """counts: label -> N -> number of trains whose minimum score was at N."""
    fig = Figure(figsize=(6, 3.5))
    ax = fig.add_subplot()
    labels = list(counts)
    width = 0.8 / max(len(labels), 1)
    for k, label in enumerate(labels):
        ns = sorted(counts[label])
        ax.bar(np.array(ns) + k * width - 0.4 + width / 2, [counts[label][n] for n in ns],
               width, label=label)
    ax.set_xlabel("N")
    ax.set_ylabel("trains")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)
