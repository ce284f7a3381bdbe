"""Side-by-side comparison of ASNTR and storm_like runs in one output directory."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from ..trace import EVENTS, STORM_EVENT, read_csv_rows, write_rows
from .runner import _series, common_grid, interpolate, metrics_name, trace_name

PAIR = ("asntr", "storm_like")
COMPARE_METRICS = ("train_loss", "train_accuracy", "test_loss", "test_accuracy", "N_k")
COMPARE_COLUMNS = ("seed", "metric", "N_g", "asntr", "storm_like", "difference")
EVENT_COLUMNS = ("optimizer", "seed", "iterations") + EVENTS + (STORM_EVENT,)
_METRICS_FILE = re.compile(r"metrics_(asntr|storm_like)_(\d+)\.csv$")


class CompareError(RuntimeError):
    pass


def find_runs(directory):
    """Seeds present for each optimizer, from the metrics file names."""
    runs = {name: set() for name in PAIR}
    for path in Path(directory).iterdir():
        m = _METRICS_FILE.match(path.name)
        if m:
            runs[m.group(1)].add(int(m.group(2)))
    return runs


def _check_complete(directory, runs):
    directory = Path(directory)
    seeds = sorted(set().union(*runs.values()))
    if not seeds:
        raise CompareError(f"no metrics_<optimizer>_<seed>.csv files in {directory}")
    missing = []
    for seed in seeds:
        for opt in PAIR:
            for fname in (metrics_name(opt, seed), trace_name(opt, seed)):
                if not (directory / fname).is_file():
                    missing.append(f"{opt} seed {seed} ({fname})")
    if missing:
        raise CompareError("missing run: " + ", ".join(missing))
    return seeds


def event_portions(trace_rows):
    """Percentage of iterations per event code."""
    n = len(trace_rows)
    counts = {e: 0 for e in EVENTS + (STORM_EVENT,)}
    for r in trace_rows:
        counts[r["event"]] += 1
    return {e: (100.0 * c / n if n else 0.0) for e, c in counts.items()}, n


def compare_rows(metrics):
    """Aligned rows for every seed and metric; ``metrics[opt][seed]`` are row lists."""
    rows = []
    for seed in sorted(metrics[PAIR[0]]):
        for metric in COMPARE_METRICS:
            series = [_series(metrics[opt][seed], metric) for opt in PAIR]
            grid = common_grid(series)
            if grid.size == 0:
                continue
            a, b = (interpolate(xs, ys, grid) for xs, ys in series)
            for g, va, vb in zip(grid, a, b):
                rows.append({"seed": seed, "metric": metric, "N_g": float(g), "asntr": float(va),
                             "storm_like": float(vb), "difference": float(va - vb)})
    return rows


def compare_directory(directory, figures=True):
    """Write ``compare.csv`` and ``events.csv`` (plus figures) into ``directory``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise CompareError(f"{directory} is not a directory")
    seeds = _check_complete(directory, find_runs(directory))
    metrics = {opt: {s: read_csv_rows(directory / metrics_name(opt, s)) for s in seeds}
               for opt in PAIR}
    traces = {opt: {s: read_csv_rows(directory / trace_name(opt, s)) for s in seeds}
              for opt in PAIR}

    write_rows(directory / "compare.csv", COMPARE_COLUMNS, compare_rows(metrics))

    event_rows = []
    for opt in PAIR:
        pooled = []
        for s in seeds:
            portions, n = event_portions(traces[opt][s])
            event_rows.append({"optimizer": opt, "seed": s, "iterations": n, **portions})
            pooled.extend(traces[opt][s])
        portions, n = event_portions(pooled)
        event_rows.append({"optimizer": opt, "seed": "all", "iterations": n, **portions})
    write_rows(directory / "events.csv", EVENT_COLUMNS, event_rows)

    written = [directory / "compare.csv", directory / "events.csv"]
    if figures:
        from .plotting import render_comparison

        written += render_comparison(directory, metrics, event_rows)
    return written


def mean_curve(rows_by_seed, metric):
    """Seed-mean of ``metric`` on the shared N_g grid, or None without overlap."""
    series = [_series(rows, metric) for rows in rows_by_seed.values()]
    grid = common_grid(series)
    if grid.size == 0:
        return None
    return grid, np.mean([interpolate(xs, ys, grid) for xs, ys in series], axis=0)
