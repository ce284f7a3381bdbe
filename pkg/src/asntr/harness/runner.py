"""Run every (optimizer, seed) pair of an experiment and write its outputs.

Per run: ``trace_<opt>_<seed>.csv`` (one row per iteration, optimizer internals)
and ``metrics_<opt>_<seed>.csv`` (losses and accuracies). Per experiment:
``summary.json`` with mean and standard error across seeds on an N_g grid.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..driver import ASNTR
from ..storm import StormLike
from ..trace import as_float, read_csv_rows, write_rows, write_trace_csv
from .experiment import batch_accuracy, build_experiment, evaluate_test

METRICS_COLUMNS = ("seed", "k", "N_g", "train_loss", "train_accuracy", "test_loss",
                   "test_accuracy", "N_k", "delta", "event")
SUMMARY_METRICS = ("train_loss", "train_accuracy", "test_loss", "test_accuracy", "N_k", "delta")
GRID_POINTS = 50
OPTIMIZER_CLASSES = {"asntr": ASNTR, "storm_like": StormLike}


def trace_name(opt, seed):
    return f"trace_{opt}_{seed}.csv"


def metrics_name(opt, seed):
    return f"metrics_{opt}_{seed}.csv"


def _nan_to_none(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def run_single(exp, opt_spec, seed, budget, eval_every, observe=None):
    """One optimizer run; returns ``(RunResult, metrics rows)``.

    Test-set evaluations happen every ``eval_every`` iterations and on the last
    one; they are not charged to N_g. ``observe(record, optimizer)``, if given,
    runs after every iteration.
    """
    params = opt_spec.build(seed, budget)
    opt = OPTIMIZER_CLASSES[opt_spec.name](exp.problem, params, exp.initial_point(seed))
    rows = []

    def record(rec, o):
        w_k, batch = o.last_point
        rows.append({
            "seed": seed, "k": rec.k, "N_g": rec.N_g_cumulative, "train_loss": rec.f_Nk_at_wk,
            "train_accuracy": _nan_to_none(batch_accuracy(exp, w_k, batch)),
            "test_loss": None, "test_accuracy": None, "N_k": rec.N_k,
            "delta": rec.delta_k, "event": rec.event, "_w": w_k,
        })
        if rec.k % eval_every == 0:
            _add_test(rows[-1])
        if observe is not None:
            observe(rec, o)

    def _add_test(row):
        loss, acc = evaluate_test(exp.problem, row["_w"], exp.test, exp.task, exp.threshold)
        row["test_loss"], row["test_accuracy"] = loss, _nan_to_none(acc)

    result = opt.run(callback=record)
    if rows and rows[-1]["test_loss"] is None:
        _add_test(rows[-1])
    for row in rows:
        del row["_w"]
    return result, rows


def _series(rows, metric):
    """(N_g, value) pairs with a value, one per distinct N_g (the latest wins)."""
    pts = {}
    for r in rows:
        v = as_float(r.get(metric))
        if not math.isnan(v):
            pts[as_float(r["N_g"])] = v
    xs = np.array(sorted(pts))
    return xs, np.array([pts[x] for x in xs])


def common_grid(series_list, n_points=GRID_POINTS):
    """Grid over the N_g range every series covers; empty if they do not overlap."""
    if not series_list or any(xs.size == 0 for xs, _ in series_list):
        return np.zeros(0)
    lo = max(xs[0] for xs, _ in series_list)
    hi = min(xs[-1] for xs, _ in series_list)
    if hi < lo:
        return np.zeros(0)
    if hi == lo:
        return np.array([lo])
    return np.linspace(lo, hi, n_points)


def interpolate(xs, ys, grid):
    """Linear interpolation that refuses to extrapolate."""
    if grid.size and (grid[0] < xs[0] or grid[-1] > xs[-1]):
        raise ValueError("grid reaches outside the sampled N_g range")
    return np.interp(grid, xs, ys)


def mean_stderr(values):
    """Mean and standard error (sample std with ddof=1 over sqrt(n)) along axis 0."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    mean = values.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, values.std(axis=0, ddof=1) / np.sqrt(n)


def summarize(rows_by_seed, optimizer):
    """Per-metric summary entries for one optimizer."""
    out = {}
    for metric in SUMMARY_METRICS:
        series = [_series(rows, metric) for rows in rows_by_seed.values()]
        grid = common_grid(series)
        if grid.size == 0:
            continue
        vals = [interpolate(xs, ys, grid) for xs, ys in series]
        mean, se = mean_stderr(vals)
        out[metric] = {"optimizer": optimizer, "seeds": sorted(rows_by_seed), "grid": grid.tolist(),
                       "mean": mean.tolist(), "stderr": se.tolist()}
    return out


def write_summary(path, per_optimizer):
    doc = {}
    for opt, entries in per_optimizer.items():
        for metric, entry in entries.items():
            doc.setdefault(metric, []).append(entry)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


class OutputError(OSError):
    """One or more output files could not be written; ``failures`` lists them."""

    def __init__(self, failures):
        self.failures = failures
        super().__init__("; ".join(f"{path}: {msg}" for path, msg in failures))


def run_experiment(cfg, out_dir, progress=None):
    """Run a validated config; returns ``{(opt, seed): RunResult}``.

    A file that cannot be written does not stop the remaining runs; all such
    failures are raised together at the end as :class:`OutputError`.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    exp = build_experiment(cfg.problem)
    results, summaries, failures = {}, {}, []

    def attempt(path, write, *args):
        try:
            write(path, *args)
        except OSError as exc:
            failures.append((str(path), exc.strerror or str(exc)))

    for spec in cfg.optimizers:
        rows_by_seed = {}
        for seed in cfg.seeds:
            result, rows = run_single(exp, spec, seed, cfg.budget, cfg.eval_every)
            attempt(out_dir / trace_name(spec.name, seed), write_trace_csv, result.trace)
            attempt(out_dir / metrics_name(spec.name, seed), write_rows, METRICS_COLUMNS, rows)
            results[(spec.name, seed)] = result
            rows_by_seed[seed] = rows
            if progress is not None:
                progress(spec.name, seed, result)
        summaries[spec.name] = summarize(rows_by_seed, spec.name)
    attempt(out_dir / "summary.json", write_summary, summaries)
    if failures:
        raise OutputError(failures)
    return results


def load_metrics(path):
    return read_csv_rows(path)
