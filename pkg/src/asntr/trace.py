"""Per-iteration records, run results and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

EVENTS = ("S0", "S1", "S2", "S3", "S4")
STORM_EVENT = "ST"

# Leading columns are fixed; the trailing ones are diagnostics.
TRACE_COLUMNS = ("k", "event", "N_k", "delta", "rho_N", "rho_D", "accepted", "f",
                 "g_norm", "b_norm", "N_g", "q_value",
                 "t_k", "ttilde_k", "p_norm", "g_reused", "pair_stored", "cauchy_ok")


@dataclass
class IterationRecord:
    k: int
    N_k: int
    delta_k: float
    rho_N: float
    rho_D: float | None
    t_k: float
    ttilde_k: float
    accepted: bool
    event: str
    f_Nk_at_wk: float
    g_norm: float
    b_norm_est: float
    N_g_cumulative: int
    q_value: float
    p_norm: float = 0.0
    g_reused: bool = False
    pair_attempted: bool = False
    pair_stored: bool = False
    cauchy_ok: bool = True
    delta_next: float = float("nan")
    N_next: int = 0

    def as_row(self) -> dict:
        return {
            "k": self.k, "event": self.event, "N_k": self.N_k, "delta": self.delta_k,
            "rho_N": self.rho_N, "rho_D": self.rho_D, "accepted": self.accepted,
            "f": self.f_Nk_at_wk, "g_norm": self.g_norm, "b_norm": self.b_norm_est,
            "N_g": self.N_g_cumulative, "q_value": self.q_value, "t_k": self.t_k,
            "ttilde_k": self.ttilde_k, "p_norm": self.p_norm, "g_reused": self.g_reused,
            "pair_stored": self.pair_stored, "cauchy_ok": self.cauchy_ok,
        }


@dataclass
class RunResult:
    w: np.ndarray
    trace: list = field(default_factory=list)
    termination: str = "max-iterations"
    n_grad: int = 0

    def event_counts(self) -> dict:
        counts = {}
        for r in self.trace:
            counts[r.event] = counts.get(r.event, 0) + 1
        return counts


def format_value(v) -> str:
    """Stable text form: shortest round-trip repr for floats, 1/0 for booleans."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, columns, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row.get(c)) for c in columns])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def write_trace_csv(path, trace) -> None:
    write_rows(path, TRACE_COLUMNS, [r.as_row() for r in trace])


def read_csv_rows(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def as_float(s) -> float:
    """Number from a CSV cell or a python value; empty and None become nan."""
    return float("nan") if s is None or s == "" else float(s)


def record_dict(rec: IterationRecord) -> dict:
    return asdict(rec)
