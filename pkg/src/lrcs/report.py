"""Per-run diagnostics shared by both solvers."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

from .metrics import ErrorSummary

__all__ = ["IterationRecord", "RunReport", "HISTORY_COLUMNS"]

HISTORY_COLUMNS = ("run_id", "iter", "sd2", "frob_rel", "grad_norm", "eta", "wall_ms")


@dataclass
class IterationRecord:
    iter: int
    sd2_to_truth: float | None
    frob_rel_err: float | None
    grad_norm: float
    eta_used: float
    wall_ms: float
    objective: float = math.nan
    u_step_ms: float = 0.0
    ortho_err: float = 0.0


@dataclass
class RunReport:
    solver: str
    meta: dict
    history: list = field(default_factory=list)
    final: ErrorSummary | None = None
    init_ms: float = 0.0
    total_ms: float = 0.0
    alpha: float = math.nan
    truncation_fraction: float = math.nan
    init_sd2: float | None = None
    init_degenerate: bool = False
    stop_reason: str = ""
    status: str = "ok"

    @property
    def iters(self):
        return len(self.history)

    def sd2_trajectory(self):
        return [rec.sd2_to_truth for rec in self.history]

    def to_dict(self):
        d = asdict(self)
        d["iters"] = self.iters
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), allow_nan=True, **kw)

    def history_csv(self, run_id=0):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for rec in self.history:
            w.writerow([run_id, rec.iter, _fmt(rec.sd2_to_truth), _fmt(rec.frob_rel_err),
                        _fmt(rec.grad_norm), _fmt(rec.eta_used), _fmt(rec.wall_ms)])
        return buf.getvalue()


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)
