"""Seeded Monte-Carlo sweeps over problem sizes, noise levels and solvers.

Configuration files are flat ``key = value`` text::

    # comments start with '#'; blank lines are ignored
    n = 100
    q = 100
    r = 2
    m = 5, 10, 20, 40, 80        # comma-separated values form a grid axis
    sigma_v = 0                  # or: nsr = 1e-6, 1e-4
    trials = 20
    solver = altgdmin

Grid axes: n, q, r, m, kappa, sigma_v, nsr (sigma_v and nsr are mutually
exclusive). Every other key is a scalar; see ``SCALAR_KEYS``. Command-line
flags override file values.

Outputs (in ``output_path``):

``results.csv``
    one row per (cell, trial), columns ``RESULT_COLUMNS``; the row number
    (0-based, header excluded) is the ``run_id`` used in ``history.csv``.
``history.csv``
    long format, columns ``HISTORY_COLUMNS``.
``summary.csv``
    per-cell medians and quartiles, columns ``SUMMARY_COLUMNS``.
``manifest.json``
    schema version, column lists and the resolved configuration.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .altmin import run_altmin
from .errors import ConfigurationError, SolverError
from .gdmin import SolverConfig, run
from .init import InitConfig, assemble_x0, expected_x0, truncated_second_moment
from .model import generate_ground_truth, incoherence, measure, nsr, sigma_v_for_nsr
from .report import HISTORY_COLUMNS

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
RESULT_COLUMNS = ("n", "q", "r", "m", "sigma_v", "nsr", "mu", "kappa", "seed", "solver",
                  "final_sd2", "final_frob_rel", "iters", "init_ms", "total_ms", "status")
SUMMARY_COLUMNS = ("n", "q", "r", "m", "sigma_v", "nsr", "kappa", "solver", "trials", "n_ok",
                   "success_rate", "sd2_median", "sd2_q25", "sd2_q75",
                   "total_ms_median", "total_ms_q25", "total_ms_q75")
GRID_KEYS = ("n", "q", "r", "m", "kappa", "sigma_v", "nsr")
SCALAR_KEYS = {
    "trials": int, "solver": str, "base_seed": int, "max_iters": int, "tol": float,
    "eta_scale": float, "eta_mode": str, "split_mode": str, "theory_mode": "bool",
    "threads": int, "mem_budget_gib": float, "success_sd2": float, "record_timing": "bool",
    "c_tilde": float, "out": str,
}
SOLVERS = {"altgdmin": run, "altmin": run_altmin}
DEFAULT_MEM_BUDGET_GIB = 2.0


@dataclass
class ExperimentSpec:
    grid: dict
    trials_per_cell: int = 1
    solver: str = "altgdmin"
    solver_cfg: SolverConfig = field(default_factory=lambda: SolverConfig(r=1))
    output_path: str = "results"
    base_seed: int = 0
    # None: fall back to $LRCS_THREADS, then 1
    threads: int | None = None
    mem_budget_bytes: float = DEFAULT_MEM_BUDGET_GIB * 2**30
    success_sd2: float = 1e-6
    record_timing: bool = True
    c_tilde: float | None = None

    def cells(self):
        """Cartesian product of the grid axes, as ordered dicts."""
        if not self.grid or any(len(v) == 0 for v in self.grid.values()):
            raise ConfigurationError("experiment grid is empty")
        missing = [k for k in ("n", "q", "r", "m") if k not in self.grid]
        if missing:
            raise ConfigurationError(f"grid lacks required axes: {', '.join(missing)}")
        unknown = set(self.grid) - set(GRID_KEYS)
        if unknown:
            raise ConfigurationError(f"unknown grid axes: {', '.join(sorted(unknown))}")
        if "sigma_v" in self.grid and "nsr" in self.grid:
            raise ConfigurationError("give either sigma_v or nsr, not both")
        axes = {k: list(self.grid[k]) for k in GRID_KEYS if k in self.grid}
        axes.setdefault("kappa", [1.0])
        if "nsr" not in axes:
            axes.setdefault("sigma_v", [0.0])
        keys = list(axes)
        return [dict(zip(keys, vals)) for vals in itertools.product(*axes.values())]

    def validate(self):
        if self.trials_per_cell < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.solver not in SOLVERS:
            raise ConfigurationError(f"solver must be one of {sorted(SOLVERS)}")
        if self.threads is not None and self.threads < 1:
            raise ConfigurationError("threads must be >= 1")
        cells = self.cells()
        for c in cells:
            replace(self.solver_cfg, r=int(c["r"])).validate()
            need = 8.0 * c["m"] * c["n"] * c["q"]
            if need > self.mem_budget_bytes:
                raise ConfigurationError(
                    f"cell {c} needs {need / 2**30:.2f} GiB of sketches, over the "
                    f"{self.mem_budget_bytes / 2**30:.2f} GiB budget")
        return cells


# ---------------------------------------------------------------------------
# config parsing


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"not a boolean: {text!r}")


def _parse_number(text):
    f = float(text)
    return int(f) if f.is_integer() and "." not in text and "e" not in text.lower() else f


def parse_config_text(text):
    """Parse the flat key = value grammar into a dict of raw values."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"line {lineno}: missing key")
        out[key] = value
    return out


def spec_from_settings(settings):
    """Build an ExperimentSpec from raw string settings (file + overrides)."""
    grid, scal = {}, {}
    for key, value in settings.items():
        if key in GRID_KEYS:
            try:
                vals = [_parse_number(v.strip()) for v in str(value).split(",") if v.strip()]
            except ValueError as exc:
                raise ConfigurationError(f"{key}: {exc}") from None
            grid[key] = vals
        elif key in SCALAR_KEYS:
            kind = SCALAR_KEYS[key]
            try:
                scal[key] = _parse_bool(str(value)) if kind == "bool" else kind(value)
            except ValueError as exc:
                raise ConfigurationError(f"{key}: {exc}") from None
        else:
            raise ConfigurationError(f"unknown config key {key!r}")
    for key in ("n", "q", "r", "m", "trials"):
        vals = grid.get(key, [scal.get(key, 1)])
        if any(not isinstance(v, int) or v < 1 for v in vals):
            raise ConfigurationError(f"{key} must be positive integers")
    r0 = grid["r"][0] if grid.get("r") else 1
    cfg_kw = {k: scal[k] for k in ("max_iters", "tol", "eta_scale", "eta_mode",
                                   "split_mode", "theory_mode") if k in scal}
    return ExperimentSpec(
        grid=grid,
        trials_per_cell=scal.get("trials", 1),
        solver=scal.get("solver", "altgdmin"),
        solver_cfg=SolverConfig(r=r0, **cfg_kw),
        output_path=scal.get("out", "results"),
        base_seed=scal.get("base_seed", 0),
        threads=scal.get("threads"),
        mem_budget_bytes=scal.get("mem_budget_gib", DEFAULT_MEM_BUDGET_GIB) * 2**30,
        success_sd2=scal.get("success_sd2", 1e-6),
        record_timing=scal.get("record_timing", True),
        c_tilde=scal.get("c_tilde"),
    )


def load_spec(path, overrides=None):
    with open(path) as fh:
        settings = parse_config_text(fh.read())
    settings.update(overrides or {})
    return spec_from_settings(settings)


# ---------------------------------------------------------------------------
# seeds


def derive_seed(base_seed, cell, trial):
    """64-bit trial seed keyed by the cell's parameter values, not its position.

    Adding values to a grid axis therefore never changes the seeds of cells
    that were already present.
    """
    canon = json.dumps({k: cell[k] for k in sorted(cell)}, sort_keys=True)
    digest = hashlib.sha256(canon.encode()).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    ss = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFFFFFFFFFF, *words, int(trial)])
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


# ---------------------------------------------------------------------------
# execution


def _trial(spec, cell, seed):
    n, q, r, m = int(cell["n"]), int(cell["q"]), int(cell["r"]), int(cell["m"])
    truth = generate_ground_truth(n, q, r, float(cell["kappa"]), seed)
    if "nsr" in cell:
        sigma_v = sigma_v_for_nsr(truth, float(cell["nsr"]))
    else:
        sigma_v = float(cell["sigma_v"])
    inst = measure(truth, m, sigma_v, seed)
    rep = incoherence(truth)
    init = InitConfig(kappa=rep.kappa, mu=rep.mu, c_tilde=spec.c_tilde)
    cfg = replace(spec.solver_cfg, r=r, init=init)
    row = {"n": n, "q": q, "r": r, "m": m, "sigma_v": sigma_v, "nsr": nsr(truth, sigma_v),
           "mu": rep.mu, "kappa": rep.kappa, "seed": seed, "solver": spec.solver,
           "final_sd2": math.nan, "final_frob_rel": math.nan, "iters": 0,
           "init_ms": 0.0, "total_ms": 0.0, "status": "ok"}
    try:
        _, report = SOLVERS[spec.solver](inst, cfg)
    except SolverError as exc:
        report = exc.report
        row["status"] = type(exc).__name__
        log.warning("seed %d cell %s: %s", seed, cell, exc)
    except ConfigurationError as exc:
        row["status"] = "ConfigurationError"
        log.warning("seed %d cell %s: %s", seed, cell, exc)
        return row, None
    if report is not None:
        row.update(iters=report.iters, init_ms=report.init_ms, total_ms=report.total_ms)
        if report.final is not None:
            row.update(final_sd2=report.final.sd2, final_frob_rel=report.final.frob_rel)
    return row, report


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _csv(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def run_experiment(spec):
    """Execute every (cell, trial) and write the report files.

    Returns a dict with the output paths and the result rows.
    """
    cells = spec.validate()
    tasks = [(cell, trial, derive_seed(spec.base_seed, cell, trial))
             for cell in cells for trial in range(spec.trials_per_cell)]

    def work(task):
        cell, _, seed = task
        return _trial(spec, cell, seed)

    threads = spec.threads or default_threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(work, tasks))
    else:
        outcomes = [work(t) for t in tasks]

    rows, hist = [], []
    for run_id, ((cell, trial, _), (row, report)) in enumerate(zip(tasks, outcomes)):
        if not spec.record_timing:
            row["init_ms"] = row["total_ms"] = 0.0
        rows.append(row)
        for rec in (report.history if report is not None else []):
            hist.append({"run_id": run_id, "iter": rec.iter, "sd2": rec.sd2_to_truth,
                         "frob_rel": rec.frob_rel_err, "grad_norm": rec.grad_norm,
                         "eta": rec.eta_used,
                         "wall_ms": rec.wall_ms if spec.record_timing else 0.0})
    summary = emit_summary(rows, spec.success_sd2)

    out = Path(spec.output_path)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"results": out / "results.csv", "history": out / "history.csv",
             "summary": out / "summary.csv", "manifest": out / "manifest.json"}
    paths["results"].write_text(_csv(RESULT_COLUMNS, rows))
    paths["history"].write_text(_csv(HISTORY_COLUMNS, hist))
    paths["summary"].write_text(_csv(SUMMARY_COLUMNS, summary))
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "columns": {"results": RESULT_COLUMNS, "history": HISTORY_COLUMNS,
                    "summary": SUMMARY_COLUMNS},
        "grid": spec.grid, "trials": spec.trials_per_cell, "solver": spec.solver,
        "base_seed": spec.base_seed, "success_sd2": spec.success_sd2,
        "solver_cfg": {k: v for k, v in vars(spec.solver_cfg).items() if k not in ("init", "r")},
        "c_tilde": spec.c_tilde,
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return {"paths": paths, "rows": rows, "summary": summary}


def emit_summary(rows, success_sd2=1e-6):
    """Per-cell medians and interquartile ranges of final SD2 and wall-clock."""
    if not rows:
        raise ValueError("need at least one result row")
    key_cols = ("n", "q", "r", "m", "sigma_v", "kappa", "solver")
    groups = {}
    for row in rows:
        # kappa is measured per trial; group on the cell-level inputs only
        key = tuple(row[c] for c in key_cols if c != "kappa")
        groups.setdefault(key, []).append(row)
    out = []
    for members in groups.values():
        first = members[0]
        ok = [r for r in members if r["status"] == "ok"]
        sd = np.array([r["final_sd2"] for r in ok], dtype=float)
        ms = np.array([r["total_ms"] for r in ok], dtype=float)

        def q3(a):
            if a.size == 0:
                return (math.nan,) * 3
            return tuple(float(v) for v in np.percentile(a, [50, 25, 75]))

        sd_med, sd_lo, sd_hi = q3(sd)
        ms_med, ms_lo, ms_hi = q3(ms)
        succ = sum(1 for r in ok if r["final_sd2"] <= success_sd2) / len(members)
        out.append({"n": first["n"], "q": first["q"], "r": first["r"], "m": first["m"],
                    "sigma_v": first["sigma_v"], "nsr": first["nsr"], "kappa": first["kappa"],
                    "solver": first["solver"], "trials": len(members), "n_ok": len(ok),
                    "success_rate": succ, "sd2_median": sd_med, "sd2_q25": sd_lo,
                    "sd2_q75": sd_hi, "total_ms_median": ms_med, "total_ms_q25": ms_lo,
                    "total_ms_q75": ms_hi})
    return out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# Monte-Carlo check of the initialization expectation


@dataclass(frozen=True)
class InitCheck:
    rel_frob_dev: float
    max_col_rel_dev: float
    alpha: float
    min_weight: float
    reps: int


def verify_init(n=20, q=10, r=2, m=50, sigma_v=0.5, reps=2000, kappa=1.0, seed=0,
                alpha=None, c_tilde=None, batch=200):
    """Compare the empirical mean of X0 over fresh sketches with ``X* D(alpha)``.

    Truth and alpha stay fixed; only the sketches and noise are redrawn.
    When ``alpha`` is omitted it is set to ``c_tilde * (||X*||_F^2 / q + sigma_v^2)``,
    the population value of the data-driven threshold.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    truth = generate_ground_truth(n, q, r, kappa, seed)
    if alpha is None:
        cfg = InitConfig.from_truth(truth) if c_tilde is None else InitConfig(c_tilde=c_tilde)
        x = truth.x_star
        alpha = cfg.c_tilde * (float(np.sum(x * x)) / q + sigma_v**2)
    target = expected_x0(truth, sigma_v, alpha)
    x = truth.x_star
    total = np.zeros((n, q))
    done = 0
    for i in itertools.count():
        if done >= reps:
            break
        size = min(batch, reps - done)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7, i)))
        a = rng.standard_normal((size, q, m, n))
        y = np.einsum("bkmn,nk->bkm", a, x) + sigma_v * rng.standard_normal((size, q, m))
        total += assemble_x0(a, y, alpha).sum(axis=0)
        done += size
    mean = total / reps
    diff = mean - target
    rel = float(np.linalg.norm(diff) / np.linalg.norm(target))
    col = np.linalg.norm(diff, axis=0) / np.linalg.norm(target, axis=0)
    gamma = np.sqrt(alpha) / np.sqrt(np.sum(x * x, axis=0) + sigma_v**2)
    return InitCheck(rel, float(col.max()), float(alpha),
                     float(np.min(truncated_second_moment(gamma))), reps)


def default_threads():
    env = os.environ.get("LRCS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"LRCS_THREADS must be an integer, got {env!r}") from None
    return 1
