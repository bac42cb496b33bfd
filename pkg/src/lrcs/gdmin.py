"""AltGDmin: exact least squares over B, one projected gradient step on U.

Each iteration, with U fixed,

    b_k   <- argmin_b ||y_k - A_k U b||          (per column, via QR)
    grad  <- sum_k A_k^T (A_k U b_k - y_k) b_k^T
    U     <- QR(U - (eta / m) grad)              (Q factor, diag(R) > 0)

The step size is ``eta = eta_scale / sigma_max^2``; sigma_max is either the
true one (``oracle``), ``sigma_max(B_t)`` refreshed every iteration
(``from-B``, the default) or taken once from the initial data matrix
(``from-init``).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, QRBreakdownError, RankDeficientError, SolverError
from .init import InitConfig, spectral_init
from .metrics import frob_error, sd2, summarize
from .model import incoherence, nsr
from .report import IterationRecord, RunReport

__all__ = [
    "SolverConfig",
    "SolverState",
    "update_b",
    "gradient_u",
    "objective",
    "qr_positive",
    "gd_step",
    "run",
    "instance_meta",
    "split_rows",
]

log = logging.getLogger(__name__)

SPLIT_MODES = ("no-split", "paper-split")
ETA_MODES = ("from-B", "from-init", "oracle")


@dataclass(frozen=True)
class SolverConfig:
    r: int
    eta_scale: float = 0.5
    max_iters: int = 100
    tol: float = 1e-12
    split_mode: str = "no-split"
    eta_mode: str = "from-B"
    # multiplies sigma_max(X0) in from-init mode
    init_sigma_scale: float = 1.0
    # disables the divergence guard and requires eta_scale <= 0.5
    theory_mode: bool = False
    divergence_window: int = 5
    init: InitConfig | None = None

    def validate(self):
        if self.r < 1:
            raise ConfigurationError("rank r must be >= 1")
        if not self.eta_scale > 0:
            raise ConfigurationError("eta_scale must be positive")
        if self.theory_mode and self.eta_scale > 0.5:
            raise ConfigurationError("theory mode requires eta_scale <= 0.5")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if self.split_mode not in SPLIT_MODES:
            raise ConfigurationError(f"split_mode must be one of {SPLIT_MODES}")
        if self.eta_mode not in ETA_MODES:
            raise ConfigurationError(f"eta_mode must be one of {ETA_MODES}")
        if not self.init_sigma_scale > 0:
            raise ConfigurationError("init_sigma_scale must be positive")
        return self


@dataclass
class SolverState:
    u: np.ndarray
    b: np.ndarray | None = None
    iter: int = 0
    history: list = field(default_factory=list)


def update_b(u, matrices, observations, return_residual=False):
    """Per-column least-squares coefficients ``b_k = (A_k U)^+ y_k``.

    Solved from a thin QR of each ``A_k U``; the normal equations are never
    formed. Returns the r x q matrix B (and the (q, m) residuals on request).
    """
    au = np.einsum("kmn,nr->kmr", matrices, u)
    m, r = au.shape[1:]
    if m < r:
        raise RankDeficientError(f"m={m} < r={r}: A_k U cannot have full column rank",
                                 column=0, dimension=r)
    q_fac, r_fac = np.linalg.qr(au)
    diag = np.abs(np.diagonal(r_fac, axis1=1, axis2=2))
    scale = np.linalg.norm(au, axis=(1, 2))
    bad = np.flatnonzero(diag.min(axis=1) <= np.finfo(float).eps * max(m, r) * scale)
    if bad.size:
        k = int(bad[0])
        raise RankDeficientError(f"A_k U is rank deficient for column k={k}", column=k,
                                 dimension=r, iterate=u)
    qty = np.einsum("kmr,km->kr", q_fac, observations)
    b = np.linalg.solve(r_fac, qty[..., None])[..., 0]
    if not return_residual:
        return b.T
    resid = observations - np.einsum("kmr,kr->km", au, b)
    return b.T, resid


def _accumulate(per_col, b):
    # ascending-k accumulation of per_col[k] b_k^T; numpy reduces axis 0 row
    # by row, so the result does not depend on BLAS threading
    return np.sum(per_col[:, :, None] * b.T[:, None, :], axis=0)


def gradient_u(u, b, matrices, observations):
    """``sum_k A_k^T (A_k U b_k - y_k) b_k^T``, accumulated in ascending k."""
    fitted = np.einsum("kmn,nr,rk->km", matrices, u, b, optimize=True)
    return _gradient_from_residual(matrices, fitted - observations, b)


def _gradient_from_residual(matrices, neg_resid, b):
    per_col = np.einsum("kmn,km->kn", matrices, neg_resid)
    return _accumulate(per_col, b)


def objective(u, b, matrices, observations):
    fitted = np.einsum("kmn,nr,rk->km", matrices, u, b, optimize=True)
    return float(np.sum((observations - fitted) ** 2))


def qr_positive(x, *, context=""):
    """Thin QR Q factor with the R diagonal forced positive."""
    q, r = np.linalg.qr(x)
    d = np.diagonal(r)
    if np.abs(d).min() <= np.finfo(float).eps * max(x.shape) * max(np.abs(d).max(), 1e-300):
        raise QRBreakdownError(f"QR breakdown: update is rank deficient{context}", iterate=x)
    return q * np.sign(d)


def gd_step(u, grad, eta, m):
    """``QR(U - (eta/m) grad)``; a zero step returns U unchanged."""
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if eta == 0 or not np.any(grad):
        return np.array(u, dtype=float)
    return qr_positive(u - (eta / m) * grad)


def split_rows(m, cfg):
    """Row indices per sample split: [init, B_1..B_T, grad_1..grad_T] or all rows."""
    if cfg.split_mode == "no-split":
        return None
    parts = 2 * cfg.max_iters + 1
    if m % parts:
        raise ConfigurationError(
            f"paper-split needs m divisible by 2T+1={parts}; got m={m}")
    size = m // parts
    return [slice(i * size, (i + 1) * size) for i in range(parts)]


def instance_meta(instance, r):
    meta = {"n": instance.n, "q": instance.q, "r": r, "m": instance.m,
            "sigma_v": instance.sigma_v, "seed": instance.seed,
            "mu": None, "kappa": None, "nsr": None}
    if instance.truth is not None:
        rep = incoherence(instance.truth)
        meta.update(mu=rep.mu, kappa=rep.kappa, nsr=nsr(instance.truth, instance.sigma_v))
    return meta


def _gd_u_step(u, b, resid, data_g, eta, same_data):
    matrices, observations = data_g
    if same_data:
        grad = _gradient_from_residual(matrices, -resid, b)
    else:
        grad = gradient_u(u, b, matrices, observations)
    return gd_step(u, grad, eta, matrices.shape[1]), float(np.linalg.norm(grad))


def run(instance, cfg):
    """Run AltGDmin from the truncated spectral initialization.

    Returns ``(state, report)``. Numerical failures are re-raised as
    :class:`SolverError` carrying the partial state and report.
    """
    return drive(instance, cfg, _gd_u_step, "altgdmin")


def _timer():
    return time.perf_counter()


def drive(instance, cfg, u_step, solver):
    cfg.validate()
    r = cfg.r
    if r > min(instance.n, instance.q):
        raise ConfigurationError(f"rank r={r} exceeds min(n, q)")
    splits = split_rows(instance.m, cfg)
    T = cfg.max_iters
    truth = instance.truth

    def data(tau):
        if splits is None:
            return instance.matrices, instance.observations
        return instance.matrices[:, splits[tau]], instance.observations[:, splits[tau]]

    if cfg.eta_mode == "oracle" and truth is None:
        raise ConfigurationError("oracle eta mode needs ground truth")
    init_cfg = cfg.init
    if init_cfg is None:
        if truth is None:
            raise ConfigurationError("SolverConfig.init must be set when ground truth is unknown")
        init_cfg = InitConfig.from_truth(truth)

    report = RunReport(solver=solver, meta=instance_meta(instance, r))
    t_start = _timer()
    init_inst = instance if splits is None else instance.rows(splits[0])
    ires = spectral_init(init_inst, r, init_cfg)
    report.init_ms = (_timer() - t_start) * 1e3
    report.alpha = ires.alpha
    report.truncation_fraction = ires.truncation_fraction
    report.init_degenerate = ires.degenerate
    if truth is not None:
        report.init_sd2 = sd2(truth.u_star, ires.u0)

    state = SolverState(u=ires.u0)
    sigma_init = float(ires.singular_values[0]) * cfg.init_sigma_scale
    eta_factor = 1.0
    best_obj = math.inf
    stale = 0
    eye = np.eye(r)
    report.stop_reason = "max_iters"

    try:
        for t in range(1, T + 1):
            t_iter = _timer()
            u = state.u
            data_b = data(t)
            data_g = data(T + t) if splits is not None else data_b
            b, resid = update_b(u, *data_b, return_residual=True)
            obj = float(np.sum(resid * resid))

            if cfg.eta_mode == "oracle":
                smax = truth.sigma_max
            elif cfg.eta_mode == "from-B":
                smax = float(np.linalg.norm(b, 2))
            else:
                smax = sigma_init
            if smax <= 0:
                raise SolverError(f"sigma_max estimate is zero at iteration {t}", iterate=u)
            eta = eta_factor * cfg.eta_scale / smax**2

            t_u = _timer()
            u_new, grad_norm = u_step(u, b, resid, data_g, eta, splits is None)
            u_ms = (_timer() - t_u) * 1e3
            if grad_norm is None:
                # exact U-step: no step size, gradient reported for diagnostics only
                grad_norm = float(np.linalg.norm(gradient_u(u, b, *data_g)))
                eta = 0.0

            ortho = float(np.abs(u_new.T @ u_new - eye).max())
            sd = frob_rel = None
            if truth is not None:
                sd = sd2(truth.u_star, u_new)
                frob_rel = frob_error(u @ b, truth.x_star)[1]
            change = sd2(u, u_new)
            state = SolverState(u=u_new, b=b, iter=t, history=state.history)
            state.history.append(IterationRecord(
                iter=t, sd2_to_truth=sd, frob_rel_err=frob_rel, grad_norm=grad_norm,
                eta_used=eta, wall_ms=(_timer() - t_iter) * 1e3, objective=obj,
                u_step_ms=u_ms, ortho_err=ortho))

            if not cfg.theory_mode:
                # an oscillating objective never rises monotonically, so count
                # iterations that fail to beat the best value so far
                stale = stale + 1 if obj > best_obj else 0
                if stale >= cfg.divergence_window:
                    eta_factor *= 0.5
                    stale = 0
                    log.info("%s: no objective decrease in %d iterations at t=%d; halving eta",
                             solver, cfg.divergence_window, t)
            best_obj = min(best_obj, obj)
            if change < cfg.tol:
                report.stop_reason = "converged"
                break
    except SolverError as exc:
        report.status = type(exc).__name__
        report.history = state.history
        report.total_ms = (_timer() - t_start) * 1e3
        exc.state, exc.report = state, report
        raise

    b_final = update_b(state.u, instance.matrices, instance.observations)
    state.b = b_final
    report.history = state.history
    if truth is not None:
        report.final = summarize(state.u, state.u @ b_final, truth)
    report.total_ms = (_timer() - t_start) * 1e3
    return state, report
