"""Error measures between estimates and the planted solution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ErrorSummary", "sd2", "frob_error", "summarize", "ORTHO_INPUT_TOL"]

ORTHO_INPUT_TOL = 1e-6


@dataclass(frozen=True)
class ErrorSummary:
    sd2: float
    frob_rel: float
    frob_abs: float


def _check_orthonormal(u, name):
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.ndim != 2:
        raise ValueError(f"{name} must be a matrix")
    dev = np.abs(u.T @ u - np.eye(u.shape[1])).max()
    if dev > ORTHO_INPUT_TOL:
        raise ValueError(f"{name} is not orthonormal (max |U^T U - I| = {dev:.3g}); QR it first")
    return u


def sd2(u1, u2):
    """Subspace distance ``||(I - U1 U1^T) U2||_2``.

    Both bases must have orthonormal columns. The n x n projector is never
    formed. Note that the Frobenius version satisfies ``SE_F <= sqrt(r) * SD2``.
    """
    u1 = _check_orthonormal(u1, "u1")
    u2 = _check_orthonormal(u2, "u2")
    if u1.shape[0] != u2.shape[0]:
        raise ValueError(f"ambient dimensions differ: {u1.shape[0]} vs {u2.shape[0]}")
    resid = u2 - u1 @ (u1.T @ u2)
    return float(np.linalg.norm(resid, 2))


def frob_error(x_hat, x_star):
    """Absolute and relative Frobenius error; the relative one divides by ``||X*||_2``."""
    x_hat = np.asarray(x_hat, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    if x_hat.shape != x_star.shape:
        raise ValueError(f"shape mismatch: {x_hat.shape} vs {x_star.shape}")
    frob_abs = float(np.linalg.norm(x_hat - x_star))
    scale = float(np.linalg.norm(x_star, 2))
    frob_rel = frob_abs / scale if scale > 0 else float("inf") if frob_abs > 0 else 0.0
    return frob_abs, frob_rel


def summarize(u_hat, x_hat, truth):
    frob_abs, frob_rel = frob_error(x_hat, truth.x_star)
    return ErrorSummary(sd2(truth.u_star, u_hat), frob_rel, frob_abs)
