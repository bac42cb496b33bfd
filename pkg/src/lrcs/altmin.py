"""AltMin baseline: exact least squares in both B and U.

The U-step minimizes ``sum_k ||y_k - A_k U b_k||^2`` over all n*r entries of U
at once. With U vectorized column-major (``vec(U)[j*n + i] = U[i, j]``),
measurement row i of column k contributes the coefficient row
``kron(b_k, a_ik)``, so the normal matrix is

    M = sum_k kron(b_k b_k^T, A_k^T A_k)         (nr x nr)

and the right-hand side is ``vec(sum_k A_k^T y_k b_k^T)``.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from .errors import ConfigurationError, RankDeficientError
from .gdmin import drive, qr_positive

__all__ = ["solve_u_least_squares", "update_u_full_ls", "run_altmin", "MAX_CONDITION"]

MAX_CONDITION = 1e12


def solve_u_least_squares(b, matrices, observations):
    """Unnormalized minimizer over U for fixed B."""
    q, m, n = matrices.shape
    r = b.shape[0]
    gram = np.einsum("kmi,kmj->kij", matrices, matrices)
    bt = b.T
    normal = np.einsum("ka,kc,kij->aicj", bt, bt, gram).reshape(n * r, n * r)
    rhs = np.einsum("kmn,km,ka->an", matrices, observations, bt).reshape(n * r)

    evals = np.linalg.eigvalsh(normal)
    top = evals[-1]
    if top <= 0 or evals[0] <= top / MAX_CONDITION:
        cond = np.inf if evals[0] <= 0 else top / evals[0]
        raise RankDeficientError(
            f"U-step normal matrix (dimension nr={n * r}) is singular or ill-conditioned "
            f"(condition {cond:.3g} > {MAX_CONDITION:.0e})", dimension=n * r)
    vec_u = linalg.solve(normal, rhs, assume_a="pos")
    # rhs was built with index a*n + i, i.e. column-major vec(U)
    return vec_u.reshape(r, n).T


def update_u_full_ls(b, matrices, observations):
    return qr_positive(solve_u_least_squares(b, matrices, observations))


def _altmin_u_step(u, b, resid, data_g, eta, same_data):
    matrices, observations = data_g
    u_new = update_u_full_ls(b, matrices, observations)
    return u_new, None


def run_altmin(instance, cfg):
    """AltMin from the same spectral initialization as :func:`lrcs.gdmin.run`."""
    cfg.validate()
    if instance.m * instance.q < instance.n * cfg.r:
        raise ConfigurationError(
            f"AltMin needs mq >= nr; got mq={instance.m * instance.q}, nr={instance.n * cfg.r}")
    return drive(instance, cfg, _altmin_u_step, "altmin")
