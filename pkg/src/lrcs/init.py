"""Truncated spectral initialization and the expectation of its data matrix.

Given measurements of every column, the initial data matrix is

    X0[:, k] = (1/m) A_k^T trunc(y_k, alpha)

where ``trunc`` zeroes entries with ``|y_ik| > sqrt(alpha)``. The initial
basis is its top-r left singular subspace. Conditioned on alpha the mean of
X0 is ``X* D(alpha)`` with ``D`` diagonal; ``expected_x0`` evaluates it in
closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .model import incoherence

__all__ = [
    "InitConfig",
    "InitResult",
    "compute_alpha",
    "truncate",
    "assemble_x0",
    "spectral_init",
    "truncated_second_moment",
    "expected_x0",
    "fix_signs",
]


@dataclass(frozen=True)
class InitConfig:
    """Truncation constants.

    ``c_tilde`` defaults to ``9 kappa^2 mu^2``. Pass ``c_tilde=np.inf`` to
    disable truncation.
    """

    kappa: float = 1.0
    mu: float = 1.0
    c_tilde: float | None = None

    def __post_init__(self):
        if self.c_tilde is None:
            object.__setattr__(self, "c_tilde", 9.0 * self.kappa**2 * self.mu**2)
        if not self.c_tilde > 0:
            raise ValueError("c_tilde must be positive")

    @classmethod
    def from_truth(cls, truth):
        rep = incoherence(truth)
        return cls(kappa=rep.kappa, mu=rep.mu)


@dataclass(frozen=True)
class InitResult:
    u0: np.ndarray
    alpha: float
    truncation_fraction: float
    singular_values: np.ndarray
    x0: np.ndarray | None = None
    degenerate: bool = False


def compute_alpha(instance, cfg):
    y = instance.observations
    if y.size == 0:
        raise ValueError("instance has no measurements")
    mean_sq = float(np.sum(y * y)) / y.size
    if np.isinf(cfg.c_tilde):
        return np.inf
    return cfg.c_tilde * mean_sq


def truncate(y, alpha):
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    y = np.asarray(y, dtype=float)
    return np.where(np.abs(y) <= np.sqrt(alpha), y, 0.0)


def assemble_x0(matrices, observations, alpha):
    """X0 columns ``(1/m) A_k^T trunc(y_k)``; leading batch axes are allowed.

    ``matrices`` has shape (..., q, m, n) and ``observations`` (..., q, m).
    Returns an array of shape (..., n, q).
    """
    m = matrices.shape[-2]
    yt = truncate(observations, alpha)
    return np.einsum("...kmn,...km->...nk", matrices, yt) / m


def fix_signs(u):
    """Flip columns so each one's largest-magnitude entry is nonnegative."""
    u = np.array(u, dtype=float)
    idx = np.argmax(np.abs(u), axis=0)
    s = np.sign(u[idx, np.arange(u.shape[1])])
    s[s == 0] = 1.0
    return u * s


def spectral_init(instance, r, cfg=None, keep_x0=False):
    n, q = instance.n, instance.q
    if not 1 <= r <= min(n, q):
        raise ValueError(f"rank r={r} must lie in [1, min(n, q)={min(n, q)}]")
    if cfg is None:
        if instance.truth is None:
            raise ValueError("InitConfig required when ground truth is unavailable")
        cfg = InitConfig.from_truth(instance.truth)

    alpha = compute_alpha(instance, cfg)
    y = instance.observations
    frac = float(np.mean(np.abs(y) > np.sqrt(alpha)))
    x0 = assemble_x0(instance.matrices, y, alpha)
    try:
        u, s, _ = np.linalg.svd(x0, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"SVD of initial matrix failed (n={n}, q={q}, alpha={alpha:.3g}, "
            f"finite={np.isfinite(x0).all()})") from exc
    # numpy returns an orthonormal basis even for a rank-deficient x0, so the
    # trailing columns already complete the computed singular vectors
    degenerate = bool(s[r - 1] <= s[0] * 1e-12) if s[0] > 0 else True
    u0 = fix_signs(u[:, :r])
    return InitResult(u0, float(alpha), frac, s[:r].copy(),
                      x0 if keep_x0 else None, degenerate)


def truncated_second_moment(gamma):
    """``E[z^2 1{|z| <= gamma}]`` for a standard Gaussian z."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("gamma must be nonnegative")
    with np.errstate(over="ignore", invalid="ignore"):
        val = erf(gamma / np.sqrt(2.0)) - gamma * np.sqrt(2.0 / np.pi) * np.exp(-0.5 * gamma**2)
    val = np.where(np.isinf(gamma), 1.0, val)
    return float(val) if val.ndim == 0 else val


def expected_x0(truth, sigma_v, alpha):
    x = truth.x_star
    scale = np.sqrt(np.sum(x * x, axis=0) + sigma_v**2)
    with np.errstate(divide="ignore"):
        gamma = np.where(scale > 0, np.sqrt(alpha) / scale, np.inf)
    return x * truncated_second_moment(gamma)
