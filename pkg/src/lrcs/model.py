"""Synthetic low-rank column-wise sensing instances.

An instance is a rank-r matrix ``X* = U* B*`` (n x q) observed through q
independent Gaussian sketches ``y_k = A_k x*_k + n_k``, each of length m.

Randomness is drawn from per-purpose substreams of a single 64-bit seed, so
generating columns in any order (or in parallel) gives bitwise-identical
results.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "GroundTruth",
    "ProblemInstance",
    "IncoherenceReport",
    "generate_ground_truth",
    "measure",
    "incoherence",
    "nsr",
    "sigma_v_for_nsr",
    "save_instance",
    "load_instance",
]

# stream tags for SeedSequence spawn keys
_TAG_TRUTH = 0
_TAG_SENSING = 1
_TAG_NOISE = 2

ORTHO_TOL = 1e-10


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(key)))


def _orthonormalize(g):
    q, r = np.linalg.qr(g)
    s = np.sign(np.diag(r))
    s[s == 0] = 1.0
    return q * s


@dataclass(frozen=True)
class GroundTruth:
    u_star: np.ndarray
    sigma_star: np.ndarray
    v_star: np.ndarray
    b_star: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        u = np.asarray(self.u_star, dtype=float)
        s = np.asarray(self.sigma_star, dtype=float)
        v = np.asarray(self.v_star, dtype=float)
        if u.ndim != 2 or v.ndim != 2 or s.ndim != 1:
            raise ValueError("u_star, v_star must be matrices and sigma_star a vector")
        r = s.shape[0]
        if u.shape[1] != r or v.shape[1] != r:
            raise ValueError(f"rank mismatch: u_star {u.shape}, sigma_star {s.shape}, v_star {v.shape}")
        if r > min(u.shape[0], v.shape[0]):
            raise ValueError(f"r={r} exceeds min(n, q)={min(u.shape[0], v.shape[0])}")
        if np.any(s <= 0) or np.any(np.diff(s) > 0):
            raise ValueError("sigma_star must be positive and nonincreasing")
        eye = np.eye(r)
        if np.abs(u.T @ u - eye).max() > ORTHO_TOL or np.abs(v.T @ v - eye).max() > ORTHO_TOL:
            raise ValueError("u_star and v_star must have orthonormal columns")
        b = s[:, None] * v.T
        if self.b_star is not None and np.abs(np.asarray(self.b_star) - b).max() > 1e-12:
            raise ValueError("b_star is inconsistent with sigma_star and v_star")
        for name, arr in (("u_star", u), ("sigma_star", s), ("v_star", v), ("b_star", b)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self):
        return self.u_star.shape[0]

    @property
    def q(self):
        return self.v_star.shape[0]

    @property
    def r(self):
        return self.sigma_star.shape[0]

    @property
    def sigma_max(self):
        return float(self.sigma_star[0])

    @property
    def sigma_min(self):
        return float(self.sigma_star[-1])

    @property
    def kappa(self):
        return self.sigma_max / self.sigma_min

    @property
    def x_star(self):
        return self.u_star @ self.b_star


@dataclass(frozen=True)
class ProblemInstance:
    """Measurements of one LRCS problem.

    ``matrices[k]`` is the m x n sketch ``A_k`` of column k and
    ``observations[k]`` the length-m vector ``y_k``. Both are kept as
    (q, m, n) and (q, m) arrays indexed by column; they are never flattened
    into a single mq x n design.
    """

    matrices: np.ndarray
    observations: np.ndarray
    sigma_v: float = 0.0
    seed: int | None = None
    truth: GroundTruth | None = None

    def __post_init__(self):
        a = np.asarray(self.matrices, dtype=float)
        y = np.asarray(self.observations, dtype=float)
        if a.ndim != 3:
            raise ValueError("matrices must have shape (q, m, n)")
        if y.shape != a.shape[:2]:
            raise ValueError(f"observations shape {y.shape} does not match (q, m)={a.shape[:2]}")
        if self.sigma_v < 0:
            raise ValueError("sigma_v must be nonnegative")
        if self.truth is not None and (self.truth.n, self.truth.q) != (a.shape[2], a.shape[0]):
            raise ValueError("truth dimensions do not match the measurement ensemble")
        a.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "matrices", a)
        object.__setattr__(self, "observations", y)

    @property
    def q(self):
        return self.matrices.shape[0]

    @property
    def m(self):
        return self.matrices.shape[1]

    @property
    def n(self):
        return self.matrices.shape[2]

    def rows(self, index):
        """Sub-instance keeping only measurement rows ``index`` of every column."""
        return ProblemInstance(self.matrices[:, index, :], self.observations[:, index],
                               self.sigma_v, self.seed, self.truth)

    def permute_columns(self, perm):
        perm = np.asarray(perm)
        truth = None
        if self.truth is not None:
            t = self.truth
            truth = GroundTruth(t.u_star, t.sigma_star, t.v_star[perm])
        return ProblemInstance(self.matrices[perm], self.observations[perm],
                               self.sigma_v, self.seed, truth)

    def scaled(self, s):
        """Same sketches with observations, noise level and truth scaled by s > 0."""
        truth = None
        if self.truth is not None:
            t = self.truth
            truth = GroundTruth(t.u_star, t.sigma_star * s, t.v_star)
        return ProblemInstance(self.matrices, self.observations * s,
                               self.sigma_v * s, self.seed, truth)


@dataclass(frozen=True)
class IncoherenceReport:
    mu: float
    kappa: float
    max_col_norm: float
    within_bound: bool = True


def generate_ground_truth(n, q, r, kappa_target=1.0, seed=0):
    """Planted rank-r matrix with ``sigma_max / sigma_min == kappa_target``.

    Singular values are log-linearly spaced from ``kappa_target`` down to 1.
    """
    if min(n, q, r) < 1:
        raise ValueError("n, q, r must be positive")
    if r > min(n, q):
        raise ValueError(f"rank r={r} exceeds min(n, q)={min(n, q)}")
    if not kappa_target >= 1:
        raise ValueError("kappa_target must be >= 1")
    rng = _rng(seed, _TAG_TRUTH)
    u = _orthonormalize(rng.standard_normal((n, r)))
    v = _orthonormalize(rng.standard_normal((q, r)))
    if r == 1:
        sigma = np.array([float(kappa_target)])
    else:
        sigma = np.exp(np.linspace(np.log(kappa_target), 0.0, r))
        sigma[0], sigma[-1] = kappa_target, 1.0
    return GroundTruth(u, sigma, v)


def measure(truth, m, sigma_v=0.0, seed=0):
    """Draw Gaussian sketches and noisy observations of every column of ``truth``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if sigma_v < 0:
        raise ValueError("sigma_v must be nonnegative")
    x = truth.x_star
    a = np.empty((truth.q, m, truth.n))
    y = np.empty((truth.q, m))
    for k in range(truth.q):
        a[k] = _rng(seed, _TAG_SENSING, k).standard_normal((m, truth.n))
        y[k] = a[k] @ x[:, k]
        if sigma_v > 0:
            y[k] += sigma_v * _rng(seed, _TAG_NOISE, k).standard_normal(m)
    return ProblemInstance(a, y, float(sigma_v), int(seed), truth)


def incoherence(truth, mu_bound=None):
    col_norms = np.linalg.norm(truth.b_star, axis=0)
    max_col = float(col_norms.max())
    mu = max_col * np.sqrt(truth.q / truth.r) / truth.sigma_max
    ok = True if mu_bound is None else bool(mu <= mu_bound)
    return IncoherenceReport(float(mu), truth.kappa, max_col, ok)


def nsr(truth, sigma_v):
    """Noise-to-signal ratio ``q sigma_v^2 / sigma_min^2``."""
    return truth.q * sigma_v**2 / truth.sigma_min**2


def sigma_v_for_nsr(truth, target_nsr):
    return float(np.sqrt(target_nsr * truth.sigma_min**2 / truth.q))


# ---------------------------------------------------------------------------
# on-disk layout
#
#   meta.json          n, q, r, m, sigma_v, seed, mu, kappa (+ format tag)
#   A_<k>.bin          m x n, column-major, little-endian float64
#   y_<k>.bin          m values, little-endian float64
#   Ustar.bin          n x r, column-major   (only when truth is known)
#   Bstar.bin          r x q, column-major   (only when truth is known)
#   sigmastar.bin      r values              (only when truth is known)
# ---------------------------------------------------------------------------

FORMAT_TAG = "lrcs-instance/1"
_F64 = np.dtype("<f8")


def _write(path, arr):
    np.asarray(arr, dtype=_F64).ravel(order="F").tofile(path)


def _read(path, shape):
    flat = np.fromfile(path, dtype=_F64)
    if flat.size != int(np.prod(shape)):
        raise ValueError(f"{path}: expected {int(np.prod(shape))} values, found {flat.size}")
    return flat.reshape(shape, order="F").astype(float)


def save_instance(instance, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": FORMAT_TAG,
        "n": instance.n,
        "q": instance.q,
        "m": instance.m,
        "sigma_v": instance.sigma_v,
        "seed": instance.seed,
        "r": None,
        "mu": None,
        "kappa": None,
    }
    for k in range(instance.q):
        _write(d / f"A_{k}.bin", instance.matrices[k])
        _write(d / f"y_{k}.bin", instance.observations[k])
    t = instance.truth
    if t is not None:
        rep = incoherence(t)
        meta.update(r=t.r, mu=rep.mu, kappa=rep.kappa)
        _write(d / "Ustar.bin", t.u_star)
        _write(d / "Bstar.bin", t.b_star)
        _write(d / "sigmastar.bin", t.sigma_star)
    with open(d / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return d


def load_instance(directory):
    d = Path(directory)
    with open(d / "meta.json") as fh:
        meta = json.load(fh)
    n, q, m = meta["n"], meta["q"], meta["m"]
    a = np.stack([_read(d / f"A_{k}.bin", (m, n)) for k in range(q)])
    y = np.stack([_read(d / f"y_{k}.bin", (m,)) for k in range(q)])
    truth = None
    if meta.get("r") is not None and os.path.exists(d / "Ustar.bin"):
        r = meta["r"]
        u = _read(d / "Ustar.bin", (n, r))
        b = _read(d / "Bstar.bin", (r, q))
        sigma = _read(d / "sigmastar.bin", (r,))
        truth = GroundTruth(u, sigma, (b / sigma[:, None]).T)
    return ProblemInstance(a, y, float(meta["sigma_v"]), meta["seed"], truth)
