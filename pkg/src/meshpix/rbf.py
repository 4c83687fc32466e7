"""Radial kernels and small dense interpolation systems.

Systems are tiny (a triangle's neighbourhood, rarely more than ~30
centres) but there is one per triangle, so the LU factorisation below is
batched: ``A`` may carry any number of leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import MeshpixError
from .tensor import euclidean_dist2, metric_dist2

KERNELS = ("gaussian", "mq", "imq", "tps")
PIVOT_RATIO_MIN = 1e-12
TIKHONOV_SCALE = 1e-8


class SingularSystemError(MeshpixError, ArithmeticError):
    pass


@dataclass(frozen=True)
class Kernel:
    kind: str = "mq"
    c: float = 0.5

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}; expected one of {KERNELS}")
        if self.kind != "tps" and not self.c > 0:
            raise ValueError(f"shape parameter must be > 0 for {self.kind}, got {self.c}")

    def __call__(self, r2):
        return kernel_eval(self, r2)


def kernel_eval(k: Kernel, r2):
    """phi evaluated from the squared distance ``r2``."""
    r2 = np.asarray(r2, dtype=np.float64)
    if k.kind == "gaussian":
        return np.exp(-(k.c * k.c) * r2)
    if k.kind == "mq":
        return np.sqrt(r2 + k.c * k.c)
    if k.kind == "imq":
        return 1.0 / np.sqrt(r2 + k.c * k.c)
    # r^2 ln r = 0.5 * r^2 ln r^2, with the r -> 0 limit of 0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 0.5 * r2 * np.log(r2)
    return np.where(r2 > 0, out, 0.0)


def metric(T) -> Callable:
    """Squared-distance functional for a fixed metric (t11, t12, t22)."""
    t11, t12, t22 = T
    return lambda dx, dy: metric_dist2(dx, dy, t11, t12, t22)


def pairwise_dist2(a, b, dist2=euclidean_dist2):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    dx = a[..., :, None, 0] - b[..., None, :, 0]
    dy = a[..., :, None, 1] - b[..., None, :, 1]
    return dist2(dx, dy)


def assemble(centers, values, kernel: Kernel, dist2=euclidean_dist2):
    """Interpolation matrix ``A[j, i] = phi(dist2(x_j - x_i))`` and right-hand side."""
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if len(centers) == 0 or len(centers) != len(values):
        raise ValueError("need N >= 1 centres and exactly one value per centre")
    return kernel_eval(kernel, pairwise_dist2(centers, centers, dist2)), values.copy()


# ------------------------------------------------------------------ solving

def lu_factor(A):
    """Batched LU with partial pivoting.

    Returns (LU, perm, pivots) where ``perm`` is the row permutation and
    ``pivots`` the diagonal of U.  Zero pivots are left in place.
    """
    LU = np.array(A, dtype=np.float64, copy=True)
    n = LU.shape[-1]
    batch = LU.shape[:-2]
    LU = LU.reshape(-1, n, n)
    m = LU.shape[0]
    perm = np.tile(np.arange(n), (m, 1))
    rows = np.arange(m)
    for k in range(n):
        p = k + np.argmax(np.abs(LU[:, k:, k]), axis=1)
        swap = p != k
        if swap.any():
            r = rows[swap]
            LU[r, k], LU[r, p[swap]] = LU[r, p[swap]], LU[r, k].copy()
            perm[r, k], perm[r, p[swap]] = perm[r, p[swap]], perm[r, k].copy()
        piv = LU[:, k, k]
        if k + 1 < n:
            safe = np.where(piv != 0.0, piv, 1.0)
            mult = LU[:, k + 1:, k] / safe[:, None]
            mult[piv == 0.0] = 0.0
            LU[:, k + 1:, k] = mult
            LU[:, k + 1:, k + 1:] -= mult[:, :, None] * LU[:, k, None, k + 1:]
    pivots = np.diagonal(LU, axis1=1, axis2=2).copy()
    return LU.reshape(batch + (n, n)), perm.reshape(batch + (n,)), pivots.reshape(batch + (n,))


def lu_solve(LU, perm, b):
    LU = np.asarray(LU)
    n = LU.shape[-1]
    batch = LU.shape[:-2]
    LU = LU.reshape(-1, n, n)
    perm = np.asarray(perm).reshape(-1, n)
    x = np.take_along_axis(np.asarray(b, dtype=np.float64).reshape(-1, n), perm, axis=1)
    for i in range(1, n):
        x[:, i] -= np.einsum("bj,bj->b", LU[:, i, :i], x[:, :i])
    for i in range(n - 1, -1, -1):
        if i + 1 < n:
            x[:, i] -= np.einsum("bj,bj->b", LU[:, i, i + 1:], x[:, i + 1:])
        x[:, i] /= LU[:, i, i]
    return x.reshape(batch + (n,))


def _pivot_ratio(pivots):
    mag = np.abs(pivots)
    top = mag.max(axis=-1)
    low = mag.min(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(top > 0, low / top, 0.0)
    return np.where(np.isfinite(ratio), ratio, 0.0)


def tikhonov_shift(A):
    """mu = 1e-8 * trace(A) / N; falls back to 1e-8 * max|A_ij| when the
    trace vanishes (TPS matrices have a zero diagonal)."""
    n = A.shape[-1]
    mu = TIKHONOV_SCALE * np.trace(A, axis1=-2, axis2=-1) / n
    alt = TIKHONOV_SCALE * np.abs(A).max(axis=(-2, -1))
    return np.where(mu > 0, mu, alt)


def solve_batch(A, f):
    """Solve a stack of systems.  Returns (weights, regularized, failed)."""
    A = np.asarray(A, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    n = A.shape[-1]
    LU, perm, piv = lu_factor(A)
    regularized = _pivot_ratio(piv) < PIVOT_RATIO_MIN
    if regularized.any():
        Ar = A[regularized] + tikhonov_shift(A[regularized])[:, None, None] * np.eye(n)
        LU_r, perm_r, piv_r = lu_factor(Ar)
        LU[regularized], perm[regularized], piv[regularized] = LU_r, perm_r, piv_r
    failed = np.any((piv == 0.0) | ~np.isfinite(piv), axis=-1)
    if failed.any():
        # swap in a harmless identity so the solve stays warning-free
        LU[failed] = np.eye(n)
        perm[failed] = np.arange(n)
    w = lu_solve(LU, perm, f)
    w[failed] = 0.0
    return w, regularized, failed


def solve(A, f):
    """Solve one system.  Returns (weights, regularized)."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if not np.all(np.isfinite(A)):
        raise ValueError("A has non-finite entries")
    w, reg, failed = solve_batch(A[None], np.asarray(f, dtype=np.float64)[None])
    if failed[0]:
        raise SingularSystemError("matrix is singular even after regularization")
    return w[0], bool(reg[0])


# --------------------------------------------------------------- interpolant

@dataclass
class RbfSystem:
    """A solved local interpolation problem."""

    centers: np.ndarray
    values: np.ndarray
    kernel: Kernel
    dist2: Callable = euclidean_dist2
    weights: np.ndarray = field(default=None)
    regularized: bool = False

    @classmethod
    def fit(cls, centers, values, kernel: Kernel, dist2=euclidean_dist2) -> "RbfSystem":
        A, rhs = assemble(centers, values, kernel, dist2)
        w, reg = solve(A, rhs)
        return cls(np.asarray(centers, dtype=np.float64).reshape(-1, 2), rhs, kernel,
                   dist2, w, reg)

    def __call__(self, x, dist2=None):
        return evaluate(self, x, dist2)


def evaluate(system: RbfSystem, x, dist2=None):
    """sum_i w_i phi(dist2(x - x_i)); ``x`` may be one point or an (M, 2) array."""
    if system.weights is None:
        raise ValueError("system has not been solved")
    dist2 = dist2 or system.dist2
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x.reshape(-1, 2)
    phi = kernel_eval(system.kernel, pairwise_dist2(pts, system.centers, dist2))
    out = phi @ system.weights
    return float(out[0]) if single else out
