"""Structure tensor and the anisotropic metric derived from it.

The metric keeps unit length along edges and stretches distances across
them: with normalised eigenvalues l1 >= l2 of the smoothed structure tensor,

    T = I + kappa * l1 / (l1 + l2 + eps) * e1 e1^T

which is the eigen-reassembly ``[e1 e2] diag(1 + kappa*l1/(l1+l2+eps), 1) [e1 e2]^T``
written so that kappa = 0 or a flat region gives the identity exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .core import GrayImage, bilinear

EPS = 1e-8


def gradient(img: GrayImage):
    """Central differences inside, one-sided at the borders.  Returns (gx, gy)."""
    data = img.data
    if data.shape[0] < 2 or data.shape[1] < 2:
        raise ValueError("gradient needs an image of at least 2x2 pixels")
    gy, gx = np.gradient(data)
    return gx, gy


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur; the kernel is renormalised where it hangs off the border."""
    arr = np.asarray(arr, dtype=np.float64)
    if sigma <= 0:
        return arr.copy()
    k = gaussian_kernel(sigma)
    ones = np.ones_like(arr)
    num = correlate1d(correlate1d(arr, k, axis=0, mode="constant"), k, axis=1, mode="constant")
    den = correlate1d(correlate1d(ones, k, axis=0, mode="constant"), k, axis=1, mode="constant")
    return num / den


def structure_tensor(img: GrayImage, sigma: float):
    """Gaussian-smoothed gradient outer product, returned as (s11, s12, s22)."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    gx, gy = gradient(img)
    return (gaussian_smooth(gx * gx, sigma),
            gaussian_smooth(gx * gy, sigma),
            gaussian_smooth(gy * gy, sigma))


def eigen2(s11, s12, s22):
    """Closed-form eigen-decomposition of symmetric 2x2 matrices.

    Returns (l1, l2, e1x, e1y) with l1 >= l2; e1 is the dominant direction
    (the edge normal for a structure tensor) and e2 = (-e1y, e1x).
    """
    s11, s12, s22 = (np.asarray(a, dtype=np.float64) for a in (s11, s12, s22))
    half_trace = 0.5 * (s11 + s22)
    half_diff = 0.5 * (s11 - s22)
    root = np.hypot(half_diff, s12)
    theta = 0.5 * np.arctan2(2.0 * s12, s11 - s22)
    return half_trace + root, half_trace - root, np.cos(theta), np.sin(theta)


def condition(l1, l2, kappa: float):
    """Normalised eigenvalues (lhat1, lhat2): lhat2 is fixed at 1."""
    l1 = np.maximum(l1, 0.0)
    l2 = np.maximum(l2, 0.0)
    lhat1 = 1.0 + kappa * (l1 / (l1 + l2 + EPS))
    return lhat1, np.ones_like(lhat1)


def metric_at(s11, s12, s22, kappa: float = 9.0):
    """Metric entries (t11, t12, t22) from raw structure-tensor entries."""
    l1, l2, ex, ey = eigen2(s11, s12, s22)
    lhat1, _ = condition(l1, l2, kappa)
    stretch = lhat1 - 1.0
    return 1.0 + stretch * ex * ex, stretch * ex * ey, 1.0 + stretch * ey * ey


def anisotropic_dist2(p, q, T) -> float:
    """(p - q)^T T (p - q) for a metric given as (t11, t12, t22)."""
    dx = float(p[0]) - float(q[0])
    dy = float(p[1]) - float(q[1])
    t11, t12, t22 = T
    return metric_dist2(dx, dy, t11, t12, t22)


def metric_dist2(dx, dy, t11, t12, t22):
    # with T = I this evaluates to dx*dx + dy*dy bit for bit
    return (t11 * dx * dx + 2.0 * t12 * dx * dy) + t22 * dy * dy


def euclidean_dist2(dx, dy):
    return dx * dx + dy * dy


@dataclass(frozen=True, eq=False)
class TensorField:
    """Per-pixel metric entries over an image frame."""

    t11: np.ndarray
    t12: np.ndarray
    t22: np.ndarray
    sigma: float = 1.5
    kappa: float = 9.0

    @classmethod
    def from_image(cls, img: GrayImage, sigma: float = 1.5, kappa: float = 9.0) -> "TensorField":
        s11, s12, s22 = structure_tensor(img, sigma)
        t11, t12, t22 = metric_at(s11, s12, s22, kappa)
        return cls(t11, t12, t22, sigma, kappa)

    @classmethod
    def identity(cls, width: int, height: int) -> "TensorField":
        one = np.ones((height, width))
        return cls(one, np.zeros_like(one), one.copy(), 0.0, 0.0)

    @property
    def width(self) -> int:
        return self.t11.shape[1]

    @property
    def height(self) -> int:
        return self.t11.shape[0]

    def sample(self, xs, ys):
        """Bilinear samples of the entries at arbitrary frame coordinates."""
        return (bilinear(self.t11, xs, ys), bilinear(self.t12, xs, ys),
                bilinear(self.t22, xs, ys))
