"""Decoder: per-triangle local RBF systems evaluated at every output pixel.

Each triangle owns one small interpolation problem whose centres are the
centroids of its support triangles.  Weights are solved once per triangle,
with the anisotropic metric taken at the triangle's centroid.  Pixels are
evaluated with that same metric (``metric_point="centroid"``, the default)
or with the metric sampled at the pixel itself (``"pixel"``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cdt import locate_grid, vertex_triangles
from .core import GrayImage, TriMesh, bilinear
from .rbf import KERNELS, Kernel, kernel_eval, pairwise_dist2, solve_batch
from .tensor import TensorField, euclidean_dist2, metric_dist2

METHODS = ("piecewise", "vertex_iso_rbf", "triangle_iso_rbf", "triangle_arbf")
SUPPORTS = ("one_ring", "knn")
METRIC_POINTS = ("pixel", "centroid")
DEFAULT_SHAPE = {"gaussian": 0.5, "mq": 0.5, "imq": 1.8, "tps": 1.0}
_CHUNK = 1 << 15


@dataclass
class RestoreConfig:
    method: str = "triangle_arbf"
    kernel: str = "mq"
    c: float | None = None          # None picks the kernel's default shape
    scale: float = 1.0
    support: str = "one_ring"
    knn_k: int = 12
    metric_point: str = "centroid"

    def validate(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}; expected one of {KERNELS}")
        if not self.scale >= 1:
            raise ValueError("scale must be >= 1")
        if self.support not in SUPPORTS:
            raise ValueError(f"unknown support {self.support!r}")
        if self.knn_k < 1:
            raise ValueError("knn_k must be >= 1")
        if self.metric_point not in METRIC_POINTS:
            raise ValueError(f"unknown metric point {self.metric_point!r}")
        self.make_kernel()
        return self

    @property
    def shape_c(self) -> float:
        return DEFAULT_SHAPE[self.kernel] if self.c is None else float(self.c)

    def make_kernel(self) -> Kernel:
        return Kernel(self.kernel, self.shape_c)


@dataclass(frozen=True)
class Neighborhood:
    triangle: int
    support: tuple[int, ...]


@dataclass
class LocalSystems:
    """Solved systems, padded to a common width.

    ``support[t, :size[t]]`` are centre indices (triangles, or vertices for
    the vertex baseline); padding repeats the first centre with zero weight.
    """

    centers: np.ndarray      # (K, 2) coordinates the indices refer to
    support: np.ndarray      # (T, W)
    size: np.ndarray         # (T,)
    weights: np.ndarray      # (T, W)
    metric: np.ndarray       # (T, 3) t11, t12, t22 used in the solve
    regularized: np.ndarray  # (T,) bool
    failed: np.ndarray       # (T,) bool

    @property
    def n_solves(self) -> int:
        return len(self.size)


@dataclass
class RestoreResult:
    image: GrayImage
    triangle_map: np.ndarray
    regularized_systems: int = 0
    fallback_triangles: int = 0
    n_solves: int = 0


# ----------------------------------------------------------- encoder side

def center_intensities(img: GrayImage, mesh: TriMesh) -> np.ndarray:
    """Mean source intensity of the pixel centres inside each triangle.

    Triangles that own no pixel centre get a bilinear sample at the centroid.
    """
    tri = locate_grid(mesh, np.arange(img.width, dtype=float), np.arange(img.height, dtype=float))
    inside = tri >= 0
    T = mesh.n_triangles
    sums = np.bincount(tri[inside], weights=img.data[inside], minlength=T)
    counts = np.bincount(tri[inside], minlength=T)
    out = np.empty(T)
    has = counts > 0
    out[has] = sums[has] / counts[has]
    if not has.all():
        c = mesh.centers[~has]
        out[~has] = bilinear(img.data, c[:, 0], c[:, 1])
    return out


def vertex_intensities(img: GrayImage, mesh: TriMesh) -> np.ndarray:
    """Point samples of the source at the vertices (bilinear)."""
    return bilinear(img.data, mesh.vertices[:, 0], mesh.vertices[:, 1])


def vertex_values_from_centers(mesh: TriMesh) -> np.ndarray:
    """Vertex values estimated as the mean of incident triangle intensities."""
    vt = vertex_triangles(mesh)
    ci = mesh.center_intensity
    return np.array([ci[ts].mean() if ts else 0.0 for ts in vt])


# ------------------------------------------------------------ supports

def find_neighbors(mesh: TriMesh, support: str = "one_ring", k: int = 12) -> list[Neighborhood]:
    """Support of each triangle: itself plus every triangle sharing a vertex
    (``one_ring``), or its ``k`` nearest triangle centroids (``knn``)."""
    T = mesh.n_triangles
    if support == "knn":
        centers = mesh.centers
        kk = min(k, T)
        _, idx = cKDTree(centers).query(centers, k=kk)
        idx = np.asarray(idx).reshape(T, kk)
        out = []
        for t in range(T):
            s = set(idx[t].tolist())
            s.add(t)
            out.append(Neighborhood(t, tuple(sorted(s))))
        return out
    if support != "one_ring":
        raise ValueError(f"unknown support {support!r}")
    vt = vertex_triangles(mesh)
    out = []
    for t, tri in enumerate(mesh.triangles.tolist()):
        s = set(vt[tri[0]]) | set(vt[tri[1]]) | set(vt[tri[2]])
        out.append(Neighborhood(t, tuple(sorted(s))))
    return out


def _pad(lists) -> tuple[np.ndarray, np.ndarray]:
    size = np.array([len(s) for s in lists], dtype=np.int64)
    width = int(size.max()) if len(size) else 1
    out = np.empty((len(lists), width), dtype=np.int64)
    for t, s in enumerate(lists):
        out[t, :len(s)] = s
        out[t, len(s):] = s[0]
    return out, size


# -------------------------------------------------------------- solving

def _solve_padded(centers, values, support, size, kernel: Kernel, metric):
    """Solve every system, grouping equal sizes into batched LU calls."""
    T, W = support.shape
    weights = np.zeros((T, W))
    regularized = np.zeros(T, dtype=bool)
    failed = np.zeros(T, dtype=bool)
    for n in np.unique(size):
        rows = np.nonzero(size == n)[0]
        idx = support[rows, :n]
        pts = centers[idx]                       # (G, n, 2)
        if metric is None:
            d2 = pairwise_dist2(pts, pts, euclidean_dist2)
        else:
            m = metric[rows][:, None, None, :]
            d2 = pairwise_dist2(pts, pts, lambda dx, dy: metric_dist2(
                dx, dy, m[..., 0], m[..., 1], m[..., 2]))
        A = kernel_eval(kernel, d2)
        w, reg, bad = solve_batch(A, values[idx])
        weights[rows, :n] = w
        regularized[rows] = reg
        failed[rows] = bad
    return weights, regularized, failed


def solve_all_local_systems(mesh: TriMesh, neighborhoods, tensor: TensorField | None,
                            cfg: RestoreConfig, vertex_values=None) -> LocalSystems:
    """One solve per triangle for the configured method."""
    kernel = cfg.make_kernel()
    T = mesh.n_triangles
    identity = np.tile([1.0, 0.0, 1.0], (T, 1))
    if cfg.method == "vertex_iso_rbf":
        if vertex_values is None:
            raise ValueError("vertex_iso_rbf needs vertex intensities")
        support = mesh.triangles.astype(np.int64)
        size = np.full(T, 3, dtype=np.int64)
        values = np.asarray(vertex_values, dtype=np.float64)
        w, reg, bad = _solve_padded(mesh.vertices, values, support, size, kernel, None)
        return LocalSystems(mesh.vertices, support, size, w, identity, reg, bad)

    if mesh.center_intensity.size != T:
        raise ValueError("mesh carries no centre intensities")
    support, size = _pad([n.support for n in neighborhoods])
    centers = mesh.centers
    values = mesh.center_intensity
    if cfg.method == "triangle_arbf":
        if tensor is None:
            raise ValueError("triangle_arbf needs a tensor field")
        metric = np.column_stack(tensor.sample(centers[:, 0], centers[:, 1]))
        w, reg, bad = _solve_padded(centers, values, support, size, kernel, metric)
    else:
        metric = identity
        w, reg, bad = _solve_padded(centers, values, support, size, kernel, None)
    return LocalSystems(centers, support, size, w, metric, reg, bad)


# ------------------------------------------------------------ evaluation

def output_coordinates(n_out: int, n_in: int) -> np.ndarray:
    """Mesh-frame coordinates of output pixel centres along one axis."""
    s = n_out / n_in
    x = (np.arange(n_out, dtype=np.float64) + 0.5) / s - 0.5
    return np.clip(x, 0.0, n_in - 1)


def _evaluate(systems: LocalSystems, kernel: Kernel, tri, px, py, metric):
    """Interpolant of triangle ``tri[m]`` at (px[m], py[m])."""
    out = np.empty(len(tri))
    for lo in range(0, len(tri), _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        t = tri[sl]
        c = systems.centers[systems.support[t]]          # (M, W, 2)
        dx = px[sl, None] - c[..., 0]
        dy = py[sl, None] - c[..., 1]
        if metric is None:
            d2 = euclidean_dist2(dx, dy)
        else:
            m = metric[sl]
            d2 = metric_dist2(dx, dy, m[:, 0:1], m[:, 1:2], m[:, 2:3])
        out[sl] = np.einsum("mw,mw->m", kernel_eval(kernel, d2), systems.weights[t])
    return out


def reconstruct(mesh: TriMesh, tensor: TensorField | None, cfg: RestoreConfig | None = None,
                out_shape=None, vertex_values=None) -> RestoreResult:
    """Decode ``mesh``; returns the image plus solve diagnostics.

    ``out_shape`` is (rows, cols) and defaults to the encoded size times
    ``cfg.scale``.
    """
    cfg = (cfg or RestoreConfig()).validate()
    w, h = mesh.width, mesh.height
    if w <= 0 or h <= 0:
        raise ValueError("mesh has no image frame")
    if out_shape is None:
        out_shape = (int(round(h * cfg.scale)), int(round(w * cfg.scale)))
    rows, cols = out_shape
    if rows < h or cols < w:
        raise ValueError("output must be at least the encoded size")
    xs = output_coordinates(cols, w)
    ys = output_coordinates(rows, h)
    tri_map = locate_grid(mesh, xs, ys)
    # corners are always meshed, so every clamped coordinate is covered
    assert tri_map.min() >= 0, "output pixel outside the mesh"
    tri = tri_map.ravel()

    if mesh.center_intensity.size != mesh.n_triangles and cfg.method != "vertex_iso_rbf":
        raise ValueError("mesh carries no centre intensities")
    if cfg.method == "piecewise":
        values = mesh.center_intensity[tri]
        return RestoreResult(GrayImage(np.clip(values, 0, 255).reshape(rows, cols)), tri_map)

    if cfg.method == "vertex_iso_rbf" and vertex_values is None:
        vertex_values = vertex_values_from_centers(mesh)
    nbrs = None if cfg.method == "vertex_iso_rbf" else find_neighbors(mesh, cfg.support, cfg.knn_k)
    systems = solve_all_local_systems(mesh, nbrs, tensor, cfg, vertex_values)

    X, Y = np.meshgrid(xs, ys)
    px, py = X.ravel(), Y.ravel()
    metric = None
    if cfg.method == "triangle_arbf":
        if cfg.metric_point == "pixel":
            metric = np.column_stack(tensor.sample(px, py))
        else:
            metric = systems.metric[tri]
    values = _evaluate(systems, cfg.make_kernel(), tri, px, py, metric)

    bad = systems.failed[tri]
    if bad.any():
        fallback = (mesh.center_intensity[tri[bad]] if mesh.center_intensity.size
                    else np.asarray(vertex_values)[mesh.triangles[tri[bad]]].mean(axis=1))
        values[bad] = fallback
    image = GrayImage(np.clip(values, 0.0, 255.0).reshape(rows, cols))
    return RestoreResult(image, tri_map, int(systems.regularized.sum()),
                         int(systems.failed.sum()), systems.n_solves)


def restore(mesh: TriMesh, tensor: TensorField | None, cfg: RestoreConfig | None = None,
            out_shape=None, vertex_values=None) -> GrayImage:
    """Decoded image only; see :func:`reconstruct` for diagnostics."""
    return reconstruct(mesh, tensor, cfg, out_shape, vertex_values).image
