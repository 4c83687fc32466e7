"""Sample points for the encoder mesh.

Three populations, accepted in priority order:

* ``canny`` - Canny edge pixels traced into chains and thinned by a PCA
  curvature proxy (dense on corners, sparse on straight runs);
* ``halftone`` - error-diffused samples of the |LoG| density;
* ``uniform`` - a coarse grid filling regions with neither of the above.

The four image corners are always present so the mesh spans the full frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .core import GrayImage

CANNY, HALFTONE, UNIFORM = 0, 1, 2
TAG_NAMES = {CANNY: "canny", HALFTONE: "halftone", UNIFORM: "uniform"}

# 4-neighbours first so staircase pixels are not skipped by a diagonal hop
_NEIGHBOURS = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)]


@dataclass
class SamplingConfig:
    canny_sigma: float = 1.4
    canny_low: float = 0.1
    canny_high: float = 0.25
    canny_min_length: int = 3
    pca_window: int = 11
    pca_dense_spacing: float = 3.0
    pca_sparse_spacing: float = 8.0
    pca_anisotropy_threshold: float = 0.2
    halftone_fraction: float = 0.03
    halftone_sigma: float = 1.0
    uniform_spacing: float = 12.0
    min_separation: float = 1.5
    target_ratio: float = 0.06

    def validate(self):
        if not self.canny_sigma > 0:
            raise ValueError("canny.sigma must be > 0")
        if not 0 < self.canny_low < self.canny_high:
            raise ValueError("canny thresholds need 0 < low < high")
        if self.pca_window < 3 or self.pca_window % 2 == 0:
            raise ValueError("pca.window must be odd and >= 3")
        if not 0 < self.pca_dense_spacing < self.pca_sparse_spacing:
            raise ValueError("pca spacings need 0 < dense < sparse")
        if not self.pca_anisotropy_threshold > 0:
            raise ValueError("pca.anisotropy_threshold must be > 0")
        if not 0 < self.halftone_fraction < 1:
            raise ValueError("halftone.fraction must be in (0, 1)")
        if not self.halftone_sigma > 0:
            raise ValueError("halftone.sigma must be > 0")
        if not self.uniform_spacing > 0:
            raise ValueError("uniform.spacing must be > 0")
        if not self.min_separation > 0:
            raise ValueError("min_separation must be > 0")
        if not 0 <= self.target_ratio < 1:
            raise ValueError("sampling.target_ratio must be in [0, 1)")
        return self


@dataclass
class SamplePointSet:
    points: np.ndarray                      # (N, 2) x, y
    tags: np.ndarray                        # (N,) CANNY / HALFTONE / UNIFORM
    edge_chains: list = field(default_factory=list)   # index arrays into points
    halftone_fraction: float = 0.0          # the fraction actually used

    def __len__(self):
        return len(self.points)

    def count(self, tag: int) -> int:
        return int(np.count_nonzero(self.tags == tag))

    def segments(self) -> list[tuple[int, int]]:
        segs = []
        for chain in self.edge_chains:
            segs.extend(zip(chain[:-1].tolist(), chain[1:].tolist()))
        return [(a, b) for a, b in segs if a != b]


# -------------------------------------------------------------------- Canny

def canny_mask(img: GrayImage, low: float, high: float, sigma: float) -> np.ndarray:
    """Boolean edge map.  ``low``/``high`` are fractions of the peak gradient."""
    if not 0 < low < high:
        raise ValueError("need 0 < low < high")
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    smooth = ndimage.gaussian_filter(img.data, sigma, mode="nearest")
    gx = ndimage.sobel(smooth, axis=1, mode="nearest")
    gy = ndimage.sobel(smooth, axis=0, mode="nearest")
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 1e-9:
        return np.zeros(mag.shape, dtype=bool)

    # non-maximum suppression along the gradient direction (4 sectors)
    angle = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    sector = (np.floor((angle + 22.5) / 45.0).astype(int)) % 4
    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}  # (drow, dcol)
    padded = np.pad(mag, 1, mode="constant")
    h, w = mag.shape
    keep = np.zeros_like(mag, dtype=bool)
    for s, (dr, dc) in offsets.items():
        fwd = padded[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]
        bwd = padded[1 - dr:1 - dr + h, 1 - dc:1 - dc + w]
        keep |= (sector == s) & (mag >= fwd) & (mag > bwd)
    nms = np.where(keep, mag, 0.0)

    weak = nms > low * peak
    strong = nms > high * peak
    labels, count = ndimage.label(weak, structure=np.ones((3, 3)))
    if count == 0:
        return np.zeros(mag.shape, dtype=bool)
    has_strong = np.zeros(count + 1, dtype=bool)
    has_strong[np.unique(labels[strong])] = True
    has_strong[0] = False
    return has_strong[labels]


def trace_chains(mask: np.ndarray, min_length: int = 3) -> list[np.ndarray]:
    """Split an edge map into ordered pixel chains, each an (k, 2) array of (x, y).

    A chain whose last entry repeats its first is closed.  Chains that run
    into an already-traced pixel end on that pixel, so branches stay joined.
    """
    h, w = mask.shape
    on = {(int(x), int(y)) for y, x in zip(*np.nonzero(mask))}
    owner: dict[tuple[int, int], int] = {}

    def nbrs(p):
        x, y = p
        return [(x + dx, y + dy) for dx, dy in _NEIGHBOURS if (x + dx, y + dy) in on]

    def walk(start, chain_id, path):
        cur = start
        while True:
            nxt = next((q for q in nbrs(cur) if q not in owner), None)
            if nxt is None:
                return
            owner[nxt] = chain_id
            path.append(nxt)
            cur = nxt

    def link(path, chain_id):
        """Pixel already traced that the free end of ``path`` touches."""
        tail = path[-1]
        recent = set(path[-3:])
        for q in nbrs(tail):
            if q in recent:
                continue
            if owner.get(q) != chain_id:
                return q
            if q == path[0] and len(path) >= 4:
                return q
        return None

    degree = {p: len(nbrs(p)) for p in on}
    order = sorted(on, key=lambda p: (p[1], p[0]))
    starts = [p for p in order if degree[p] <= 1] + order
    chains = []
    for s in starts:
        if s in owner:
            continue
        cid = len(chains)
        owner[s] = cid
        fwd = [s]
        walk(s, cid, fwd)
        back = [s]
        walk(s, cid, back)
        path = back[::-1] + fwd[1:]
        end = link(path, cid)
        if end is not None:
            path.append(end)
        head = link(path[::-1], cid) if end != path[0] else None
        if head is not None and head != path[-1]:
            path.insert(0, head)
        chains.append(np.array(path, dtype=np.int64).reshape(-1, 2))
    return [c for c in chains if len(c) >= min_length]


def canny_edges(img: GrayImage, low: float = 0.1, high: float = 0.25, sigma: float = 1.4,
                min_length: int = 3) -> list[np.ndarray]:
    """Canny detector followed by chain tracing."""
    return trace_chains(canny_mask(img, low, high, sigma), min_length)


# ---------------------------------------------------------------- PCA thinning

def chain_flatness(chain: np.ndarray, window: int) -> np.ndarray:
    """Eigenvalue ratio lambda_min / lambda_max of each point's local covariance."""
    pts = np.asarray(chain, dtype=np.float64)
    closed = len(pts) > 2 and np.array_equal(pts[0], pts[-1])
    core = pts[:-1] if closed else pts
    n = len(core)
    half = window // 2
    out = np.zeros(len(pts))
    for i in range(n):
        if closed:
            idx = [(i + k) % n for k in range(-half, half + 1)]
        else:
            idx = list(range(max(0, i - half), min(n, i + half + 1)))
        win = core[idx]
        if len(win) < 3:
            continue
        cov = np.cov(win.T, bias=True)
        ev = np.linalg.eigvalsh(cov)
        out[i] = ev[0] / ev[1] if ev[1] > 1e-12 else 0.0
    if closed:
        out[-1] = out[0]
    return out


def pca_thin(chains, window: int = 11, dense_spacing: float = 3.0,
             sparse_spacing: float = 8.0, anisotropy_threshold: float = 0.2):
    """Thin pixel chains to kept points spaced by local curvature.

    Returns ``(points, chains)`` where points is an (M, 2) array with shared
    pixels stored once and chains index into it.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    if not 0 < dense_spacing < sparse_spacing:
        raise ValueError("need 0 < dense_spacing < sparse_spacing")
    index: dict[tuple[int, int], int] = {}
    points = []
    out_chains = []

    def point_id(p):
        key = (float(p[0]), float(p[1]))
        if key not in index:
            index[key] = len(points)
            points.append(key)
        return index[key]

    for chain in chains:
        chain = np.asarray(chain, dtype=np.float64)
        if len(chain) < 2:
            continue
        mu = chain_flatness(chain, window)
        t = np.clip(mu / anisotropy_threshold, 0.0, 1.0)
        spacing = sparse_spacing - (sparse_spacing - dense_spacing) * t
        step = np.hypot(*np.diff(chain, axis=0).T)
        arc = np.concatenate([[0.0], np.cumsum(step)])
        kept = [0]
        for i in range(1, len(chain) - 1):
            if arc[i] - arc[kept[-1]] >= spacing[i]:
                kept.append(i)
        last = len(chain) - 1
        if len(kept) > 1 and arc[last] - arc[kept[-1]] < 0.5 * spacing[last]:
            kept[-1] = last
        else:
            kept.append(last)
        out_chains.append(np.array([point_id(chain[i]) for i in kept], dtype=np.int64))
    pts = np.array(points, dtype=np.float64).reshape(-1, 2)
    return pts, out_chains


# ------------------------------------------------------------------ halftoning

def halftone_density(img: GrayImage, sigma: float = 1.0) -> np.ndarray:
    """|Laplacian of the Gaussian-smoothed image| normalised to [0, 1].

    The discrete Laplacian stencil sums to zero, so a flat image gives an
    all-zero density.
    """
    smooth = ndimage.gaussian_filter(img.data, sigma, mode="nearest")
    d = np.abs(ndimage.laplace(smooth, mode="nearest"))
    peak = d.max()
    if peak <= 1e-9 * max(1.0, np.abs(img.data).max()):
        return np.zeros_like(d)
    return d / peak


def _scale_to_mass(density: np.ndarray, mass: float) -> np.ndarray:
    """Find s with sum(min(s * density, 1)) == mass (bisection; clipping aware)."""
    total = density.sum()
    if total <= 0 or mass <= 0:
        return np.zeros_like(density)
    lo, hi = 0.0, mass / total
    while np.minimum(hi * density, 1.0).sum() < mass and hi < 1e12:
        lo, hi = hi, hi * 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if np.minimum(mid * density, 1.0).sum() < mass:
            lo = mid
        else:
            hi = mid
    return np.minimum(hi * density, 1.0)


def floyd_steinberg(values: np.ndarray) -> np.ndarray:
    """Serpentine Floyd-Steinberg dithering of values in [0, 1] to {0, 1}."""
    h, w = values.shape
    buf = values.astype(np.float64).tolist()
    out = np.zeros((h, w), dtype=bool)
    for y in range(h):
        row = buf[y]
        below = buf[y + 1] if y + 1 < h else None
        if y % 2 == 0:
            xs, d = range(w), 1
        else:
            xs, d = range(w - 1, -1, -1), -1
        for x in xs:
            v = row[x]
            q = 1.0 if v >= 0.5 else 0.0
            if q:
                out[y, x] = True
            err = v - q
            if err == 0.0:
                continue
            xn = x + d
            if 0 <= xn < w:
                row[xn] += err * 7.0 / 16.0
            if below is not None:
                xb = x - d
                if 0 <= xb < w:
                    below[xb] += err * 3.0 / 16.0
                below[x] += err * 5.0 / 16.0
                if 0 <= xn < w:
                    below[xn] += err * 1.0 / 16.0
    return out


def halftone_points(img: GrayImage, target_fraction: float, sigma: float = 1.0) -> np.ndarray:
    """Error-diffused samples whose count is about ``target_fraction`` of the pixels."""
    if not 0 < target_fraction < 1:
        raise ValueError("target_fraction must be in (0, 1)")
    density = _scale_to_mass(halftone_density(img, sigma), target_fraction * img.data.size)
    ys, xs = np.nonzero(floyd_steinberg(density))
    return np.column_stack([xs, ys]).astype(np.float64)


# ------------------------------------------------------------------- uniform

def _grid_axis(length: int, spacing: float) -> np.ndarray:
    last = length - 1
    if last <= 0:
        return np.zeros(1)
    ticks = np.round(np.arange(0.0, last, spacing))
    ticks = ticks[ticks < last]
    if len(ticks) > 1 and last - ticks[-1] < 0.5 * spacing:
        ticks = ticks[:-1]
    return np.unique(np.concatenate([ticks, [last]]))


def image_corners(width: int, height: int) -> np.ndarray:
    c = np.array([[0, 0], [width - 1, 0], [width - 1, height - 1], [0, height - 1]], float)
    return np.unique(c, axis=0)


def uniform_points(img: GrayImage, existing, spacing: float) -> np.ndarray:
    """Grid points (pitch ``spacing``) with no existing point closer than ``spacing``.

    The image corners are emitted unless an existing point already sits on them.
    """
    if not spacing > 0:
        raise ValueError("spacing must be > 0")
    gx = _grid_axis(img.width, spacing)
    gy = _grid_axis(img.height, spacing)
    X, Y = np.meshgrid(gx, gy)
    grid = np.column_stack([X.ravel(), Y.ravel()])
    existing = _as_points(existing)
    corners = image_corners(img.width, img.height)
    is_corner = np.zeros(len(grid), dtype=bool)
    for c in corners:
        is_corner |= np.all(grid == c, axis=1)
    if len(existing):
        tree = cKDTree(existing)
        dist, _ = tree.query(grid, k=1)
        free = dist >= spacing
        taken = {tuple(p) for p in existing.tolist()}
        corner_free = np.array([tuple(p) not in taken for p in grid.tolist()])
    else:
        free = np.ones(len(grid), dtype=bool)
        corner_free = free
    keep = np.where(is_corner, corner_free, free)
    return grid[keep]


def _as_points(existing) -> np.ndarray:
    if isinstance(existing, SamplePointSet):
        return existing.points
    if existing is None:
        return np.zeros((0, 2))
    return np.asarray(existing, dtype=np.float64).reshape(-1, 2)


# ------------------------------------------------------------------ composition

class _Accepter:
    """Greedy acceptance under a minimum pairwise separation (grid hash)."""

    def __init__(self, min_sep: float):
        self.min_sep = min_sep
        self.min_sep2 = min_sep * min_sep
        self.cells: dict[tuple[int, int], list[int]] = {}
        self.points: list[tuple[float, float]] = []
        self.tags: list[int] = []

    def _cell(self, x, y):
        return (int(math.floor(x / self.min_sep)), int(math.floor(y / self.min_sep)))

    def clear_of(self, x, y) -> bool:
        cx, cy = self._cell(x, y)
        for i in range(cx - 1, cx + 2):
            for j in range(cy - 1, cy + 2):
                for k in self.cells.get((i, j), ()):
                    px, py = self.points[k]
                    if (px - x) ** 2 + (py - y) ** 2 < self.min_sep2:
                        return False
        return True

    def add(self, x, y, tag) -> int:
        k = len(self.points)
        self.points.append((x, y))
        self.tags.append(tag)
        self.cells.setdefault(self._cell(x, y), []).append(k)
        return k

    def offer(self, x, y, tag):
        if self.clear_of(x, y):
            return self.add(x, y, tag)
        return None

    def copy(self) -> "_Accepter":
        other = _Accepter(self.min_sep)
        other.cells = {k: list(v) for k, v in self.cells.items()}
        other.points = list(self.points)
        other.tags = list(self.tags)
        return other


def _finish(acc: _Accepter, img: GrayImage, halftone, spacing, n_seed) -> _Accepter:
    acc = acc.copy()
    for x, y in halftone.tolist():
        acc.offer(x, y, HALFTONE)
    # the seeded corners belong to the grid itself, so they do not suppress it
    existing = np.array(acc.points[n_seed:], dtype=np.float64).reshape(-1, 2)
    for x, y in uniform_points(img, existing, spacing).tolist():
        acc.offer(x, y, UNIFORM)
    return acc


def build_samples(img: GrayImage, cfg: SamplingConfig | None = None) -> SamplePointSet:
    """Corners, then Canny, halftone and uniform points under ``min_separation``.

    With ``cfg.target_ratio > 0`` the halftone budget is searched so that the
    total point count lands near ``target_ratio`` times the pixel count.
    """
    cfg = (cfg or SamplingConfig()).validate()
    acc = _Accepter(cfg.min_separation)
    for x, y in image_corners(img.width, img.height).tolist():
        acc.add(x, y, UNIFORM)
    n_seed = len(acc.points)

    chains = canny_edges(img, cfg.canny_low, cfg.canny_high, cfg.canny_sigma,
                         cfg.canny_min_length)
    cpts, cchains = pca_thin(chains, cfg.pca_window, cfg.pca_dense_spacing,
                             cfg.pca_sparse_spacing, cfg.pca_anisotropy_threshold)
    remap = np.full(len(cpts), -1, dtype=np.int64)
    for chain in cchains:
        for i in chain.tolist():
            if remap[i] < 0:
                k = acc.offer(cpts[i][0], cpts[i][1], CANNY)
                remap[i] = -2 if k is None else k
    edge_chains = []
    for chain in cchains:
        ids = [int(remap[i]) for i in chain.tolist() if remap[i] >= 0]
        ids = [k for j, k in enumerate(ids) if j == 0 or k != ids[j - 1]]
        if len(ids) >= 2:
            edge_chains.append(np.array(ids, dtype=np.int64))

    pixels = img.data.size

    def run(fraction):
        ht = halftone_points(img, fraction, cfg.halftone_sigma)
        return _finish(acc, img, ht, cfg.uniform_spacing, n_seed)

    fraction = cfg.halftone_fraction
    result = run(fraction)
    if cfg.target_ratio > 0:
        target = cfg.target_ratio * pixels
        tol = 0.01 * target
        lo, hi = 0.0, None
        for _ in range(24):
            n = len(result.points)
            if abs(n - target) <= tol:
                break
            if n < target:
                lo = fraction
                nxt = fraction * 2.0 if hi is None else 0.5 * (fraction + hi)
            else:
                hi = fraction
                nxt = 0.5 * (lo + fraction)
            nxt = min(nxt, 0.95)
            if nxt <= 0 or nxt == fraction:
                break
            fraction = nxt
            result = run(fraction)

    return SamplePointSet(np.array(result.points, dtype=np.float64).reshape(-1, 2),
                          np.array(result.tags, dtype=np.int8), edge_chains, fraction)
