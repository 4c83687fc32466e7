"""Image and mesh containers shared by the encoder and decoder, plus file I/O."""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


class MeshpixError(Exception):
    """Base class for all errors raised by this package."""


class ImageFormatError(MeshpixError, ValueError):
    pass


class MeshFormatError(MeshpixError, ValueError):
    pass


class Point2(NamedTuple):
    x: float  # column
    y: float  # row


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Real-valued grayscale image, ``data[row, col]``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ImageFormatError(f"expected a 2D array, got shape {data.shape}")
        if data.shape[0] == 0 or data.shape[1] == 0:
            raise ImageFormatError("zero-dimension image")
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def quantized(self) -> np.ndarray:
        """Clamp to [0, 255] and round half away from zero, as uint8."""
        return quantize(self.data)

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


def quantize(values: np.ndarray) -> np.ndarray:
    clamped = np.clip(np.asarray(values, dtype=np.float64), 0.0, 255.0)
    # values are non-negative here, so floor(x + 0.5) rounds half away from zero
    return np.floor(clamped + 0.5).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangular mesh over the pixel frame ``[0, width-1] x [0, height-1]``.

    Triangles are stored counter-clockwise in (x, y) coordinates.
    ``center_intensity`` holds one value per triangle, or is empty when the
    mesh has not been attached to an image yet.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    constrained_edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), np.int64))
    center_intensity: np.ndarray = field(default_factory=lambda: np.zeros(0))
    width: int = 0
    height: int = 0

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        tris = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        cons = np.asarray(self.constrained_edges, dtype=np.int64).reshape(-1, 2)
        vals = np.asarray(self.center_intensity, dtype=np.float64).reshape(-1)
        for name, arr in (("vertices", verts), ("triangles", tris),
                          ("constrained_edges", cons), ("center_intensity", vals)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not np.all(np.isfinite(verts)):
            raise MeshFormatError("non-finite coordinate")
        n = len(verts)
        if tris.size and (tris.min() < 0 or tris.max() >= n):
            raise MeshFormatError("index out of range in triangles")
        if cons.size and (cons.min() < 0 or cons.max() >= n):
            raise MeshFormatError("index out of range in constrained edges")
        if vals.size not in (0, len(tris)):
            raise MeshFormatError(
                f"expected {len(tris)} center intensities, got {vals.size}")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def centers(self) -> np.ndarray:
        return triangle_centers(self)

    def with_intensities(self, values) -> "TriMesh":
        return TriMesh(self.vertices, self.triangles, self.constrained_edges,
                       values, self.width, self.height)

    def edge_set(self) -> set[tuple[int, int]]:
        t = self.triangles
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        edges.sort(axis=1)
        return set(map(tuple, np.unique(edges, axis=0).tolist()))

    def __eq__(self, other):
        if not isinstance(other, TriMesh):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.triangles, other.triangles)
                and np.array_equal(self.constrained_edges, other.constrained_edges)
                and np.array_equal(self.center_intensity, other.center_intensity))

    __hash__ = None


def triangle_centers(mesh: TriMesh) -> np.ndarray:
    """Centroids of all triangles, shape (T, 2)."""
    if mesh.n_triangles == 0:
        return np.zeros((0, 2))
    return mesh.vertices[mesh.triangles].mean(axis=1)


# ---------------------------------------------------------------- image I/O

def _read_pnm_tokens(raw: bytes, count: int, start: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    i = start
    n = len(raw)
    while len(tokens) < count:
        while i < n and raw[i:i + 1].isspace():
            i += 1
        if i >= n:
            raise ImageFormatError("unreadable file: truncated PGM header")
        if raw[i:i + 1] == b"#":
            while i < n and raw[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not raw[j:j + 1].isspace() and raw[j:j + 1] != b"#":
            j += 1
        tokens.append(raw[i:j])
        i = j
    return tokens, i


def _parse_pgm(raw: bytes) -> np.ndarray:
    magic = raw[:2]
    try:
        (w, h, maxval), pos = _read_pnm_tokens(raw, 3, 2)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise ImageFormatError(f"unreadable file: bad PGM header ({exc})") from None
    if w <= 0 or h <= 0:
        raise ImageFormatError("zero-dimension image")
    if not 0 < maxval <= 255:
        raise ImageFormatError(f"unsupported format: PGM maxval {maxval} (8-bit only)")
    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        body = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos) \
            if len(raw) - pos >= w * h else None
        if body is None:
            raise ImageFormatError("unreadable file: truncated PGM raster")
        data = body.astype(np.float64)
    else:
        text = re.sub(rb"#[^\n]*", b" ", raw[pos:])
        try:
            values = [int(v) for v in text.split()]
        except ValueError:
            raise ImageFormatError("unreadable file: bad PGM raster") from None
        if len(values) < w * h:
            raise ImageFormatError("unreadable file: truncated PGM raster")
        data = np.asarray(values[:w * h], dtype=np.float64)
    if data.max(initial=0) > maxval:
        raise ImageFormatError("unreadable file: sample exceeds maxval")
    if maxval != 255:
        data = data * (255.0 / maxval)
    return data.reshape(h, w)


def to_gray(array: np.ndarray) -> np.ndarray:
    """Convert an (H, W), (H, W, 3) or (H, W, 4) array to luminance."""
    a = np.asarray(array, dtype=np.float64)
    if a.ndim == 2:
        return a
    if a.ndim == 3 and a.shape[2] in (3, 4):
        return 0.299 * a[..., 0] + 0.587 * a[..., 1] + 0.114 * a[..., 2]
    if a.ndim == 3 and a.shape[2] in (1, 2):
        return a[..., 0]
    raise ImageFormatError(f"unsupported format: array shape {a.shape}")


def load_image(path) -> GrayImage:
    """Load a PGM (P2/P5) or PNG file as a grayscale image."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ImageFormatError(f"unreadable file: {path}: {exc.strerror}") from None
    if not raw:
        raise ImageFormatError(f"unreadable file: {path} is empty")
    if raw[:2] in (b"P2", b"P5"):
        return GrayImage(_parse_pgm(raw))
    if raw.startswith(PNG_MAGIC):
        from PIL import Image

        with Image.open(path) as im:
            if im.mode == "P":
                im = im.convert("RGBA" if "transparency" in im.info else "RGB")
            if im.mode not in ("L", "LA", "RGB", "RGBA"):
                raise ImageFormatError(f"unsupported format: PNG mode {im.mode}")
            arr = np.asarray(im)
        return GrayImage(to_gray(arr))
    raise ImageFormatError(f"unsupported format: {path}")


def save_image(img: GrayImage, path) -> None:
    """Write ``img`` as PNG (by extension) or binary PGM otherwise."""
    pixels = img.quantized()
    path = os.fspath(path)
    if path.lower().endswith(".png"):
        from PIL import Image

        Image.fromarray(pixels, mode="L").save(path)
        return
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + pixels.tobytes())


# ----------------------------------------------------------------- mesh I/O

def save_mesh(mesh: TriMesh, path) -> None:
    lines = ["MESHPIX 1", f"image {mesh.width} {mesh.height}",
             f"vertices {mesh.n_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines.append(f"constrained {len(mesh.constrained_edges)}")
    lines += [f"{i} {j}" for i, j in mesh.constrained_edges.tolist()]
    lines.append(f"intensities {mesh.center_intensity.size}")
    lines += [repr(v) for v in mesh.center_intensity.tolist()]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


class _LineReader:
    def __init__(self, text: str):
        self.lines = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if line:
                self.lines.append((lineno, line))
        self.pos = 0

    def next(self, what: str) -> tuple[int, list[str]]:
        if self.pos >= len(self.lines):
            raise MeshFormatError(f"malformed header: unexpected end of file, expected {what}")
        lineno, line = self.lines[self.pos]
        self.pos += 1
        return lineno, line.split()

    def section(self, keyword: str) -> int:
        lineno, parts = self.next(f"'{keyword}'")
        if len(parts) != 2 or parts[0] != keyword:
            raise MeshFormatError(f"malformed header at line {lineno}: expected '{keyword} <count>'")
        try:
            count = int(parts[1])
        except ValueError:
            raise MeshFormatError(f"malformed header at line {lineno}: bad count") from None
        if count < 0:
            raise MeshFormatError(f"malformed header at line {lineno}: negative count")
        return count

    def rows(self, count: int, width: int, kind, what: str) -> list:
        out = []
        for _ in range(count):
            lineno, parts = self.next(what)
            if len(parts) != width:
                raise MeshFormatError(f"line {lineno}: expected {width} values for {what}")
            try:
                out.append([kind(p) for p in parts])
            except ValueError:
                raise MeshFormatError(f"line {lineno}: bad number in {what}") from None
        return out


def load_mesh(path) -> TriMesh:
    try:
        with open(path, encoding="ascii") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise MeshFormatError(f"unreadable mesh file {path}: {exc}") from None
    reader = _LineReader(text)
    lineno, parts = reader.next("'MESHPIX 1'")
    if parts != ["MESHPIX", "1"]:
        raise MeshFormatError("malformed header: expected 'MESHPIX 1'")
    lineno, parts = reader.next("'image <width> <height>'")
    if len(parts) != 3 or parts[0] != "image":
        raise MeshFormatError(f"malformed header at line {lineno}: expected 'image <w> <h>'")
    try:
        width, height = int(parts[1]), int(parts[2])
    except ValueError:
        raise MeshFormatError(f"malformed header at line {lineno}: bad image size") from None

    nv = reader.section("vertices")
    verts = reader.rows(nv, 2, float, "vertex")
    if not all(math.isfinite(c) for v in verts for c in v):
        raise MeshFormatError("non-finite coordinate")
    nt = reader.section("triangles")
    tris = reader.rows(nt, 3, int, "triangle")
    nc = reader.section("constrained")
    cons = reader.rows(nc, 2, int, "constrained edge")
    ni = reader.section("intensities")
    vals = [r[0] for r in reader.rows(ni, 1, float, "intensity")]
    for idx in (i for row in tris + cons for i in row):
        if not 0 <= idx < nv:
            raise MeshFormatError(f"index out of range: {idx} (vertex count {nv})")
    return TriMesh(np.array(verts, dtype=np.float64).reshape(-1, 2),
                   np.array(tris, dtype=np.int64).reshape(-1, 3),
                   np.array(cons, dtype=np.int64).reshape(-1, 2),
                   np.array(vals, dtype=np.float64), width, height)


def bilinear(grid: np.ndarray, xs, ys) -> np.ndarray:
    """Bilinear samples of ``grid[row, col]`` at (xs, ys), clamped to the frame.

    Uses the ``a + f * (b - a)`` form so a constant grid is reproduced
    exactly at any sample position, and integer positions return the grid
    value itself.
    """
    g = np.asarray(grid, dtype=np.float64)
    h, w = g.shape
    x = np.clip(np.asarray(xs, dtype=np.float64), 0.0, w - 1)
    y = np.clip(np.asarray(ys, dtype=np.float64), 0.0, h - 1)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = g[y0, x0] + fx * (g[y0, x1] - g[y0, x0])
    bottom = g[y1, x0] + fx * (g[y1, x1] - g[y1, x0])
    return top + fy * (bottom - top)
