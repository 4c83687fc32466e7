"""Image quality figures: RMSE, PSNR and the vertex-count compression ratio."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import GrayImage, TriMesh


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, GrayImage) else np.asarray(x, dtype=np.float64)


def rmse(a, b) -> float:
    """Root mean squared difference, summed with ``math.fsum``."""
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("empty images")
    d = (a.astype(np.float64) - b.astype(np.float64)).ravel()
    return math.sqrt(math.fsum((d * d).tolist()) / d.size)


def psnr_from_rmse(e: float) -> float:
    return math.inf if e == 0 else 20.0 * math.log10(255.0 / e)


def psnr(a, b) -> float:
    """20 log10(255 / rmse); ``inf`` for identical inputs."""
    return psnr_from_rmse(rmse(a, b))


def format_db(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.4f}"


def compression_ratio(mesh: TriMesh, img=None) -> float:
    """Vertex count over pixel count of ``img`` (or the mesh's own frame)."""
    if img is None:
        w, h = mesh.width, mesh.height
    elif isinstance(img, GrayImage):
        w, h = img.width, img.height
    else:
        w, h = img
    if w <= 0 or h <= 0:
        raise ValueError("image frame is empty")
    return mesh.n_vertices / (w * h)


def payload_bytes(mesh: TriMesh) -> int:
    """Rough size of a compact encoding.

    Two 16-bit coordinates per vertex, two vertex indices per constrained
    edge and one byte per triangle intensity; the connectivity itself can be
    rebuilt from the vertices and constraints.
    """
    index_bytes = max(1, math.ceil(max(mesh.n_vertices - 1, 1).bit_length() / 8))
    return (4 * mesh.n_vertices + 2 * index_bytes * len(mesh.constrained_edges)
            + mesh.n_triangles)


@dataclass
class QualityReport:
    psnr_db: float
    rmse: float
    compression_ratio: float | None = None   # None when no mesh is involved
    method: str = ""
    kernel: str = ""
    c: float | None = None
    wall_time_seconds: float = 0.0
    psnr_db_raw: float | None = None    # before quantising the decode
    rmse_raw: float | None = None
    payload_bytes: int | None = None
    regularized_systems: int = 0
    fallback_triangles: int = 0
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rmse < 0:
            raise ValueError("rmse must be >= 0")
        if self.compression_ratio is not None and not 0 < self.compression_ratio <= 1:
            raise ValueError("compression ratio must be in (0, 1]")

    def to_record(self) -> str:
        """Single-line key=value form."""
        parts = [f"psnr_db={format_db(self.psnr_db)}", f"rmse={self.rmse:.6f}"]
        if self.compression_ratio is not None:
            parts.append(f"ratio={self.compression_ratio:.6f}")
        if self.method:
            parts.append(f"method={self.method}")
        if self.kernel:
            parts.append(f"kernel={self.kernel}")
        if self.c is not None:
            parts.append(f"c={self.c:g}")
        parts.append(f"time_s={self.wall_time_seconds:.3f}")
        if self.psnr_db_raw is not None:
            parts.append(f"psnr_db_raw={format_db(self.psnr_db_raw)}")
        if self.rmse_raw is not None:
            parts.append(f"rmse_raw={self.rmse_raw:.6f}")
        if self.payload_bytes is not None:
            parts.append(f"payload_bytes={self.payload_bytes}")
        parts.append(f"regularized_systems={self.regularized_systems}")
        parts.append(f"fallback_triangles={self.fallback_triangles}")
        parts.extend(f"{k}={v}" for k, v in sorted(self.overrides.items()))
        return " ".join(parts)


def quality_report(original, decoded: GrayImage, mesh: TriMesh | None = None, **info) -> QualityReport:
    """Compare against the quantised decode; raw figures are kept for diagnostics."""
    q = decoded.quantized().astype(np.float64)
    e = rmse(original, q)
    e_raw = rmse(original, decoded)
    shape = _as_array(original).shape
    ratio = compression_ratio(mesh, (shape[1], shape[0])) if mesh is not None else None
    return QualityReport(psnr_from_rmse(e), e, ratio, psnr_db_raw=psnr_from_rmse(e_raw),
                         rmse_raw=e_raw,
                         payload_bytes=payload_bytes(mesh) if mesh is not None else None, **info)
