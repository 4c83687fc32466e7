"""Encoder and decoder pipelines built from the individual stages."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .cdt import constrain, delaunay
from .config import RunConfig
from .core import GrayImage, MeshpixError, TriMesh
from .restore import (RestoreConfig, RestoreResult, center_intensities, reconstruct,
                      vertex_intensities)
from .sampling import SamplePointSet, build_samples
from .tensor import TensorField


class PipelineError(MeshpixError):
    """A stage failure, labelled with the stage name."""

    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.cause = exc


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except (MeshpixError, ValueError, ArithmeticError) as exc:
        raise PipelineError(name, exc) from exc


@dataclass
class EncodeResult:
    mesh: TriMesh
    samples: SamplePointSet
    skipped_constraints: list
    seconds: float


def encode(img: GrayImage, cfg: RunConfig | None = None) -> EncodeResult:
    """samples -> Delaunay -> edge constraints -> centre intensities."""
    cfg = (cfg or RunConfig()).validate()
    start = time.perf_counter()
    samples = _stage("sampling", build_samples, img, cfg.sampling())
    mesh = _stage("triangulation", delaunay, samples.points, img.width, img.height)
    mesh, skipped = _stage("constraints", constrain, mesh, samples.segments(), skip_conflicts=True)
    mesh = mesh.with_intensities(_stage("intensities", center_intensities, img, mesh))
    return EncodeResult(mesh, samples, skipped, time.perf_counter() - start)


@dataclass
class DecodeResult:
    restored: RestoreResult
    seconds: float
    tensor_mode: str       # "source", "self" or "none"

    @property
    def image(self) -> GrayImage:
        return self.restored.image


def decode_side_tensor(mesh: TriMesh, sigma: float, kappa: float) -> TensorField:
    """Tensor field of a piecewise pre-decode of the mesh itself."""
    pre = reconstruct(mesh, None, RestoreConfig(method="piecewise"))
    return TensorField.from_image(pre.image, sigma, kappa)


def decode(mesh: TriMesh, cfg: RunConfig | None = None, source: GrayImage | None = None,
           restore_cfg: RestoreConfig | None = None) -> DecodeResult:
    """Decode a mesh.

    ``source`` (the original image, when available) supplies the structure
    tensors and the vertex samples of the vertex baseline; without it the
    tensors come from a piecewise pre-decode.
    """
    cfg = (cfg or RunConfig()).validate()
    rcfg = (restore_cfg or cfg.restore()).validate()
    if source is not None and (source.width, source.height) != (mesh.width, mesh.height):
        raise PipelineError("decode", ValueError(
            f"source is {source.width}x{source.height} but the mesh frame is "
            f"{mesh.width}x{mesh.height}"))
    start = time.perf_counter()
    tensor, mode, vertex_values = None, "none", None
    if rcfg.method == "triangle_arbf":
        if source is not None:
            tensor = TensorField.from_image(source, cfg["tensor.sigma"], cfg["tensor.kappa"])
            mode = "source"
        else:
            tensor = _stage("tensor", decode_side_tensor, mesh, cfg["tensor.sigma"],
                            cfg["tensor.kappa"])
            mode = "self"
    if rcfg.method == "vertex_iso_rbf" and source is not None:
        vertex_values = vertex_intensities(source, mesh)
        mode = "source"
    result = _stage("restore", reconstruct, mesh, tensor, rcfg, None, vertex_values)
    return DecodeResult(result, time.perf_counter() - start, mode)


def box_downsample(img: GrayImage, factor: int) -> GrayImage:
    """Mean over ``factor`` x ``factor`` blocks."""
    h, w = img.height // factor, img.width // factor
    if h * factor != img.height or w * factor != img.width:
        raise ValueError("image size is not a multiple of the factor")
    data = img.data.reshape(h, factor, w, factor).mean(axis=(1, 3))
    return GrayImage(np.ascontiguousarray(data))
