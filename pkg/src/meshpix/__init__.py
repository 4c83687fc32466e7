"""Grayscale mesh image codec with anisotropic RBF decoding."""

from .core import (GrayImage, ImageFormatError, MeshFormatError, MeshpixError, Point2,
                   TriMesh, load_image, load_mesh, quantize, save_image, save_mesh)
from .codec import decode, encode
from .config import RunConfig, load_config
from .restore import RestoreConfig, reconstruct, restore

__all__ = [
    "GrayImage", "TriMesh", "Point2", "MeshpixError", "ImageFormatError", "MeshFormatError",
    "load_image", "save_image", "load_mesh", "save_mesh", "quantize",
    "encode", "decode", "RunConfig", "load_config", "RestoreConfig", "restore", "reconstruct",
]
