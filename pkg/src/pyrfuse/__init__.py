"""Laplacian-pyramid deep pansharpening on plain numpy."""

from .fusenet import FuseNetParams, fusenet_forward, init_fusenet, load_checkpoint, save_checkpoint
from .fusion import FusionTrace, fuse, interpolate
from .metrics import MetricsReport, evaluate_full, evaluate_reduced
from .raster import RasterImage, export_ppm, load_mbr, save_mbr
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "FuseNetParams",
    "FusionTrace",
    "MetricsReport",
    "RasterImage",
    "TrainConfig",
    "evaluate_full",
    "evaluate_reduced",
    "export_ppm",
    "fuse",
    "fusenet_forward",
    "init_fusenet",
    "interpolate",
    "load_checkpoint",
    "load_mbr",
    "save_checkpoint",
    "save_mbr",
    "train",
]
