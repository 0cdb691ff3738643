"""Coarse-to-fine pyramid fusion with one network shared across scales."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import pyramid
from .errors import DimensionError, ShapeError
from .fusenet import FuseNetParams, fusenet_forward
from .tensor_nn import Tape, Tensor, add, concat_channels, separable_linear


@dataclass
class FusionTrace:
    """Per-stage fused outputs, coarse to fine, each after its residual addition."""

    per_stage_outputs: list

    @property
    def final(self) -> Tensor:
        return self.per_stage_outputs[-1]

    def final_image(self) -> np.ndarray:
        """The fused result of the first batch item as a ``(B, H, W)`` array."""
        return self.final.data[0]


def build_stack(pan_detail: np.ndarray, ms_approx: np.ndarray) -> np.ndarray:
    """Channel stack for one image: pan detail first, then the B multispectral bands."""
    pan_detail = np.asarray(pan_detail)
    if pan_detail.ndim == 2:
        pan_detail = pan_detail[None]
    ms_approx = np.asarray(ms_approx)
    if pan_detail.shape[-2:] != ms_approx.shape[-2:]:
        raise ShapeError(f"pan detail {pan_detail.shape[-2:]} vs ms {ms_approx.shape[-2:]}")
    stack = np.concatenate([pan_detail, ms_approx], axis=0)
    return stack[None]


def _as_batch(arr, name: str) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim == 2:
        arr = arr[None, None]
    elif arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise ShapeError(f"{name} must be (H, W), (C, H, W) or (N, C, H, W); got {arr.shape}")
    return arr


def fuse(
    pan,
    ms,
    params: FuseNetParams,
    levels: int = 2,
    tape: Optional[Tape] = None,
    chaining: str = "residual",
) -> FusionTrace:
    """Fuse a panchromatic image with a multispectral image ``2**levels`` times coarser.

    ``pan`` is ``(H, W)``, ``(1, H, W)`` or a batch ``(N, 1, H, W)``; ``ms``
    is ``(B, h, w)`` or ``(N, B, h, w)``. Stage ``s`` pairs the running
    multispectral estimate with the pan detail band at the same resolution,
    adds the network output to that estimate, and expands the sum for the
    next stage. The last stage is not expanded.
    """
    pan = _as_batch(pan, "pan").astype(params.dtype, copy=False)
    ms = _as_batch(ms, "ms").astype(params.dtype, copy=False)
    if pan.shape[1] != 1:
        raise ShapeError(f"pan must have one band, got {pan.shape[1]}")
    if ms.shape[1] != params.bands:
        raise ShapeError(f"network expects {params.bands} bands, ms has {ms.shape[1]}")
    if pan.shape[0] != ms.shape[0]:
        raise ShapeError(f"batch sizes differ: pan {pan.shape[0]}, ms {ms.shape[0]}")
    if levels < 1:
        raise DimensionError(f"need at least one fusion stage, got levels={levels}")
    scale = 2**levels
    if pan.shape[2:] != (ms.shape[2] * scale, ms.shape[3] * scale):
        raise DimensionError(
            f"pan {pan.shape[2]}x{pan.shape[3]} must be {scale}x ms {ms.shape[2]}x{ms.shape[3]}"
        )

    details = pyramid.decompose(pan, levels).details
    estimate = Tensor(pyramid.expand(ms))
    outputs = []
    with params.frozen():
        for s in range(1, levels + 1):
            pan_detail = Tensor(details[levels - s])
            stack = concat_channels([pan_detail, estimate], tape)
            out = add(fusenet_forward(stack, params, tape, chaining), estimate, tape)
            outputs.append(out)
            if s < levels:
                h, w = out.shape[2:]
                estimate = separable_linear(
                    out, pyramid.expand_matrix(h), pyramid.expand_matrix(w), tape
                )
    return FusionTrace(outputs)


def interpolate(ms, levels: int = 2) -> np.ndarray:
    """Pyramid interpolation baseline: ``levels`` applications of ``expand``."""
    out = np.asarray(ms)
    for _ in range(levels):
        out = pyramid.expand(out)
    return out
