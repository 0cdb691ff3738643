"""Laplacian-pyramid analysis and synthesis on the last two axes of an array.

Every operation here is a separable linear map, so each is realised as a
pair of small dense matrices (one per axis) that already fold in the
mirror boundary extension and the 2x resampling. The same matrices give
exact adjoints for backpropagation through ``expand``.

Boundary extension is whole-sample mirroring without repeating the edge
(``... c b | a b c d | c b ...``), the same rule as ``np.pad(mode="reflect")``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DimensionError

BURT_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def reflect_index(i: int, n: int) -> int:
    """Map a possibly out-of-range index onto ``[0, n)`` by mirroring."""
    if n == 1:
        return 0
    period = 2 * (n - 1)
    m = i % period
    return m if m < n else period - m


@lru_cache(maxsize=None)
def filter_matrix(n: int, taps: tuple = tuple(BURT_KERNEL)) -> np.ndarray:
    """``n x n`` matrix applying the centred kernel ``taps`` with mirror extension."""
    r = len(taps) // 2
    mat = np.zeros((n, n))
    for i in range(n):
        for k, t in enumerate(taps):
            mat[i, reflect_index(i + k - r, n)] += t
    mat.flags.writeable = False
    return mat


@lru_cache(maxsize=None)
def reduce_matrix(n: int) -> np.ndarray:
    """``n/2 x n`` operator: low-pass then keep even samples."""
    mat = np.ascontiguousarray(filter_matrix(n)[::2])
    mat.flags.writeable = False
    return mat


@lru_cache(maxsize=None)
def expand_matrix(n: int) -> np.ndarray:
    """``2n x n`` operator: zero-insertion at even samples, then filter with ``2*h``."""
    mat = np.ascontiguousarray(2.0 * filter_matrix(2 * n)[:, ::2])
    mat.flags.writeable = False
    return mat


def apply_separable(x: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Compute ``rows @ x @ cols.T`` over the last two axes, keeping ``x``'s float dtype."""
    dtype = x.dtype if np.issubdtype(x.dtype, np.floating) else np.float64
    out = rows.astype(dtype, copy=False) @ np.asarray(x, dtype=dtype)
    return out @ cols.T.astype(dtype, copy=False)


def reduce(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[-2:]
    if h % 2 or w % 2:
        raise DimensionError(f"reduce needs even dimensions, got {h}x{w}")
    return apply_separable(img, reduce_matrix(h), reduce_matrix(w))


def expand(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[-2:]
    return apply_separable(img, expand_matrix(h), expand_matrix(w))


def detail(prev: np.ndarray, reduced: np.ndarray) -> np.ndarray:
    """High-frequency residual ``prev - expand(reduced)`` at ``prev``'s resolution."""
    h, w = prev.shape[-2:]
    rh, rw = reduced.shape[-2:]
    if (2 * rh, 2 * rw) != (h, w):
        raise DimensionError(f"reduced image {rh}x{rw} is not half of {h}x{w}")
    return prev - expand(reduced)


@dataclass
class PyramidStack:
    """Low-pass approximations and detail bands of one image.

    ``lowpass[j]`` is the level-``j`` approximation (``lowpass[0]`` is the
    input). ``details[j - 1]`` is the level-``j`` detail band and lives at
    the resolution of ``lowpass[j - 1]``.
    """

    lowpass: list = field(default_factory=list)
    details: list = field(default_factory=list)

    @property
    def levels(self) -> int:
        return len(self.details)


def check_divisible(shape: tuple, levels: int) -> None:
    h, w = shape[-2:]
    step = 2**levels
    if h % step or w % step:
        raise DimensionError(f"{h}x{w} is not divisible by 2**{levels} = {step}")


def decompose(img: np.ndarray, levels: int) -> PyramidStack:
    check_divisible(np.shape(img), levels)
    stack = PyramidStack(lowpass=[np.asarray(img)])
    for _ in range(levels):
        prev = stack.lowpass[-1]
        low = reduce(prev)
        stack.lowpass.append(low)
        stack.details.append(detail(prev, low))
    return stack


def reconstruct(stack: PyramidStack) -> np.ndarray:
    """Synthesize the finest level from the coarsest approximation and all details."""
    img = stack.lowpass[-1]
    for d in reversed(stack.details):
        img = d + expand(img)
    return img


def gt_scale_approx(gt: np.ndarray, levels: int) -> list:
    """Ground-truth targets for each fusion stage, coarse to fine.

    The target for stage ``s`` (1-based) is the sum of the level detail and
    the expanded coarser approximation, which by exact synthesis equals the
    low-pass approximation ``lowpass[levels - s]``. The returned list
    therefore ends with ``gt`` itself.
    """
    stack = decompose(gt, levels)
    targets = []
    for s in range(1, levels + 1):
        j = levels - s + 1
        targets.append(stack.details[j - 1] + expand(stack.lowpass[j]))
    return targets
