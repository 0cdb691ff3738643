"""Reduced-scale (SAM, ERGAS, QAVE, SCC) and full-scale (D_lambda, D_s, QNR) quality indices.

Images are ``(bands, height, width)`` arrays; all arithmetic is float64.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DegenerateBandError, DimensionError, ShapeError
from .training import wald_degrade

Q_WINDOW = 32
ERGAS_RATIO = 0.25
REDUCED_KEYS = ("QAVE", "SAM", "ERGAS", "SCC")
FULL_KEYS = ("D_lambda", "D_s", "QNR")

SCC_KERNEL = np.array([[-1.0, -1.0, -1.0], [-1.0, 8.0, -1.0], [-1.0, -1.0, -1.0]])


def _bands(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    return arr[None] if arr.ndim == 2 else arr


def _same_shape(fused, ref) -> tuple:
    fused, ref = _bands(fused), _bands(ref)
    if fused.shape != ref.shape:
        raise ShapeError(f"shapes differ: {fused.shape} vs {ref.shape}")
    return fused, ref


def sam(fused, ref) -> float:
    """Mean spectral angle in degrees; pixels where either vector is zero are skipped."""
    fused, ref = _same_shape(fused, ref)
    if fused.shape[0] < 2:
        raise ShapeError("SAM needs at least two bands")
    nf = np.linalg.norm(fused, axis=0)
    nr = np.linalg.norm(ref, axis=0)
    valid = (nf > 0) & (nr > 0)
    if not np.any(valid):
        return 0.0
    u = fused[:, valid] / nf[valid]
    v = ref[:, valid] / nr[valid]
    # 2*atan2(|u - v|, |u + v|) stays accurate for nearly parallel vectors, unlike arccos
    angle = 2.0 * np.arctan2(np.linalg.norm(u - v, axis=0), np.linalg.norm(u + v, axis=0))
    return float(np.degrees(np.mean(angle)))


def ergas(fused, ref, scale_ratio: float = ERGAS_RATIO) -> float:
    fused, ref = _same_shape(fused, ref)
    rmse = np.sqrt(np.mean((fused - ref) ** 2, axis=(1, 2)))
    means = np.mean(ref, axis=(1, 2))
    if np.any(means == 0):
        raise DegenerateBandError(f"reference band {int(np.argmin(np.abs(means)))} has zero mean")
    return float(100.0 * scale_ratio * np.sqrt(np.mean((rmse / means) ** 2)))


def _window_sums(img: np.ndarray, window: int) -> np.ndarray:
    """Sums over every ``window x window`` block (stride 1) from a summed-area table."""
    sat = np.zeros((img.shape[0] + 1, img.shape[1] + 1))
    sat[1:, 1:] = img.cumsum(0).cumsum(1)
    return sat[window:, window:] - sat[:-window, window:] - sat[window:, :-window] + sat[:-window, :-window]


def q_index_map(x, y, window: int = Q_WINDOW) -> np.ndarray:
    """Universal image quality index of every window; degenerate windows are NaN."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise ShapeError(f"q_index needs two equal 2-D images, got {x.shape} and {y.shape}")
    if min(x.shape) < window:
        raise DimensionError(f"image {x.shape[0]}x{x.shape[1]} is smaller than window {window}")
    n = float(window * window)
    # shifting by a global offset leaves variances unchanged and limits cancellation
    cx, cy = x.mean(), y.mean()
    xs, ys = x - cx, y - cy
    sx = _window_sums(xs, window)
    sy = _window_sums(ys, window)
    mx, my = sx / n + cx, sy / n + cy
    vx = _window_sums(xs * xs, window) / n - (sx / n) ** 2
    vy = _window_sums(ys * ys, window) / n - (sy / n) ** 2
    cxy = _window_sums(xs * ys, window) / n - (sx / n) * (sy / n)
    var_sum = vx + vy
    mean_sq = mx * mx + my * my
    # relative floors absorb summed-area rounding on flat windows
    scale = max(np.max(np.abs(x)), np.max(np.abs(y)), 1e-300) ** 2
    ok = (var_sum > 1e-12 * scale) & (mean_sq > 1e-12 * scale)
    q = np.full(var_sum.shape, np.nan)
    q[ok] = 4.0 * cxy[ok] * mx[ok] * my[ok] / (var_sum[ok] * mean_sq[ok])
    return q


def q_index(x, y, window: int = Q_WINDOW) -> float:
    """Mean windowed Q over all non-degenerate windows (1.0 if every window is flat)."""
    q = q_index_map(x, y, window)
    if np.all(np.isnan(q)):
        return 1.0
    return float(np.nanmean(q))


def qave(fused, ref, window: int = Q_WINDOW) -> float:
    fused, ref = _same_shape(fused, ref)
    return float(np.mean([q_index(f, r, window) for f, r in zip(fused, ref)]))


def highpass(band: np.ndarray) -> np.ndarray:
    """8-centre Laplacian with mirror (edge-not-repeated) boundary."""
    return ndimage.correlate(np.asarray(band, dtype=np.float64), SCC_KERNEL, mode="mirror")


def scc(fused, ref) -> float:
    fused, ref = _same_shape(fused, ref)
    values = []
    for b, (f, r) in enumerate(zip(fused, ref)):
        hf = highpass(f).ravel()
        hr = highpass(r).ravel()
        hf = hf - hf.mean()
        hr = hr - hr.mean()
        denom = np.sqrt(np.dot(hf, hf) * np.dot(hr, hr))
        if denom == 0:
            raise DegenerateBandError(f"band {b} has no high-frequency content")
        values.append(np.dot(hf, hr) / denom)
    return float(np.mean(values))


def d_lambda(fused, ms, window: int = Q_WINDOW) -> float:
    """Spectral distortion: mean absolute change of inter-band Q between scales."""
    fused, ms = _bands(fused), _bands(ms)
    bands = fused.shape[0]
    if bands < 2:
        raise ShapeError("D_lambda needs at least two bands")
    if ms.shape[0] != bands:
        raise ShapeError(f"band counts differ: {bands} vs {ms.shape[0]}")
    total = 0.0
    for b in range(bands):
        for r in range(b + 1, bands):
            diff = abs(q_index(fused[b], fused[r], window) - q_index(ms[b], ms[r], window))
            total += 2.0 * diff  # the (b, r) and (r, b) terms are equal by symmetry
    return total / (bands * (bands - 1))


def d_s(fused, ms, pan, window: int = Q_WINDOW, ratio: int = 4) -> float:
    """Spatial distortion: mean absolute change of band-to-pan Q between scales."""
    fused, ms = _bands(fused), _bands(ms)
    pan = _bands(pan)[0]
    if fused.shape[0] != ms.shape[0]:
        raise ShapeError(f"band counts differ: {fused.shape[0]} vs {ms.shape[0]}")
    if fused.shape[1:] != pan.shape:
        raise ShapeError(f"fused {fused.shape[1:]} and pan {pan.shape} differ")
    if pan.shape != (ms.shape[1] * ratio, ms.shape[2] * ratio):
        raise ShapeError(f"pan {pan.shape} is not {ratio}x ms {ms.shape[1:]}")
    pan_lr = wald_degrade(pan, ratio)
    diffs = [abs(q_index(f, pan, window) - q_index(m, pan_lr, window)) for f, m in zip(fused, ms)]
    return float(np.mean(diffs))


def qnr(d_lambda_value: float, d_s_value: float, alpha: float = 1.0, beta: float = 1.0) -> float:
    return (1.0 - d_lambda_value) ** alpha * (1.0 - d_s_value) ** beta


@dataclass
class MetricsReport:
    context: str  # "reduced" or "full"
    values: dict = field(default_factory=dict)
    per_band: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "value"])
        for k, v in self.values.items():
            writer.writerow([k, repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MetricsReport":
        rows = list(csv.DictReader(io.StringIO(text)))
        values = {row["metric"]: float(row["value"]) for row in rows}
        context = "full" if set(values) == set(FULL_KEYS) else "reduced"
        return cls(context, values)

    def to_markdown(self, label: str = "Proposed") -> str:
        keys = list(self.values)
        head = "| Scheme | " + " | ".join(keys) + " |"
        rule = "|---" * (len(keys) + 1) + "|"
        row = f"| {label} | " + " | ".join(f"{self.values[k]:.4f}" for k in keys) + " |"
        return "\n".join([head, rule, row]) + "\n"


def evaluate_reduced(fused, gt, window: int = Q_WINDOW) -> MetricsReport:
    fused, gt = _same_shape(fused, gt)
    per_q = [q_index(f, r, window) for f, r in zip(fused, gt)]
    values = {
        "QAVE": float(np.mean(per_q)),
        "SAM": sam(fused, gt),
        "ERGAS": ergas(fused, gt),
        "SCC": scc(fused, gt),
    }
    return MetricsReport("reduced", values, {"Q": per_q})


def evaluate_full(fused, ms, pan, window: int = Q_WINDOW) -> MetricsReport:
    dl = d_lambda(fused, ms, window)
    ds = d_s(fused, ms, pan, window)
    return MetricsReport("full", {"D_lambda": dl, "D_s": ds, "QNR": qnr(dl, ds)})
