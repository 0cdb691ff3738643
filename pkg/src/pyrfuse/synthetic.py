"""Procedural multispectral scenes for desk-scale experiments.

A scene is a high-resolution ``truth`` cube built from a few materials:
each material has a smooth spectral signature, and its per-pixel
abundance comes from fractal noise plus hard-edged rectangles and disks
(a stand-in for roofs, roads and fields). The panchromatic image is a
fixed weighted sum of the truth bands and the multispectral image is the
truth degraded by the sensor ratio, so reduced-scale simulation of a
scene stays radiometrically consistent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .training import wald_degrade


@dataclass
class Scene:
    pan: np.ndarray  # (1, S, S)
    ms: np.ndarray  # (B, S/ratio, S/ratio)
    truth: np.ndarray  # (B, S, S)


def fractal_noise(size: int, rng: np.random.Generator, octaves=(1, 2, 4, 8, 16)) -> np.ndarray:
    out = np.zeros((size, size))
    for sigma in octaves:
        layer = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
        out += sigma**0.5 * layer / (layer.std() + 1e-12)
    return (out - out.mean()) / (out.std() + 1e-12)


def _shapes(size: int, rng: np.random.Generator, count: int) -> np.ndarray:
    mask = np.zeros((size, size))
    yy, xx = np.mgrid[:size, :size]
    for _ in range(count):
        if rng.random() < 0.6:
            h, w = rng.integers(size // 16 + 2, size // 4 + 3, size=2)
            y, x = rng.integers(0, size - h), rng.integers(0, size - w)
            mask[y : y + h, x : x + w] = rng.uniform(-1.5, 1.5)
        else:
            r = rng.uniform(size / 32 + 1, size / 8 + 1)
            cy, cx = rng.uniform(0, size, size=2)
            mask[(yy - cy) ** 2 + (xx - cx) ** 2 < r * r] = rng.uniform(-1.5, 1.5)
    return mask


def spectral_signatures(materials: int, bands: int, rng: np.random.Generator) -> np.ndarray:
    grid = np.linspace(0.0, 1.0, bands)
    sig = np.empty((materials, bands))
    for m in range(materials):
        centre, width = rng.uniform(0, 1), rng.uniform(0.3, 0.9)
        base = rng.uniform(0.15, 0.45)
        sig[m] = base + rng.uniform(0.2, 0.45) * np.exp(-(((grid - centre) / width) ** 2))
    return sig


def pan_weights(bands: int) -> np.ndarray:
    w = np.hanning(bands + 2)[1:-1]
    return w / w.sum()


def make_scene(size: int = 128, bands: int = 8, rng=None, ratio: int = 4, materials: int = 4) -> Scene:
    """Generate one scene with ``size x size`` pan and ``size/ratio`` multispectral bands."""
    rng = np.random.default_rng(rng)
    logits = np.stack(
        [2.0 * fractal_noise(size, rng) + 2.0 * _shapes(size, rng, 10) for _ in range(materials)]
    )
    abundance = np.exp(logits - logits.max(axis=0))
    abundance /= abundance.sum(axis=0)
    shading = 0.75 + 0.2 * np.tanh(fractal_noise(size, rng, octaves=(1, 2, 4)))
    signatures = spectral_signatures(materials, bands, rng)
    truth = np.einsum("mb,mhw->bhw", signatures, abundance) * shading
    truth = np.clip(truth, 0.0, 1.0).astype(np.float32)
    pan = np.einsum("b,bhw->hw", pan_weights(bands), truth)[None].astype(np.float32)
    ms = wald_degrade(truth, ratio).astype(np.float32)
    return Scene(pan, ms, truth)


def make_scenes(count: int, size: int = 128, bands: int = 8, seed: int = 0, ratio: int = 4) -> list:
    seqs = np.random.SeedSequence(seed).spawn(count)
    return [make_scene(size, bands, np.random.default_rng(s), ratio) for s in seqs]
