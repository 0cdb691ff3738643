"""Reduced-scale training: Wald simulation, patch sampling, multi-scale loss, ADAM."""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from os import PathLike
from typing import Iterator, Optional, Sequence

import numpy as np

from . import pyramid
from .errors import ConfigError, DimensionError, ShapeError
from .fusenet import FuseNetParams, init_fusenet, save_checkpoint
from .fusion import FusionTrace, fuse
from .raster import RasterImage, load_mbr
from .tensor_nn import Tape, backward

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 20
    patch_size: int = 192
    iterations: int = 1000
    seed: int = 0
    K: int = 4
    J: int = 2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patch_size < 1 or self.patch_size % (2**self.J):
            raise ConfigError(f"patch_size {self.patch_size} is not divisible by 2**J = {2**self.J}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.K < 1 or self.J < 1:
            raise ConfigError(f"K and J must be >= 1, got K={self.K}, J={self.J}")

    @property
    def ratio(self) -> int:
        """PAN/MS resolution ratio implied by the number of fusion stages."""
        return 2**self.J


def parse_config(text: str) -> TrainConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    types = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    casts = {"float": float, "int": int}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = casts[types[key]](value)
        except ValueError:
            raise ConfigError(f"line {lineno}: {key} = {value!r} is not a valid {types[key]}") from None
    return TrainConfig(**values)


def load_config(path) -> TrainConfig:
    with open(path) as fh:
        return parse_config(fh.read())


# -- data ----------------------------------------------------------------------


def wald_degrade(img: np.ndarray, factor: int = 4) -> np.ndarray:
    """Downsample by a power-of-two ``factor`` with repeated pyramid ``reduce``."""
    if factor < 1 or factor & (factor - 1):
        raise DimensionError(f"factor must be a power of two, got {factor}")
    h, w = np.shape(img)[-2:]
    if h % factor or w % factor:
        raise DimensionError(f"{h}x{w} is not divisible by {factor}")
    out = np.asarray(img)
    while factor > 1:
        out = pyramid.reduce(out)
        factor //= 2
    return out


@dataclass
class TrainSample:
    pan_lr: np.ndarray  # (1, P, P)
    ms_lr: np.ndarray  # (B, P/ratio, P/ratio)
    gt: np.ndarray  # (B, P, P)


def _as_image(x) -> np.ndarray:
    if isinstance(x, RasterImage):
        return x.data
    if isinstance(x, (str, PathLike)):
        return load_mbr(x).data
    arr = np.asarray(x, dtype=np.float32)
    return arr[None] if arr.ndim == 2 else arr


def simulate_reduced(pan, ms, ratio: int = 4) -> tuple:
    """Wald's protocol: degrade both inputs by ``ratio``; the original MS is the reference.

    Returns ``(pan_lr, ms_lr, gt)``.
    """
    pan, ms = _as_image(pan), _as_image(ms)
    if pan.shape[-2:] != (ms.shape[-2] * ratio, ms.shape[-1] * ratio):
        raise DimensionError(
            f"pan {pan.shape[-2]}x{pan.shape[-1]} is not {ratio}x ms {ms.shape[-2]}x{ms.shape[-1]}"
        )
    return wald_degrade(pan, ratio), wald_degrade(ms, ratio), ms


def make_samples(pan, ms, cfg: TrainConfig, rng: np.random.Generator) -> Iterator[TrainSample]:
    """Endless stream of aligned random crops from one reduced-scale triple."""
    pan_lr, ms_lr, gt = simulate_reduced(pan, ms, cfg.ratio)
    yield from _crops(pan_lr, ms_lr, gt, cfg, rng)


def _crops(pan_lr, ms_lr, gt, cfg: TrainConfig, rng) -> Iterator[TrainSample]:
    size, ratio = cfg.patch_size, cfg.ratio
    h, w = gt.shape[-2:]
    if h < size or w < size:
        raise DimensionError(f"reduced-scale image {h}x{w} is smaller than patch {size}")
    while True:
        # origins on the ms grid keep the three crops exactly aligned
        y = int(rng.integers(0, (h - size) // ratio + 1)) * ratio
        x = int(rng.integers(0, (w - size) // ratio + 1)) * ratio
        ys, xs = y // ratio, x // ratio
        m = size // ratio
        yield TrainSample(
            pan_lr[:, y : y + size, x : x + size],
            ms_lr[:, ys : ys + m, xs : xs + m],
            gt[:, y : y + size, x : x + size],
        )


# -- loss ------------------------------------------------------------------------


def multiscale_loss(trace: FusionTrace, gt) -> tuple:
    """Sum over stages of the mean squared error against the ground-truth pyramid.

    Returns ``(loss, seeds)`` where ``seeds`` maps each stage output tensor
    to ``d loss / d output``, ready for :func:`pyrfuse.tensor_nn.backward`.
    """
    gt = np.asarray(gt)
    if gt.ndim == 3:
        gt = gt[None]
    final = trace.final
    if gt.shape != final.shape:
        raise ShapeError(f"ground truth {gt.shape} does not match fused output {final.shape}")
    levels = len(trace.per_stage_outputs)
    targets = pyramid.gt_scale_approx(gt.astype(final.dtype, copy=False), levels)
    loss = 0.0
    seeds = {}
    for out, target in zip(trace.per_stage_outputs, targets):
        diff = out.data - target
        loss += float(np.mean(np.square(diff, dtype=np.float64)))
        seeds[out] = (2.0 / diff.size) * diff
    return loss, seeds


# -- optimizer ---------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: FuseNetParams, grads, state: AdamState, cfg: TrainConfig):
    """One bias-corrected ADAM update, applied in place.

    ``grads`` maps layer name (or the layer's ConvParams) to a
    ``(d_weight, d_bias)`` pair; layers without an entry get a zero gradient.
    Returns ``(params, state)``.
    """
    state.t += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, layer in params.layers():
        pair = grads.get(name) if isinstance(grads, dict) else None
        if pair is None:
            pair = grads[layer] if layer in grads else (None, None)
        for suffix, value, g in (("weight", layer.weight, pair[0]), ("bias", layer.bias, pair[1])):
            key = f"{name}.{suffix}"
            if g is None:
                g = np.zeros_like(value)
            if g.shape != value.shape:
                raise ShapeError(f"{key}: gradient {g.shape} vs parameter {value.shape}")
            m = state.m.get(key)
            v = state.v.get(key)
            if m is None:
                m = np.zeros_like(value)
                v = np.zeros_like(value)
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * np.square(g)
            state.m[key], state.v[key] = m, v
            value -= (cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)).astype(value.dtype)
    return params, state


# -- loop --------------------------------------------------------------------------


@dataclass
class TrainResult:
    params: FuseNetParams
    losses: list


def _seeds(seed: int) -> tuple:
    init_seq, data_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_seq), np.random.default_rng(data_seq)


def initial_params(cfg: TrainConfig, bands: int) -> FuseNetParams:
    """The Xavier initialization ``train`` starts from for this config."""
    return init_fusenet(bands, cfg.K, _seeds(cfg.seed)[0])


def train_step(params, batch: Sequence[TrainSample], state: AdamState, cfg: TrainConfig) -> float:
    pan = np.stack([s.pan_lr for s in batch])
    ms = np.stack([s.ms_lr for s in batch])
    gt = np.stack([s.gt for s in batch])
    tape = Tape()
    trace = fuse(pan, ms, params, cfg.J, tape)
    loss, seeds = multiscale_loss(trace, gt)
    if not np.isfinite(loss):
        raise FloatingPointError(f"loss became {loss} at step {state.t + 1}")
    grads = backward(tape, seeds)
    adam_step(params, grads, state, cfg)
    return loss


def write_loss_log(losses: Sequence[float], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "loss"])
        for i, loss in enumerate(losses):
            writer.writerow([i, repr(float(loss))])


def read_loss_log(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [float(row["loss"]) for row in reader]


def train(
    dataset: Sequence[tuple],
    cfg: TrainConfig,
    checkpoint_path=None,
    loss_log_path=None,
    params: Optional[FuseNetParams] = None,
    progress_every: int = 0,
) -> TrainResult:
    """Train on full-scale ``(pan, ms)`` pairs simulated down to reduced scale.

    Pairs may be file paths, :class:`RasterImage` objects or arrays. Each
    batch draws ``batch_size`` crops, picking the source pair uniformly.
    """
    if not dataset:
        raise ValueError("dataset must contain at least one (pan, ms) pair")
    triples = [simulate_reduced(pan, ms, cfg.ratio) for pan, ms in dataset]
    bands = triples[0][1].shape[0]
    if any(t[1].shape[0] != bands for t in triples):
        raise ShapeError("all multispectral images must have the same band count")

    init_rng, data_rng = _seeds(cfg.seed)
    if params is None:
        params = init_fusenet(bands, cfg.K, init_rng)
    streams = [_crops(*t, cfg, data_rng) for t in triples]
    state = AdamState()
    losses = []
    for it in range(cfg.iterations):
        batch = [next(streams[int(data_rng.integers(len(streams)))]) for _ in range(cfg.batch_size)]
        losses.append(train_step(params, batch, state, cfg))
        if progress_every and (it % progress_every == 0 or it == cfg.iterations - 1):
            log.info("iteration %d loss %.6g", it, losses[-1])

    if checkpoint_path is not None:
        save_checkpoint(params, checkpoint_path)
    if loss_log_path is not None:
        write_loss_log(losses, loss_log_path)
    return TrainResult(params, losses)
