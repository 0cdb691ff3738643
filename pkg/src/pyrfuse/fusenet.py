"""The weight-shared fusion network.

Layout for ``B`` bands and ``K`` blocks, 48 feature maps throughout::

    head         5x5   B+1 -> 48   leaky ReLU
    block (xK)   5x5   48 -> 48    leaky ReLU       one parameter set,
                 5x5   48 -> 48    leaky ReLU       applied K times
                 1x1   144 -> 48   linear
    global_fuse  1x1   K*48 -> 48  linear
    tail         5x5   48 -> B     linear

Checkpoint layout (little-endian): ``b"FNET"``, uint32 version (=1),
uint32 B, uint32 K, then the twelve weight/bias arrays as float32 in the
order of :data:`LAYER_NAMES`.
"""

from __future__ import annotations

import struct
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import FormatError, LengthError, ShapeError
from .tensor_nn import ConvParams, Tape, Tensor, add, concat_channels, conv2d, leaky_relu, xavier_init

FEATURES = 48
KERNEL = 5
SLOPE = 0.2
LAYER_NAMES = ("head", "block_conv1", "block_conv2", "block_fuse", "global_fuse", "tail")

FNET_MAGIC = b"FNET"
FNET_VERSION = 1
FNET_HEADER = struct.Struct("<4sIII")

# F_{k,0} = F_{k-1,4} + F_1 ("residual") or the literal F_{k,0} = F_{k-1,0} + F_1 ("printed")
CHAINING_MODES = ("residual", "printed")


def layer_shapes(bands: int, blocks: int) -> dict:
    return {
        "head": (FEATURES, bands + 1, KERNEL, KERNEL),
        "block_conv1": (FEATURES, FEATURES, KERNEL, KERNEL),
        "block_conv2": (FEATURES, FEATURES, KERNEL, KERNEL),
        "block_fuse": (FEATURES, 3 * FEATURES, 1, 1),
        "global_fuse": (FEATURES, blocks * FEATURES, 1, 1),
        "tail": (bands, FEATURES, KERNEL, KERNEL),
    }


@dataclass(eq=False)
class FuseNetParams:
    head: ConvParams
    block_conv1: ConvParams
    block_conv2: ConvParams
    block_fuse: ConvParams
    global_fuse: ConvParams
    tail: ConvParams
    bands: int
    blocks: int

    def __post_init__(self):
        for name, shape in layer_shapes(self.bands, self.blocks).items():
            got = getattr(self, name).weight.shape
            if got != shape:
                raise ShapeError(f"{name} weight has shape {got}, expected {shape}")

    def layers(self) -> list:
        """``(name, ConvParams)`` pairs in checkpoint order."""
        return [(name, getattr(self, name)) for name in LAYER_NAMES]

    @property
    def parameter_count(self) -> int:
        return sum(p.size for _, p in self.layers())

    @property
    def dtype(self):
        return self.head.weight.dtype

    def astype(self, dtype) -> "FuseNetParams":
        return self._map(lambda p: p.astype(dtype))

    def copy(self) -> "FuseNetParams":
        return self._map(ConvParams.copy)

    def _map(self, fn) -> "FuseNetParams":
        return FuseNetParams(**{n: fn(p) for n, p in self.layers()}, bands=self.bands, blocks=self.blocks)

    def arrays(self) -> list:
        return [a for _, p in self.layers() for a in (p.weight, p.bias)]

    @contextmanager
    def frozen(self):
        """Make every parameter array read-only for the duration of the block."""
        arrays = self.arrays()
        previous = [a.flags.writeable for a in arrays]
        for a in arrays:
            a.flags.writeable = False
        try:
            yield self
        finally:
            for a, flag in zip(arrays, previous):
                a.flags.writeable = flag


def init_fusenet(bands: int, blocks: int, rng: np.random.Generator, dtype=np.float32) -> FuseNetParams:
    """Xavier-initialise every layer, drawing from ``rng`` in checkpoint order."""
    shapes = layer_shapes(bands, blocks)
    layers = {name: xavier_init(shapes[name], rng, dtype) for name in LAYER_NAMES}
    return FuseNetParams(**layers, bands=bands, blocks=blocks)


def zero_fusenet(bands: int, blocks: int, dtype=np.float32) -> FuseNetParams:
    shapes = layer_shapes(bands, blocks)
    layers = {
        name: ConvParams(np.zeros(s, dtype=dtype), np.zeros(s[0], dtype=dtype))
        for name, s in shapes.items()
    }
    return FuseNetParams(**layers, bands=bands, blocks=blocks)


def block_forward(x: Tensor, p: FuseNetParams, tape: Optional[Tape] = None) -> Tensor:
    """One local feature fusion block; the same ``p`` serves every block index."""
    if x.shape[1] != FEATURES:
        raise ShapeError(f"block input must have {FEATURES} channels, got {x.shape[1]}")
    f1 = leaky_relu(conv2d(x, p.block_conv1, tape), SLOPE, tape)
    f2 = leaky_relu(conv2d(f1, p.block_conv2, tape), SLOPE, tape)
    f3 = concat_channels([x, f1, f2], tape)
    return conv2d(f3, p.block_fuse, tape)


def fusenet_forward(
    stack: Tensor, p: FuseNetParams, tape: Optional[Tape] = None, chaining: str = "residual"
) -> Tensor:
    """Map a ``B+1``-channel stack (pan detail first) to a ``B``-channel residual."""
    if stack.shape[1] != p.bands + 1:
        raise ShapeError(f"stack must have {p.bands + 1} channels, got {stack.shape[1]}")
    if chaining not in CHAINING_MODES:
        raise ValueError(f"chaining must be one of {CHAINING_MODES}, got {chaining!r}")
    shallow = leaky_relu(conv2d(stack, p.head, tape), SLOPE, tape)
    block_in = shallow
    outputs = []
    for k in range(p.blocks):
        if k > 0:
            prev = outputs[-1] if chaining == "residual" else block_in
            block_in = add(prev, shallow, tape)
        outputs.append(block_forward(block_in, p, tape))
    fused = concat_channels(outputs, tape)
    return conv2d(conv2d(fused, p.global_fuse, tape), p.tail, tape)


def save_checkpoint(p: FuseNetParams, path) -> None:
    parts = [FNET_HEADER.pack(FNET_MAGIC, FNET_VERSION, p.bands, p.blocks)]
    parts += [a.astype("<f4").tobytes() for a in p.arrays()]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_checkpoint_header(buf: bytes) -> tuple[int, int]:
    """Validate magic and version; return ``(bands, blocks)``."""
    if buf[:4] != FNET_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {FNET_MAGIC!r}")
    if len(buf) < FNET_HEADER.size:
        raise LengthError(f"header needs {FNET_HEADER.size} bytes, file has {len(buf)}")
    _, version, bands, blocks = FNET_HEADER.unpack_from(buf)
    if version != FNET_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if bands < 1 or blocks < 1:
        raise FormatError(f"invalid header: B={bands}, K={blocks}")
    return bands, blocks


def load_checkpoint(path) -> FuseNetParams:
    with open(path, "rb") as fh:
        buf = fh.read()
    bands, blocks = read_checkpoint_header(buf)
    shapes = layer_shapes(bands, blocks)
    need = FNET_HEADER.size + 4 * sum(int(np.prod(s)) + s[0] for s in shapes.values())
    if len(buf) < need:
        raise LengthError(f"checkpoint for B={bands}, K={blocks} needs {need} bytes, file has {len(buf)}")
    if len(buf) > need:
        raise FormatError(
            f"checkpoint has {len(buf) - need} bytes beyond the arrays for B={bands}, K={blocks}"
        )
    offset = FNET_HEADER.size
    layers = {}
    for name in LAYER_NAMES:
        shape = shapes[name]
        arrays = []
        for s in (shape, (shape[0],)):
            count = int(np.prod(s))
            arrays.append(np.frombuffer(buf, "<f4", count, offset).reshape(s).astype(np.float32))
            offset += 4 * count
        layers[name] = ConvParams(*arrays)
    return FuseNetParams(**layers, bands=bands, blocks=blocks)
