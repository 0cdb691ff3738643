"""Multi-band raster images and the MBR binary container.

MBR layout (little-endian)::

    magic            4 bytes  b"MBR1"
    width            uint32
    height           uint32
    bands            uint32
    dtype            uint32   0 = uint16 samples, 1 = float32 samples
    radiometric_max  float32
    samples          bands * height * width, band-sequential, row-major

Integer files are normalized by ``radiometric_max`` on load; float files are
taken as already normalized.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from os import PathLike
from typing import Union

import numpy as np

from .errors import FormatError, LengthError, RangeError, UnsupportedDtypeError

MBR_MAGIC = b"MBR1"
MBR_HEADER = struct.Struct("<4sIIIIf")
DTYPE_U16 = 0
DTYPE_F32 = 1
DEFAULT_RADIOMETRIC_MAX = 2047.0

_DTYPE_CODES = {"u16": DTYPE_U16, "f32": DTYPE_F32}
_SAMPLE_TYPES = {DTYPE_U16: np.dtype("<u2"), DTYPE_F32: np.dtype("<f4")}

PathType = Union[str, PathLike]


@dataclass(frozen=True, eq=False)
class RasterImage:
    """A normalized multi-band image stored as ``(bands, height, width)`` float32.

    The pixel array is copied on construction and made read-only, so
    instances can be shared freely.
    """

    data: np.ndarray
    radiometric_max: float = DEFAULT_RADIOMETRIC_MAX

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float32, copy=True)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[0] < 1:
            raise ValueError(f"expected (bands, height, width) data, got shape {arr.shape}")
        if not self.radiometric_max > 0:
            raise ValueError(f"radiometric_max must be positive, got {self.radiometric_max}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "radiometric_max", float(self.radiometric_max))

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def crop(self, height: int, width: int) -> "RasterImage":
        """Top-left crop to ``height x width``."""
        return RasterImage(self.data[:, :height, :width], self.radiometric_max)

    def __repr__(self):
        return (
            f"RasterImage({self.width}x{self.height}, {self.bands} bands, "
            f"max {self.radiometric_max:g})"
        )


def read_mbr_header(buf: bytes) -> tuple[int, int, int, int, float]:
    """Parse and validate the fixed 24-byte MBR header.

    Returns ``(width, height, bands, dtype_code, radiometric_max)``.
    """
    if len(buf) < MBR_HEADER.size:
        if buf[:4] != MBR_MAGIC[: len(buf[:4])]:
            raise FormatError(f"bad magic {buf[:4]!r}, expected {MBR_MAGIC!r}")
        raise LengthError(f"header needs {MBR_HEADER.size} bytes, file has {len(buf)}")
    magic, width, height, bands, code, rmax = MBR_HEADER.unpack_from(buf)
    if magic != MBR_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MBR_MAGIC!r}")
    if code not in _SAMPLE_TYPES:
        raise UnsupportedDtypeError(f"dtype code {code} is not one of 0 (u16), 1 (f32)")
    return width, height, bands, code, rmax


def decode_mbr(buf: bytes) -> RasterImage:
    width, height, bands, code, rmax = read_mbr_header(buf)
    sample_type = _SAMPLE_TYPES[code]
    count = width * height * bands
    need = MBR_HEADER.size + count * sample_type.itemsize
    if len(buf) < need:
        raise LengthError(f"payload truncated: need {need} bytes, file has {len(buf)}")
    if len(buf) > need:
        raise FormatError(f"{len(buf) - need} trailing bytes after payload")
    if not rmax > 0:
        raise FormatError(f"radiometric_max must be positive, header has {rmax}")
    samples = np.frombuffer(buf, dtype=sample_type, count=count, offset=MBR_HEADER.size)
    samples = samples.reshape(bands, height, width)
    if code == DTYPE_U16:
        data = (samples.astype(np.float64) / rmax).astype(np.float32)
    else:
        data = samples.astype(np.float32)
    return RasterImage(data, rmax)


def encode_mbr(img: RasterImage, dtype: str = "f32") -> bytes:
    try:
        code = _DTYPE_CODES[dtype]
    except KeyError:
        raise UnsupportedDtypeError(f"unknown storage dtype {dtype!r}; use 'u16' or 'f32'") from None
    data = img.data
    if code == DTYPE_U16:
        if not np.all((data >= 0.0) & (data <= 1.0)):
            bad = data[~((data >= 0.0) & (data <= 1.0))][0]
            raise RangeError(f"sample {bad} outside [0, 1] cannot be stored as u16")
        scaled = np.floor(data.astype(np.float64) * img.radiometric_max + 0.5)
        if scaled.max(initial=0) > np.iinfo(np.uint16).max:
            raise RangeError(f"radiometric_max {img.radiometric_max} exceeds the u16 range")
        payload = scaled.astype("<u2").tobytes()
    else:
        payload = data.astype("<f4").tobytes()
    header = MBR_HEADER.pack(
        MBR_MAGIC, img.width, img.height, img.bands, code, img.radiometric_max
    )
    return header + payload


def load_mbr(path: PathType) -> RasterImage:
    with open(path, "rb") as fh:
        return decode_mbr(fh.read())


def save_mbr(img: RasterImage, path: PathType, dtype: str = "f32") -> None:
    """Write ``img`` to ``path``.

    ``dtype="u16"`` quantizes each sample to ``round(x * radiometric_max)``
    and requires every sample in [0, 1]; ``"f32"`` stores samples verbatim.
    """
    buf = encode_mbr(img, dtype)
    with open(path, "wb") as fh:
        fh.write(buf)


def export_ppm(img: RasterImage, band_triple: tuple[int, int, int]) -> bytes:
    """Render three bands as a binary 8-bit PPM (P6)."""
    if len(band_triple) != 3:
        raise ValueError(f"need exactly three band indices, got {band_triple!r}")
    for b in band_triple:
        if not 0 <= b < img.bands:
            raise IndexError(f"band index {b} out of range for {img.bands}-band image")
    rgb = img.data[list(band_triple)].astype(np.float64)
    rgb = np.floor(np.clip(rgb, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(rgb.transpose(1, 2, 0)).tobytes()
