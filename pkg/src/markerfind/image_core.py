"""Pixel containers, binary PNM I/O, grayscale conversion and thresholding.

Images are immutable row-major rasters backed by numpy arrays (``data[y, x]``).
Binary masks hold ``{0, 1}`` exactly as the two-branch threshold rule emits
them; use :meth:`BinaryImage.to_gray` to get a ``{0, 255}`` picture for viewing.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    ParameterError,
    PnmHeaderError,
    PnmMagicError,
    PnmMaxvalError,
    PnmTruncatedError,
)

__all__ = [
    "ColorImage",
    "GrayImage",
    "BinaryImage",
    "IntegralImage",
    "GrayMethod",
    "load_pnm",
    "save_pnm",
    "read_pnm",
    "write_pnm",
    "to_grayscale",
    "threshold_global",
    "threshold_adaptive_mean",
    "integral_image",
]


def _frozen_u8(data, ndim: int, what: str) -> np.ndarray:
    arr = np.asarray(data)
    if arr.ndim != ndim:
        raise ParameterError(f"{what} needs a {ndim}-d array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ParameterError(f"{what} must be at least 1x1, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.dtype.kind not in "biu":
            raise ParameterError(f"{what} needs integer pixels, got dtype {arr.dtype}")
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ParameterError(f"{what} pixels must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    else:
        arr = arr.copy()
    arr.flags.writeable = False
    return arr


class _Raster:
    data: np.ndarray

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __eq__(self, other: object) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self) -> int:
        return hash((type(self).__name__, self.data.shape, self.data.tobytes()))


@dataclass(frozen=True, eq=False)
class GrayImage(_Raster):
    """8-bit single-channel image, ``data`` has shape (height, width)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "data", _frozen_u8(self.data, 2, "GrayImage"))

    @classmethod
    def filled(cls, width: int, height: int, value: int = 0) -> "GrayImage":
        return cls(np.full((height, width), value, dtype=np.uint8))


@dataclass(frozen=True, eq=False)
class ColorImage(_Raster):
    """8-bit RGB image, ``data`` has shape (height, width, 3)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = _frozen_u8(self.data, 3, "ColorImage")
        if arr.shape[2] != 3:
            raise ParameterError(f"ColorImage needs 3 channels, got {arr.shape[2]}")
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_gray(cls, img: GrayImage) -> "ColorImage":
        return cls(np.repeat(img.data[:, :, None], 3, axis=2))


@dataclass(frozen=True, eq=False)
class BinaryImage(_Raster):
    """Mask with values in {0, 1}."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.dtype == bool:
            arr = arr.astype(np.uint8)
        arr = _frozen_u8(arr, 2, "BinaryImage")
        if arr.max() > 1:
            raise ParameterError("BinaryImage values must be 0 or 1")
        object.__setattr__(self, "data", arr)

    def to_gray(self) -> GrayImage:
        return GrayImage(self.data * np.uint8(255))

    def count_ones(self) -> int:
        return int(np.count_nonzero(self.data))


@dataclass(frozen=True, eq=False)
class IntegralImage:
    """Summed-area table with a zero top row and left column.

    ``data[y, x]`` is the sum of all source pixels strictly above row ``y``
    and left of column ``x``, so ``data`` has shape (height + 1, width + 1).
    """

    data: np.ndarray

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    def rect_sum(self, x0: int, y0: int, x1: int, y1: int) -> int:
        """Sum over columns ``[x0, x1)`` and rows ``[y0, y1)``."""
        d = self.data
        return int(d[y1, x1] - d[y0, x1] - d[y1, x0] + d[y0, x0])

    def box_sums(self, h: int, w: int) -> np.ndarray:
        """Sums of every h-by-w window, shape (H - h + 1, W - w + 1) of the source."""
        d = self.data
        return d[h:, w:] - d[:-h, w:] - d[h:, :-w] + d[:-h, :-w]


def integral_image(img: GrayImage | np.ndarray) -> IntegralImage:
    src = img.data if isinstance(img, _Raster) else np.asarray(img)
    out = np.zeros((src.shape[0] + 1, src.shape[1] + 1), dtype=np.int64)
    np.cumsum(np.cumsum(src, axis=0, dtype=np.int64), axis=1, out=out[1:, 1:])
    out.flags.writeable = False
    return IntegralImage(out)


# --------------------------------------------------------------------------- PNM

_WHITESPACE = b" \t\r\n\v\f"


def _header_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c in _WHITESPACE:
            pos += 1
        elif c == b"#":
            nl = buf.find(b"\n", pos)
            if nl < 0:
                raise PnmHeaderError("comment runs to end of data")
            pos = nl + 1
        else:
            break
    start = pos
    while pos < n and buf[pos : pos + 1] not in _WHITESPACE and buf[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PnmHeaderError("header ended early")
    return buf[start:pos], pos


def _header_int(buf: bytes, pos: int, name: str) -> tuple[int, int]:
    tok, pos = _header_token(buf, pos)
    if not tok.isdigit():
        raise PnmHeaderError(f"bad {name} field {tok!r}")
    return int(tok), pos


def load_pnm(buf: bytes) -> GrayImage | ColorImage:
    """Parse a binary P5 (gray) or P6 (RGB) image with maxval 255."""
    buf = bytes(buf)
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise PnmMagicError(f"unsupported magic {magic!r}")
    if len(buf) < 3 or buf[2:3] not in _WHITESPACE + b"#":
        raise PnmHeaderError("magic must be followed by whitespace")
    width, pos = _header_int(buf, 2, "width")
    height, pos = _header_int(buf, pos, "height")
    maxval, pos = _header_int(buf, pos, "maxval")
    if width < 1 or height < 1:
        raise PnmHeaderError(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise PnmMaxvalError(f"maxval must be 255, got {maxval}")
    if pos >= len(buf) or buf[pos : pos + 1] not in _WHITESPACE:
        raise PnmHeaderError("missing whitespace after maxval")
    pos += 1
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    payload = buf[pos : pos + need]
    if len(payload) < need:
        raise PnmTruncatedError(f"expected {need} payload bytes, got {len(payload)}")
    arr = np.frombuffer(payload, dtype=np.uint8)
    if channels == 1:
        return GrayImage(arr.reshape(height, width))
    return ColorImage(arr.reshape(height, width, 3))


def save_pnm(img: GrayImage | ColorImage) -> bytes:
    if isinstance(img, GrayImage):
        magic = b"P5"
    elif isinstance(img, ColorImage):
        magic = b"P6"
    else:
        raise ParameterError(f"cannot write {type(img).__name__} as PNM")
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return header + np.ascontiguousarray(img.data).tobytes()


def read_pnm(path) -> GrayImage | ColorImage:
    with open(path, "rb") as fh:
        return load_pnm(fh.read())


def write_pnm(path, img: GrayImage | ColorImage) -> None:
    with open(path, "wb") as fh:
        fh.write(save_pnm(img))


# --------------------------------------------------------------------- grayscale


class GrayMethod(str, Enum):
    LUMINANCE = "luminance"
    RED = "r"
    GREEN = "g"
    BLUE = "b"


_CHANNEL = {GrayMethod.RED: 0, GrayMethod.GREEN: 1, GrayMethod.BLUE: 2}


def to_grayscale(img: ColorImage, method: GrayMethod | str = GrayMethod.LUMINANCE) -> GrayImage:
    """Luminance (0.299/0.587/0.114, round half up) or a single copied channel."""
    method = GrayMethod(method)
    if method is not GrayMethod.LUMINANCE:
        return GrayImage(img.data[:, :, _CHANNEL[method]])
    rgb = img.data.astype(np.int32)
    # integer weights per mille keep the rounding exact
    y = (299 * rgb[:, :, 0] + 587 * rgb[:, :, 1] + 114 * rgb[:, :, 2] + 500) // 1000
    return GrayImage(y.astype(np.uint8))


def as_gray(img: GrayImage | ColorImage, method: GrayMethod | str = GrayMethod.LUMINANCE) -> GrayImage:
    if isinstance(img, GrayImage):
        return img
    return to_grayscale(img, method)


# ------------------------------------------------------------------ thresholding


def threshold_global(img: GrayImage, P: int) -> BinaryImage:
    """0 where ``img <= P``, 1 elsewhere."""
    if not 0 <= P <= 255:
        raise ParameterError(f"threshold P must be in [0, 255], got {P}")
    return BinaryImage((img.data > P).view(np.uint8))


def threshold_adaptive_mean(img: GrayImage, window: int, C: float) -> BinaryImage:
    """0 where a pixel is at most its box mean minus ``C``; edges replicated."""
    if window < 3 or window % 2 == 0:
        raise ParameterError(f"window must be odd and >= 3, got {window}")
    if window > 2 * min(img.width, img.height) + 1:
        raise ParameterError(
            f"window {window} too large for {img.width}x{img.height} image"
        )
    r = window // 2
    padded = np.pad(img.data, r, mode="edge")
    sums = integral_image(padded).box_sums(window, window)
    area = window * window
    # pixel <= sum/area - C  <=>  pixel*area <= sum - C*area, exact for integer C
    lhs = img.data.astype(np.int64) * area
    if float(C).is_integer():
        mask = lhs > sums - int(C) * area
    else:
        mask = lhs > sums - C * area
    return BinaryImage(mask.view(np.uint8))
