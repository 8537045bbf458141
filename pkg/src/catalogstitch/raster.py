"""Pixel-exact image and mask primitives.

Images are ``(H, W, C)`` uint8 arrays (C is 3 or 4), masks are ``(H, W)``
uint8 arrays binarized at ``fg_threshold``. Both wrappers hold read-only
copies so they can be shared between threads.
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Tuple, Union

import numpy as np
from PIL import Image

from .errors import DimensionMismatch, EmptyMask, FormatError

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
DEFAULT_FG_THRESHOLD = 128

# IHDR color types we accept
_GRAY, _RGB, _RGBA = 0, 2, 6
_COLOR_TYPE_NAMES = {0: "grayscale", 2: "RGB", 3: "palette", 4: "grayscale+alpha", 6: "RGBA"}


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.uint8, copy=True, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class BBox:
    """Integer pixel rectangle; ``x``/``y`` is the top-left corner, extents exclusive."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise TypeError(f"BBox.{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.w < 1 or self.h < 1:
            raise ValueError(f"BBox extents must be >= 1, got w={self.w}, h={self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"BBox origin must be non-negative, got ({self.x}, {self.y})")

    @property
    def x1(self) -> int:
        return self.x + self.w

    @property
    def y1(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def center(self) -> Tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def intersection(self, other: "BBox"):
        """Overlapping rectangle, or ``None`` when the boxes are disjoint."""
        x0, y0 = max(self.x, other.x), max(self.y, other.y)
        x1, y1 = min(self.x1, other.x1), min(self.y1, other.y1)
        if x1 <= x0 or y1 <= y0:
            return None
        return BBox(x0, y0, x1 - x0, y1 - y0)

    def slices(self) -> Tuple[slice, slice]:
        return slice(self.y, self.y1), slice(self.x, self.x1)

    def to_list(self):
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_list(cls, values) -> "BBox":
        x, y, w, h = values
        return cls(int(x), int(y), int(w), int(h))

    def __eq__(self, other):
        if not isinstance(other, BBox):
            return NotImplemented
        return (self.x, self.y, self.w, self.h) == (other.x, other.y, other.w, other.h)

    def __hash__(self):
        return hash((self.x, self.y, self.w, self.h))

    def __repr__(self):
        return f"BBox({self.x}, {self.y}, {self.w}, {self.h})"


@dataclass(frozen=True, eq=False)
class RasterImage:
    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.dtype != np.uint8:
            raise TypeError(f"RasterImage needs uint8 samples, got {arr.dtype}")
        if arr.ndim != 3 or arr.shape[2] not in (3, 4):
            raise ValueError(f"RasterImage needs shape (H, W, 3|4), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("RasterImage must be at least 1x1")
        object.__setattr__(self, "pixels", _frozen(arr))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def size(self) -> Tuple[int, int]:
        return (self.width, self.height)

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def rgb(self) -> "RasterImage":
        if self.channels == 3:
            return self
        return RasterImage(self.pixels[:, :, :3])

    def crop(self, box: BBox) -> "RasterImage":
        return RasterImage(self.pixels[box.slices()])

    @classmethod
    def filled(cls, width: int, height: int, color=(0, 0, 0)) -> "RasterImage":
        arr = np.empty((height, width, len(color)), dtype=np.uint8)
        arr[:] = np.asarray(color, dtype=np.uint8)
        return cls(arr)

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"RasterImage({self.width}x{self.height}x{self.channels})"


@dataclass(frozen=True, eq=False)
class BinaryMask:
    data: np.ndarray
    fg_threshold: int = DEFAULT_FG_THRESHOLD

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype == np.bool_:
            arr = arr.astype(np.uint8) * 255
        if arr.dtype != np.uint8:
            raise TypeError(f"BinaryMask needs uint8 samples, got {arr.dtype}")
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"BinaryMask needs shape (H, W), got {arr.shape}")
        if not 0 <= self.fg_threshold <= 255:
            raise ValueError("fg_threshold must be a sample value in [0, 255]")
        object.__setattr__(self, "data", _frozen(arr))
        fg = arr >= self.fg_threshold
        fg.setflags(write=False)
        object.__setattr__(self, "_fg", fg)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def size(self) -> Tuple[int, int]:
        return (self.width, self.height)

    @property
    def fg(self) -> np.ndarray:
        """Boolean foreground map."""
        return self._fg

    def count(self) -> int:
        return int(np.count_nonzero(self._fg))

    def is_empty(self) -> bool:
        return not self._fg.any()

    def crop(self, box: BBox) -> "BinaryMask":
        return BinaryMask(self.data[box.slices()], self.fg_threshold)

    @classmethod
    def from_bool(cls, fg) -> "BinaryMask":
        return cls(np.where(np.asarray(fg, dtype=bool), 255, 0).astype(np.uint8))

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=np.uint8))

    @classmethod
    def rect(cls, width: int, height: int, box: BBox) -> "BinaryMask":
        arr = np.zeros((height, width), dtype=np.uint8)
        arr[box.slices()] = 255
        return cls(arr)

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self._fg, other._fg)

    def __repr__(self):
        return f"BinaryMask({self.width}x{self.height}, fg={self.count()})"


Raster = Union[RasterImage, BinaryMask]


# --------------------------------------------------------------------------- IO


def _read_ihdr(path) -> Tuple[int, int]:
    with open(path, "rb") as fh:
        head = fh.read(33)
    if len(head) < 33 or head[:8] != PNG_SIGNATURE or head[12:16] != b"IHDR":
        raise FormatError(f"{path}: not a PNG file")
    bit_depth, color_type = struct.unpack(">BB", head[24:26])
    return bit_depth, color_type


def load_png(path, fg_threshold: int = DEFAULT_FG_THRESHOLD) -> Raster:
    """Read an 8-bit PNG: grayscale gives a BinaryMask, RGB/RGBA a RasterImage.

    Raises ``FileNotFoundError``/``OSError`` for unreadable files and
    ``FormatError`` for other bit depths or color types.
    """
    path = os.fspath(path)
    bit_depth, color_type = _read_ihdr(path)
    if bit_depth != 8:
        raise FormatError(f"{path}: bit depth {bit_depth} not supported, need 8")
    if color_type not in (_GRAY, _RGB, _RGBA):
        name = _COLOR_TYPE_NAMES.get(color_type, str(color_type))
        raise FormatError(f"{path}: color type {name} not supported")
    try:
        with Image.open(path) as im:
            im.load()
            arr = np.asarray(im)
            mode = im.mode
    except (OSError, SyntaxError, ValueError) as exc:
        raise FormatError(f"{path}: corrupt PNG ({exc})") from exc
    if color_type == _GRAY:
        if mode != "L":
            raise FormatError(f"{path}: unexpected decoder mode {mode}")
        return BinaryMask(arr, fg_threshold)
    if mode not in ("RGB", "RGBA"):
        raise FormatError(f"{path}: unexpected decoder mode {mode}")
    return RasterImage(arr)


def load_image(path) -> RasterImage:
    img = load_png(path)
    if not isinstance(img, RasterImage):
        raise FormatError(f"{path}: expected an RGB/RGBA image, found grayscale")
    return img


def load_mask(path, fg_threshold: int = DEFAULT_FG_THRESHOLD) -> BinaryMask:
    mask = load_png(path, fg_threshold)
    if not isinstance(mask, BinaryMask):
        raise FormatError(f"{path}: expected a grayscale mask, found color image")
    return mask


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return struct.pack(">I", len(payload)) + tag + payload + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)


def encode_png(arr: np.ndarray, compress_level: int = 1) -> bytes:
    """Encode a uint8 ``(H, W)`` / ``(H, W, 3|4)`` array; every row uses filter type 0."""
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    h, w = arr.shape[:2]
    if arr.ndim == 2:
        color_type, channels = _GRAY, 1
    else:
        channels = arr.shape[2]
        color_type = {3: _RGB, 4: _RGBA}[channels]
    rows = np.empty((h, 1 + w * channels), dtype=np.uint8)
    rows[:, 0] = 0
    rows[:, 1:] = arr.reshape(h, w * channels)
    ihdr = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    return b"".join([
        PNG_SIGNATURE,
        _chunk(b"IHDR", ihdr),
        _chunk(b"IDAT", zlib.compress(rows.tobytes(), compress_level)),
        _chunk(b"IEND", b""),
    ])


def save_png(raster: Raster, path) -> str:
    """Write losslessly; masks keep their raw sample values."""
    path = os.fspath(path)
    if isinstance(raster, BinaryMask):
        data = encode_png(raster.data)
    elif isinstance(raster, RasterImage):
        data = encode_png(raster.pixels)
    else:
        raise TypeError(f"cannot save {type(raster).__name__} as PNG")
    with open(path, "wb") as fh:
        fh.write(data)
    return path


# ------------------------------------------------------------------ geometry


def mask_to_bbox(m: BinaryMask) -> BBox:
    """Tight axis-aligned box of the foreground."""
    fg = m.fg
    rows = np.flatnonzero(fg.any(axis=1))
    if rows.size == 0:
        raise EmptyMask("mask has no foreground pixel")
    cols = np.flatnonzero(fg.any(axis=0))
    y0, y1 = int(rows[0]), int(rows[-1])
    x0, x1 = int(cols[0]), int(cols[-1])
    return BBox(x0, y0, x1 - x0 + 1, y1 - y0 + 1)


def mask_centroid_exact(m: BinaryMask) -> Tuple[Fraction, Fraction]:
    """Centroid as exact fractions, pixel centers at ``index + 1/2``."""
    fg = m.fg
    n = int(np.count_nonzero(fg))
    if n == 0:
        raise EmptyMask("mask has no foreground pixel")
    col_counts = fg.sum(axis=0, dtype=np.int64)
    row_counts = fg.sum(axis=1, dtype=np.int64)
    sx = int(np.dot(col_counts, np.arange(m.width, dtype=np.int64)))
    sy = int(np.dot(row_counts, np.arange(m.height, dtype=np.int64)))
    half = Fraction(1, 2)
    return Fraction(sx, n) + half, Fraction(sy, n) + half


def mask_centroid(m: BinaryMask) -> Tuple[float, float]:
    cx, cy = mask_centroid_exact(m)
    return float(cx), float(cy)


# ---------------------------------------------------------------- compositing


def _match_channels(src: np.ndarray, channels: int) -> np.ndarray:
    if src.shape[2] == channels:
        return src
    if src.shape[2] > channels:
        return src[:, :, :channels]
    alpha = np.full(src.shape[:2] + (1,), 255, dtype=np.uint8)
    return np.concatenate([src, alpha], axis=2)


def alpha_paste(
    dst: RasterImage,
    src_pixels: RasterImage,
    src_mask: BinaryMask,
    at: BBox,
    soft: bool = False,
) -> RasterImage:
    """Paste ``src_pixels`` through ``src_mask`` with its top-left at ``at``.

    Hard mode copies source bytes wherever the mask is foreground and leaves
    every other pixel untouched. ``soft=True`` blends linearly with the raw
    mask sample as coverage, rounding half up. Parts of the patch falling
    outside ``dst`` are dropped.
    """
    if src_pixels.size != src_mask.size:
        raise DimensionMismatch(f"source pixels {src_pixels.size} vs mask {src_mask.size}")
    if (at.w, at.h) != src_pixels.size:
        raise DimensionMismatch(f"placement {at.w}x{at.h} vs source {src_pixels.size}")
    clip = at.intersection(BBox(0, 0, dst.width, dst.height))
    if clip is None:
        return dst
    sy = slice(clip.y - at.y, clip.y1 - at.y)
    sx = slice(clip.x - at.x, clip.x1 - at.x)
    patch = _match_channels(src_pixels.pixels[sy, sx], dst.channels)
    out = dst.pixels.copy()
    region = out[clip.slices()]
    if soft:
        cover = src_mask.data[sy, sx].astype(np.uint32)[:, :, None]
        blended = (patch.astype(np.uint32) * cover + region.astype(np.uint32) * (255 - cover) + 127) // 255
        region[:] = blended.astype(np.uint8)
    else:
        fg = src_mask.fg[sy, sx]
        if not fg.any():
            return dst
        region[fg] = patch[fg]
    return RasterImage(out)


def resize_nearest(arr: np.ndarray, width: int, height: int) -> np.ndarray:
    """Nearest-neighbor resample with integer index math (sample at pixel centers)."""
    src_h, src_w = arr.shape[:2]
    rows = ((2 * np.arange(height, dtype=np.int64) + 1) * src_h) // (2 * height)
    cols = ((2 * np.arange(width, dtype=np.int64) + 1) * src_w) // (2 * width)
    return arr[rows[:, None], cols[None, :]]
