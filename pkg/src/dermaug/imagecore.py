"""Raster types and 8-bit image / mask file IO.

Supported files are 8-bit PNG (grayscale or RGB) and binary netpbm
(``P6`` RGB, ``P5`` grayscale, maxval 255). Format is detected from the file
magic, never from the extension. Saving picks the format from the extension.
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    CorruptHeaderError,
    DermaugIOError,
    DimensionMismatchError,
    NotFoundError,
    UnsupportedFormatError,
)

PathLike = Union[str, os.PathLike]

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
MASK_THRESHOLD = 128


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Immutable 8-bit RGB raster stored as a read-only (height, width, 3) array."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (height, width, 3) pixels, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if arr.dtype != np.uint8:
            if np.issubdtype(arr.dtype, np.integer) and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("channel values must lie in [0, 255]")
            if not np.issubdtype(arr.dtype, np.integer):
                raise ValueError(f"channel values must be integers, got {arr.dtype}")
        arr = np.array(arr, dtype=np.uint8, order="C", copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple:
        return self.pixels.shape

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __hash__(self):
        return hash((self.pixels.shape, self.pixels.tobytes()))

    def __repr__(self):
        return f"ImageBuffer({self.width}x{self.height})"


@dataclass(frozen=True, eq=False)
class SegMask:
    """Immutable binary lesion mask, (height, width) booleans, True = lesion."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected non-empty (height, width) mask, got shape {arr.shape}")
        arr = np.array(arr, dtype=bool, order="C", copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def count(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other):
        if not isinstance(other, SegMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.bits.shape, self.bits.tobytes()))

    def __repr__(self):
        return f"SegMask({self.width}x{self.height}, {self.count()} on)"


def check_pair(img: ImageBuffer, mask: SegMask) -> None:
    if (img.width, img.height) != (mask.width, mask.height):
        raise DimensionMismatchError(
            f"mask is {mask.width}x{mask.height} but image is {img.width}x{img.height}"
        )


# --------------------------------------------------------------------------
# decoding

def _read_bytes(path: PathLike) -> bytes:
    p = Path(path)
    try:
        return p.read_bytes()
    except FileNotFoundError as exc:
        raise NotFoundError(f"{p}: no such file") from exc
    except IsADirectoryError as exc:
        raise NotFoundError(f"{p}: is a directory") from exc
    except OSError as exc:
        raise DermaugIOError(f"{p}: {exc}") from exc


def _pnm_tokens(data: bytes, count: int):
    """Return ``count`` header tokens and the offset of the raster start."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise CorruptHeaderError("netpbm header ended early")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    if pos >= n or not data[pos:pos + 1].isspace():
        raise CorruptHeaderError("netpbm header ended early")
    return tokens, pos + 1


def _decode_pnm(data: bytes, name: str) -> np.ndarray:
    magic = data[:2]
    channels = 3 if magic == b"P6" else 1
    tokens, offset = _pnm_tokens(data, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise CorruptHeaderError(f"{name}: non-numeric netpbm header field") from exc
    if width < 1 or height < 1:
        raise CorruptHeaderError(f"{name}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedFormatError(f"{name}: maxval {maxval} (only 8-bit, maxval 255, is supported)")
    size = width * height * channels
    raster = data[offset:offset + size]
    if len(raster) < size:
        raise CorruptHeaderError(f"{name}: raster truncated ({len(raster)} of {size} bytes)")
    arr = np.frombuffer(raster, dtype=np.uint8)
    return arr.reshape(height, width, channels) if channels == 3 else arr.reshape(height, width)


def _decode_png(data: bytes, name: str) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as im:
            mode = im.mode
            if mode not in ("L", "RGB"):
                raise UnsupportedFormatError(f"{name}: PNG mode {mode!r} is not 8-bit gray or RGB")
            im.load()
            return np.asarray(im, dtype=np.uint8)
    except UnsupportedFormatError:
        raise
    except (UnidentifiedImageError, SyntaxError, OSError, ValueError, EOFError) as exc:
        raise CorruptHeaderError(f"{name}: unreadable PNG ({exc})") from exc


def _decode(path: PathLike) -> np.ndarray:
    data = _read_bytes(path)
    name = str(path)
    if len(data) < 2:
        raise CorruptHeaderError(f"{name}: file too short")
    if data[:2] in (b"P5", b"P6"):
        return _decode_pnm(data, name)
    if data[:8] == PNG_MAGIC:
        return _decode_png(data, name)
    if PNG_MAGIC.startswith(data[:8]):
        raise CorruptHeaderError(f"{name}: truncated PNG signature")
    raise UnsupportedFormatError(f"{name}: not a PNG or binary netpbm file")


def load_image(path: PathLike) -> ImageBuffer:
    """Load an 8-bit RGB or grayscale file; grayscale is replicated to RGB."""
    arr = _decode(path)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    return ImageBuffer(arr)


def load_mask(path: PathLike) -> SegMask:
    arr = _decode(path)
    if arr.ndim != 2:
        raise UnsupportedFormatError(f"{path}: mask must be single-channel")
    return SegMask(arr >= MASK_THRESHOLD)


# --------------------------------------------------------------------------
# encoding

def _write(path: PathLike, payload: bytes) -> None:
    p = Path(path)
    try:
        p.write_bytes(payload)
    except OSError as exc:
        raise DermaugIOError(f"{p}: {exc}") from exc


def _encode(arr: np.ndarray, path: PathLike) -> bytes:
    suffix = Path(path).suffix.lower()
    if suffix in (".ppm", ".pgm", ".pnm"):
        if arr.ndim == 3:
            header = b"P6\n%d %d\n255\n" % (arr.shape[1], arr.shape[0])
        else:
            header = b"P5\n%d %d\n255\n" % (arr.shape[1], arr.shape[0])
        return header + np.ascontiguousarray(arr).tobytes()
    if suffix == ".png":
        buf = io.BytesIO()
        Image.fromarray(np.ascontiguousarray(arr)).save(buf, format="PNG")
        return buf.getvalue()
    raise UnsupportedFormatError(f"{path}: cannot infer output format from extension")


def save_image(img: ImageBuffer, path: PathLike) -> None:
    _write(path, _encode(img.pixels, path))


def save_mask(mask: SegMask, path: PathLike) -> None:
    """Write a mask as single-channel 0/255, reloadable by :func:`load_mask`."""
    _write(path, _encode(mask.bits.astype(np.uint8) * 255, path))
