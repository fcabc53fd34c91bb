"""Lesion-preserving crops and the 8-element rotation/flip group."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List

import numpy as np

from .errors import EmptyMaskError, OutOfBoundsError
from .imagecore import ImageBuffer, SegMask
from .rng import SeedContext

ROTATIONS = (0, 90, 180, 270)


@dataclass(frozen=True)
class BBox:
    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self):
        if self.x0 < 0 or self.y0 < 0 or self.w < 1 or self.h < 1:
            raise ValueError(f"invalid box {self}")

    @property
    def x1(self) -> int:
        """Exclusive right edge."""
        return self.x0 + self.w

    @property
    def y1(self) -> int:
        return self.y0 + self.h

    def contains(self, other: "BBox") -> bool:
        return (self.x0 <= other.x0 and self.y0 <= other.y0
                and other.x1 <= self.x1 and other.y1 <= self.y1)

    def fits_in(self, width: int, height: int) -> bool:
        return self.x1 <= width and self.y1 <= height

    def as_list(self) -> list:
        return [self.x0, self.y0, self.w, self.h]


@dataclass(frozen=True)
class CropSpec:
    region: BBox


@dataclass(frozen=True)
class D4Element:
    """Rotation by ``rotation`` degrees counter-clockwise applied after an
    optional horizontal (left-right) mirror.

    A vertical flip is the element ``D4Element(180, True)``.
    """

    rotation: int = 0
    hflip: bool = False

    def __post_init__(self):
        if self.rotation not in ROTATIONS:
            raise ValueError(f"rotation must be one of {ROTATIONS}, got {self.rotation}")

    def compose(self, other: "D4Element") -> "D4Element":
        """Element acting as ``self`` applied after ``other``."""
        k1, k2 = self.rotation // 90, other.rotation // 90
        k = (k1 - k2) if self.hflip else (k1 + k2)
        return D4Element((k % 4) * 90, self.hflip != other.hflip)

    def inverse(self) -> "D4Element":
        if self.hflip:
            return self
        return D4Element((-self.rotation) % 360, False)

    @property
    def name(self) -> str:
        return f"r{self.rotation}{'f' if self.hflip else ''}"


def enumerate_d4() -> List[D4Element]:
    """All 8 elements, rotation-major, flip-minor; the identity comes first."""
    return [D4Element(r, f) for r in ROTATIONS for f in (False, True)]


def lesion_bbox(mask: SegMask) -> BBox:
    rows = np.flatnonzero(mask.bits.any(axis=1))
    if rows.size == 0:
        raise EmptyMaskError("mask has no lesion pixels")
    cols = np.flatnonzero(mask.bits.any(axis=0))
    return BBox(int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))


def _round(x: float) -> int:
    return int(math.floor(x + 0.5))


def sample_crop(img_w: int, img_h: int, lesion: BBox, seed: SeedContext) -> CropSpec:
    """Random aspect-preserving window that contains the whole lesion box.

    The scale ``s`` is uniform on ``[s_min, 1]`` where ``s_min`` is the smallest
    scale whose window still fits the lesion; the window width is
    ``round(s * img_w)`` (raised to the smallest integer width whose rounded
    height still covers the lesion), the height ``round(width * img_h / img_w)``,
    and the top-left corner is uniform over all placements that keep the lesion
    inside both the window and the frame.
    """
    if not lesion.fits_in(img_w, img_h):
        raise OutOfBoundsError(f"lesion box {lesion} exceeds {img_w}x{img_h} frame")
    rs = seed.stream("crop")
    s_min = max(lesion.w / img_w, lesion.h / img_h)
    s = rs.uniform(s_min, 1.0)

    def height_for(w: int) -> int:
        return min(_round(w * img_h / img_w), img_h)

    w_min = lesion.w
    while w_min < img_w and height_for(w_min) < lesion.h:
        w_min += 1
    w = min(max(_round(s * img_w), w_min), img_w)
    h = height_for(w)

    x0 = rs.integers(max(0, lesion.x1 - w), min(lesion.x0, img_w - w))
    y0 = rs.integers(max(0, lesion.y1 - h), min(lesion.y0, img_h - h))
    return CropSpec(BBox(x0, y0, w, h))


def apply_crop(img: ImageBuffer, crop: CropSpec) -> ImageBuffer:
    r = crop.region
    if not r.fits_in(img.width, img.height):
        raise OutOfBoundsError(f"crop {r} exceeds {img.width}x{img.height} image")
    return ImageBuffer(img.pixels[r.y0:r.y1, r.x0:r.x1])


def crop_mask(mask: SegMask, crop: CropSpec) -> SegMask:
    r = crop.region
    if not r.fits_in(mask.width, mask.height):
        raise OutOfBoundsError(f"crop {r} exceeds {mask.width}x{mask.height} mask")
    return SegMask(mask.bits[r.y0:r.y1, r.x0:r.x1])


def _d4_array(arr: np.ndarray, g: D4Element) -> np.ndarray:
    if g.hflip:
        arr = arr[:, ::-1]
    return np.rot90(arr, k=g.rotation // 90, axes=(0, 1))


def apply_d4(img: ImageBuffer, g: D4Element) -> ImageBuffer:
    return ImageBuffer(_d4_array(img.pixels, g))


def d4_mask(mask: SegMask, g: D4Element) -> SegMask:
    return SegMask(_d4_array(mask.bits, g))
