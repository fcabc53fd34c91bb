"""Tiled preview sheets of manifest samples."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .imagecore import ImageBuffer


def contact_sheet(images: Sequence[ImageBuffer], rows: int, cols: int, background: int = 0) -> ImageBuffer:
    """Place images row-major on a rows x cols grid without resampling.

    Each cell is as large as the largest image; smaller images are centered.
    Images beyond ``rows * cols`` are ignored.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    if not images:
        raise ValueError("no images to tile")
    used = list(images[: rows * cols])
    cell_w = max(im.width for im in used)
    cell_h = max(im.height for im in used)
    sheet = np.full((rows * cell_h, cols * cell_w, 3), background, dtype=np.uint8)
    for i, im in enumerate(used):
        r, c = divmod(i, cols)
        y = r * cell_h + (cell_h - im.height) // 2
        x = c * cell_w + (cell_w - im.width) // 2
        sheet[y:y + im.height, x:x + im.width] = im.pixels
    return ImageBuffer(sheet)
