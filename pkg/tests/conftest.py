import math
from pathlib import Path

import numpy as np
import pytest

from dermaug.dataset import SampleRecord, write_manifest
from dermaug.imagecore import ImageBuffer, SegMask, save_image, save_mask


def raster_ellipse(width, height, cx, cy, a, b, theta=0.0):
    """Filled ellipse: pixel centers (x, y) with y pointing down."""
    ys, xs = np.mgrid[0:height, 0:width].astype(float)
    dx, dy = xs - cx, ys - cy
    u = dx * math.cos(theta) + dy * math.sin(theta)
    v = -dx * math.sin(theta) + dy * math.cos(theta)
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def synthetic_lesion(rng, size=64):
    """A skin-toned image with a darker elliptical lesion and its mask."""
    h = w = size
    a = rng.uniform(size * 0.15, size * 0.3)
    b = rng.uniform(size * 0.08, a)
    theta = rng.uniform(-math.pi / 2, math.pi / 2)
    cx = rng.uniform(size * 0.35, size * 0.65)
    cy = rng.uniform(size * 0.35, size * 0.65)
    bits = raster_ellipse(w, h, cx, cy, a, b, theta)
    skin = np.array([rng.uniform(170, 230), rng.uniform(120, 170), rng.uniform(100, 150)])
    lesion = skin * rng.uniform(0.35, 0.7)
    noise = rng.normal(0, 6, size=(h, w, 3))
    img = np.where(bits[:, :, None], lesion, skin) + noise
    return ImageBuffer(np.clip(np.rint(img), 0, 255).astype(np.uint8)), SegMask(bits)


def build_dataset(root: Path, counts, size=64, seed=0):
    """Write images/masks plus ``manifest.jsonl`` under ``root``; returns manifest path."""
    rng = np.random.default_rng(seed)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    records = []
    n = 0
    for label, count in counts.items():
        for _ in range(count):
            sid = f"S{n:04d}"
            img, mask = synthetic_lesion(rng, size)
            save_image(img, root / "images" / f"{sid}.png")
            save_mask(mask, root / "masks" / f"{sid}.png")
            records.append(SampleRecord(sid, str(root / "images" / f"{sid}.png"), label,
                                        str(root / "masks" / f"{sid}.png")))
            n += 1
    path = root / "manifest.jsonl"
    write_manifest(records, path)
    return path


def fake_records(counts):
    recs = []
    n = 0
    for label, count in counts.items():
        for _ in range(count):
            recs.append(SampleRecord(f"id{n:05d}", f"img/{n}.png", label))
            n += 1
    return recs


@pytest.fixture
def probe_2x3():
    """Asymmetric 2x3 image, six distinct pixels."""
    arr = np.zeros((2, 3, 3), dtype=np.uint8)
    for i, v in enumerate([10, 20, 30, 40, 50, 60]):
        arr[i // 3, i % 3] = (v, v + 1, v + 2)
    return ImageBuffer(arr)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, elapsed, note in sorted(RESULTS):
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] {number:2d}. {title} ({elapsed:.2f} s)"
        if note:
            line += f" -- {note}"
        terminalreporter.write_line(line)
