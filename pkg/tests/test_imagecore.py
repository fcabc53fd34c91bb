import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from dermaug.errors import (
    CorruptHeaderError,
    DermaugIOError,
    DimensionMismatchError,
    NotFoundError,
    UnsupportedFormatError,
)
from dermaug.imagecore import ImageBuffer, SegMask, check_pair, load_image, load_mask, save_image, save_mask


def test_ppm_decode_known_bytes(tmp_path):
    raster = bytes(range(12))
    p = tmp_path / "a.ppm"
    p.write_bytes(b"P6\n# comment\n2 2\n255\n" + raster)
    img = load_image(p)
    assert (img.width, img.height) == (2, 2)
    assert img.pixels[0, 0].tolist() == [0, 1, 2]
    assert img.pixels[0, 1].tolist() == [3, 4, 5]
    assert img.pixels[1, 0].tolist() == [6, 7, 8]
    assert img.pixels[1, 1].tolist() == [9, 10, 11]


def test_grayscale_is_replicated(tmp_path):
    p = tmp_path / "g.pgm"
    p.write_bytes(b"P5 1 1 255\n\x07")
    assert load_image(p).pixels[0, 0].tolist() == [7, 7, 7]
    q = tmp_path / "g.png"
    Image.fromarray(np.array([[7]], dtype=np.uint8)).save(q)
    assert load_image(q).pixels[0, 0].tolist() == [7, 7, 7]


def test_truncated_ppm_is_corrupt(tmp_path):
    p = tmp_path / "t.ppm"
    p.write_bytes(b"P6\n4 4\n255\n" + bytes(10))
    with pytest.raises(CorruptHeaderError):
        load_image(p)
    p.write_bytes(b"P6\n4 ")
    with pytest.raises(CorruptHeaderError):
        load_image(p)


def test_truncated_png_is_corrupt(tmp_path):
    good = tmp_path / "g.png"
    save_image(ImageBuffer(np.full((8, 8, 3), 90, np.uint8)), good)
    bad = tmp_path / "b.png"
    bad.write_bytes(good.read_bytes()[:40])
    with pytest.raises(CorruptHeaderError):
        load_image(bad)


def test_unsupported_formats(tmp_path):
    p = tmp_path / "x.ppm"
    p.write_bytes(b"P6\n1 1\n65535\n" + bytes(6))
    with pytest.raises(UnsupportedFormatError):
        load_image(p)
    rgba = tmp_path / "rgba.png"
    Image.new("RGBA", (2, 2)).save(rgba)
    with pytest.raises(UnsupportedFormatError):
        load_image(rgba)
    g16 = tmp_path / "g16.png"
    Image.fromarray(np.zeros((2, 2), dtype=np.uint16)).save(g16)
    with pytest.raises(UnsupportedFormatError):
        load_image(g16)
    txt = tmp_path / "x.txt"
    txt.write_text("hello")
    with pytest.raises(UnsupportedFormatError):
        load_image(txt)


def test_missing_file(tmp_path):
    with pytest.raises(NotFoundError):
        load_image(tmp_path / "nope.png")


@pytest.mark.parametrize("value,expected", [(255, True), (127, False), (128, True), (0, False)])
def test_mask_threshold(tmp_path, value, expected):
    p = tmp_path / "m.png"
    Image.fromarray(np.array([[value]], dtype=np.uint8)).save(p)
    assert bool(load_mask(p).bits[0, 0]) is expected


def test_mask_rejects_rgb(tmp_path):
    p = tmp_path / "m.png"
    save_image(ImageBuffer(np.zeros((2, 2, 3), np.uint8)), p)
    with pytest.raises(UnsupportedFormatError):
        load_mask(p)


def test_mask_threshold_idempotent(tmp_path):
    rng = np.random.default_rng(3)
    p = tmp_path / "m.png"
    Image.fromarray(rng.integers(0, 256, (9, 7), dtype=np.uint8)).save(p)
    m1 = load_mask(p)
    save_mask(m1, tmp_path / "m2.png")
    assert load_mask(tmp_path / "m2.png") == m1


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3))),
       st.sampled_from([".png", ".ppm"]))
def test_round_trip(tmp_path_factory, arr, ext):
    path = tmp_path_factory.mktemp("rt") / f"img{ext}"
    img = ImageBuffer(arr)
    save_image(img, path)
    assert load_image(path) == img


def test_one_by_one(tmp_path):
    img = ImageBuffer(np.array([[[1, 2, 3]]], dtype=np.uint8))
    save_image(img, tmp_path / "one.png")
    back = load_image(tmp_path / "one.png")
    assert (back.width, back.height) == (1, 1) and back == img


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_path_permissions(tmp_path):
    d = tmp_path / "ro"
    d.mkdir()
    d.chmod(0o500)
    with pytest.raises(DermaugIOError):
        save_image(ImageBuffer(np.zeros((1, 1, 3), np.uint8)), d / "x.png")


def test_unwritable_path(tmp_path):
    with pytest.raises(DermaugIOError):
        save_image(ImageBuffer(np.zeros((1, 1, 3), np.uint8)), tmp_path / "missing_dir" / "x.png")


def test_buffer_invariants():
    with pytest.raises(ValueError):
        ImageBuffer(np.zeros((2, 2), np.uint8))
    with pytest.raises(ValueError):
        ImageBuffer(np.full((1, 1, 3), 300))
    img = ImageBuffer(np.zeros((2, 2, 3), np.uint8))
    assert not img.pixels.flags.writeable


def test_pair_check():
    with pytest.raises(DimensionMismatchError):
        check_pair(ImageBuffer(np.zeros((2, 3, 3), np.uint8)), SegMask(np.zeros((3, 2), bool)))
