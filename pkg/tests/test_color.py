import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dermaug.color import (
    ColorShift,
    ColorStats,
    apply_color_shift,
    dumps_model,
    fit_color_pca,
    jacobi_eigh,
    load_model,
    loads_model,
    sample_color_shift,
    save_model,
)
from dermaug.errors import CorruptHeaderError, InsufficientPixelsError
from dermaug.imagecore import ImageBuffer
from dermaug.rng import SeedContext

from oracles import symmetric3_eigvals, two_pass_covariance


def check_model_invariants(model, cov):
    e = model.eigenvectors
    assert np.abs(e @ e.T - np.eye(3)).max() <= 1e-9
    lam = model.eigenvalues
    assert lam[0] >= lam[1] >= lam[2] >= 0
    resid = max(np.linalg.norm(cov @ e[i] - lam[i] * e[i]) for i in range(3))
    assert resid <= 1e-6 * max(lam[0], 1)
    assert abs(lam.sum() - np.trace(cov)) <= 1e-6 * max(abs(np.trace(cov)), 1e-300)
    recon = model.covariance()
    assert np.linalg.norm(recon - cov) <= 1e-6 * max(np.linalg.norm(cov), 1e-300)


def test_constant_pixels():
    model = fit_color_pca(np.full((50, 3), 100))
    assert np.allclose(model.mean, 100)
    assert np.array_equal(model.eigenvalues, np.zeros(3))
    shift = sample_color_shift(model, SeedContext(1, "a"))
    assert shift.delta == (0.0, 0.0, 0.0)


def test_black_white_pair():
    pixels = np.array([[0, 0, 0], [255, 255, 255]] * 10)
    model = fit_color_pca(pixels)
    _, cov = two_pass_covariance(pixels)
    expect = symmetric3_eigvals(cov)
    assert np.allclose(model.eigenvalues, expect, atol=1e-12)
    assert np.allclose(model.eigenvectors[0], np.ones(3) / math.sqrt(3), atol=1e-12)
    assert abs(model.eigenvalues[1]) < 1e-12 and abs(model.eigenvalues[2]) < 1e-12


def test_streaming_matches_two_pass():
    rng = np.random.default_rng(11)
    pixels = rng.integers(0, 256, (10_000, 3))
    stats = ColorStats()
    for chunk in np.array_split(pixels, 37):
        stats.update(chunk)
    mean, cov = two_pass_covariance(pixels)
    assert np.linalg.norm(stats.covariance - cov) <= 1e-9 * np.linalg.norm(cov)
    assert np.allclose(stats.mean * 255, mean, rtol=1e-12)


def test_pixel_by_pixel_updates():
    rng = np.random.default_rng(2)
    pixels = rng.integers(0, 256, (300, 3))
    stats = ColorStats()
    for px in pixels:
        stats.update(px)
    _, cov = two_pass_covariance(pixels)
    assert np.linalg.norm(stats.covariance - cov) <= 1e-9 * np.linalg.norm(cov)


def test_order_independence():
    rng = np.random.default_rng(5)
    pixels = rng.integers(0, 256, (4000, 3))
    a = fit_color_pca(iter(np.array_split(pixels, 9)))
    b = fit_color_pca(iter(np.array_split(rng.permutation(pixels), 13)))
    assert np.allclose(a.eigenvalues, b.eigenvalues, rtol=1e-9, atol=1e-15)
    assert np.allclose(a.eigenvectors, b.eigenvectors, atol=1e-9)


def test_insufficient_pixels():
    with pytest.raises(InsufficientPixelsError):
        fit_color_pca(np.array([[1, 2, 3]]))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32))
def test_eigen_invariants_random(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 400))
    mix = rng.normal(size=(3, 3)) * rng.uniform(0.1, 60)
    pixels = np.clip(rng.normal(size=(n, 3)) @ mix + rng.uniform(30, 220, 3), 0, 255).round()
    model = fit_color_pca(pixels)
    _, cov = two_pass_covariance(pixels)
    check_model_invariants(model, cov)
    assert np.allclose(model.eigenvalues, symmetric3_eigvals(cov), rtol=1e-8, atol=1e-14)


def test_jacobi_degenerate_spectra():
    for a in (np.eye(3) * 2.5, np.diag([3.0, 3.0, 1.0]), np.ones((3, 3))):
        w, v = jacobi_eigh(a)
        assert np.abs(a @ v - v * w).max() < 1e-13
        assert np.abs(v.T @ v - np.eye(3)).max() < 1e-13


def test_shift_zero_for_zero_model():
    model = fit_color_pca(np.full((4, 3), 9))
    img = ImageBuffer(np.random.default_rng(0).integers(0, 256, (6, 5, 3), dtype=np.uint8))
    for i in range(20):
        assert apply_color_shift(img, sample_color_shift(model, SeedContext(i, "z"))) == img


def test_shift_deterministic_and_consistent():
    rng = np.random.default_rng(8)
    model = fit_color_pca(rng.integers(0, 256, (500, 3)))
    a = sample_color_shift(model, SeedContext(4, "img"))
    b = sample_color_shift(model, SeedContext(4, "img"))
    assert a == b
    manual = 255 * sum(a.alphas[i] * model.eigenvalues[i] * model.eigenvectors[i] for i in range(3))
    assert np.allclose(a.delta, manual, rtol=0, atol=1e-12)
    assert a != sample_color_shift(model, SeedContext(4, "img2"))


def test_apply_shift_round_and_clamp():
    img = ImageBuffer(np.array([[[250, 10, 128]]], dtype=np.uint8))
    out = apply_color_shift(img, ColorShift((10.0, -20.0, 0.4), (0, 0, 0)))
    assert out.pixels[0, 0].tolist() == [255, 0, 128]
    half = apply_color_shift(img, ColorShift((0.5, -0.5, -0.5), (0, 0, 0)))
    assert half.pixels[0, 0].tolist() == [251, 10, 128]  # 250.5, 9.5, 127.5 round away from zero
    assert apply_color_shift(img, ColorShift((0, 0, 0), (0, 0, 0))) == img


def test_shift_is_constant_translation():
    rng = np.random.default_rng(1)
    img = ImageBuffer(rng.integers(40, 200, (8, 9, 3), dtype=np.uint8))
    shift = ColorShift((3.2, -7.7, 12.0), (0, 0, 0))
    out = apply_color_shift(img, shift).pixels.astype(int)
    diff = out - img.pixels.astype(int)
    assert (diff == diff[0, 0]).all()
    assert out.shape == img.pixels.shape


def test_model_file_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    model = fit_color_pca(rng.integers(0, 256, (1000, 3)))
    path = tmp_path / "pca.txt"
    save_model(model, path)
    assert load_model(path) == model
    text = path.read_text()
    assert text.splitlines()[0].startswith("mean ")
    assert [ln.split()[0] for ln in text.splitlines()] == ["mean", "lambda", "evec", "evec", "evec", "pixels"]
    assert dumps_model(loads_model(text)) == text


def test_model_file_corrupt():
    with pytest.raises(CorruptHeaderError):
        loads_model("mean 1 2 3\nlambda 1 2\n")
    with pytest.raises(CorruptHeaderError):
        loads_model("bogus 1\n")
