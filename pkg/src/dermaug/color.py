"""Dataset color PCA and per-image principal-component color shifts.

Units: covariance and eigenvalues are computed on channel values scaled to
[0, 1]; the model mean is kept in 8-bit intensity units. A sampled shift is

    delta = 255 * sum_i alpha_i * lambda_i * e_i,   alpha_i ~ Normal(0, sigma^2)

with one alpha per component per image, i.e. each principal component is
scaled by its eigenvalue (not its square root).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

from .errors import CorruptHeaderError, DermaugIOError, InsufficientPixelsError, NotFoundError
from .imagecore import ImageBuffer
from .rng import SeedContext

SIGMA = 0.2
SCALE = 255.0


def jacobi_eigh(a: np.ndarray, max_sweeps: int = 64) -> Tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a small real symmetric matrix.

    Returns ``(values, vectors)`` unsorted, with ``vectors[:, i]`` the unit
    eigenvector for ``values[i]``.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = np.abs(a).max()
    if scale == 0.0:
        return np.zeros(n), v
    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum(np.triu(a, 1) ** 2)))
        if off <= 1e-300 or off <= 1e-17 * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                a[p, q] = a[q, p] = 0.0
                v = v @ rot
    return np.diag(a).copy(), v


def _canonical_sign(vec: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(vec)))
    return -vec if vec[i] < 0 else vec


@dataclass(frozen=True, eq=False)
class ColorPcaModel:
    mean: np.ndarray          # (3,) intensity units
    eigenvalues: np.ndarray   # (3,) descending, [0,1]-scaled channel units squared
    eigenvectors: np.ndarray  # (3, 3), row i is e_i
    pixel_count: int

    def covariance(self) -> np.ndarray:
        e = self.eigenvectors
        return (e.T * self.eigenvalues) @ e

    def __eq__(self, other):
        if not isinstance(other, ColorPcaModel):
            return NotImplemented
        return (self.pixel_count == other.pixel_count
                and np.array_equal(self.mean, other.mean)
                and np.array_equal(self.eigenvalues, other.eigenvalues)
                and np.array_equal(self.eigenvectors, other.eigenvectors))


class ColorStats:
    """Streaming mean / scatter accumulator over RGB pixels.

    Each chunk is reduced with a two-pass mean and scatter, then folded into
    the running state with the pairwise (Chan et al.) update. Partial
    accumulators can be combined with :meth:`merge`; callers that accumulate
    in parallel merge in ascending sample-id order.
    """

    def __init__(self):
        self.n = 0
        self.mean = np.zeros(3)
        self.scatter = np.zeros((3, 3))

    def _fold(self, n_b: int, mean_b: np.ndarray, scatter_b: np.ndarray) -> None:
        if n_b == 0:
            return
        if self.n == 0:
            self.n, self.mean, self.scatter = n_b, mean_b.copy(), scatter_b.copy()
            return
        n = self.n + n_b
        delta = mean_b - self.mean
        self.mean = self.mean + delta * (n_b / n)
        self.scatter = self.scatter + scatter_b + np.outer(delta, delta) * (self.n * n_b / n)
        self.n = n

    def update(self, pixels) -> "ColorStats":
        x = np.asarray(pixels, dtype=np.float64).reshape(-1, 3) / SCALE
        if x.shape[0]:
            # shift by the first pixel so constant data gives exactly zero scatter
            ref = x[0]
            s = x - ref
            ms = s.mean(axis=0)
            d = s - ms
            self._fold(x.shape[0], ref + ms, d.T @ d)
        return self

    def update_image(self, img: ImageBuffer, stride: int = 1) -> "ColorStats":
        if stride < 1:
            raise ValueError("pixel stride must be >= 1")
        return self.update(img.pixels.reshape(-1, 3)[::stride])

    def merge(self, other: "ColorStats") -> "ColorStats":
        self._fold(other.n, other.mean, other.scatter)
        return self

    @property
    def covariance(self) -> np.ndarray:
        if self.n < 2:
            raise InsufficientPixelsError(f"need at least 2 pixels, have {self.n}")
        return self.scatter / (self.n - 1)

    def to_model(self) -> ColorPcaModel:
        cov = self.covariance
        values, vectors = jacobi_eigh(cov)
        order = np.argsort(-values, kind="stable")
        values = np.maximum(values[order], 0.0)
        vectors = np.array([_canonical_sign(vectors[:, i]) for i in order])
        return ColorPcaModel(self.mean * SCALE, values, vectors, self.n)


PixelSource = Union[np.ndarray, Sequence, Iterable[np.ndarray]]


def fit_color_pca(pixel_stream: PixelSource) -> ColorPcaModel:
    """Fit the color model to an (N, 3) pixel array or an iterable of chunks."""
    stats = ColorStats()
    if isinstance(pixel_stream, (np.ndarray, list, tuple)):
        stats.update(pixel_stream)
    else:
        for chunk in pixel_stream:
            stats.update(chunk)
    return stats.to_model()


@dataclass(frozen=True)
class ColorShift:
    delta: Tuple[float, float, float]   # intensity units
    alphas: Tuple[float, float, float]


def sample_color_shift(model: ColorPcaModel, seed: SeedContext, sigma: float = SIGMA) -> ColorShift:
    rs = seed.stream("color")
    alphas = np.array([rs.normal(0.0, sigma) for _ in range(3)])
    delta = SCALE * ((alphas * model.eigenvalues) @ model.eigenvectors)
    return ColorShift(tuple(float(d) for d in delta), tuple(float(a) for a in alphas))


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def apply_color_shift(img: ImageBuffer, shift: ColorShift) -> ImageBuffer:
    out = img.pixels.astype(np.float64) + np.asarray(shift.delta, dtype=np.float64)
    return ImageBuffer(np.clip(round_half_away(out), 0, 255).astype(np.uint8))


# --------------------------------------------------------------------------
# model file

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dumps_model(model: ColorPcaModel) -> str:
    lines = [
        "mean " + " ".join(_fmt(v) for v in model.mean),
        "lambda " + " ".join(_fmt(v) for v in model.eigenvalues),
    ]
    for i, vec in enumerate(model.eigenvectors, start=1):
        lines.append(f"evec {i} " + " ".join(_fmt(v) for v in vec))
    lines.append(f"pixels {model.pixel_count}")
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> ColorPcaModel:
    mean = lam = None
    vecs = {}
    count = None
    try:
        for raw in text.splitlines():
            parts = raw.split()
            if not parts:
                continue
            key = parts[0]
            if key == "mean":
                mean = np.array([float(v) for v in parts[1:4]])
            elif key == "lambda":
                lam = np.array([float(v) for v in parts[1:4]])
            elif key == "evec":
                vecs[int(parts[1])] = [float(v) for v in parts[2:5]]
            elif key == "pixels":
                count = int(parts[1])
            else:
                raise ValueError(f"unknown key {key!r}")
    except (ValueError, IndexError) as exc:
        raise CorruptHeaderError(f"malformed color model: {exc}") from exc
    if mean is None or lam is None or count is None or sorted(vecs) != [1, 2, 3] \
            or mean.size != 3 or lam.size != 3 or any(len(v) != 3 for v in vecs.values()):
        raise CorruptHeaderError("incomplete color model")
    return ColorPcaModel(mean, lam, np.array([vecs[1], vecs[2], vecs[3]]), count)


def save_model(model: ColorPcaModel, path) -> None:
    try:
        Path(path).write_text(dumps_model(model), encoding="utf-8")
    except OSError as exc:
        raise DermaugIOError(f"{path}: {exc}") from exc


def load_model(path) -> ColorPcaModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise NotFoundError(f"{path}: no such file") from exc
    except (OSError, UnicodeDecodeError) as exc:
        raise DermaugIOError(f"{path}: {exc}") from exc
    return loads_model(text)
