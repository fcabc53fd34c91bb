"""Lesion-axis distortion: moment ellipse fit and thin-plate-spline warping.

Coordinates are (x, y) = (column, row) with y pointing down; a pixel's
center sits at its integer index. Ellipse orientation ``theta`` is the angle
of the major axis measured from +x toward +y, in [-pi/2, pi/2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import DegenerateMaskError, EmptyMaskError, SingularSystemError
from .imagecore import ImageBuffer, SegMask, check_pair
from .rng import SeedContext

MAX_FRAC = 0.2
MIN_MINOR_AXIS = 2.0

Point = Tuple[float, float]


@dataclass(frozen=True)
class Ellipse:
    center: Point
    semi_major: float
    semi_minor: float
    theta: float

    def __post_init__(self):
        if not self.semi_major >= self.semi_minor > 0:
            raise ValueError(f"need semi_major >= semi_minor > 0, got {self.semi_major}, {self.semi_minor}")
        if not -math.pi / 2 <= self.theta < math.pi / 2:
            raise ValueError(f"theta {self.theta} outside [-pi/2, pi/2)")


def fit_ellipse(mask: SegMask) -> Ellipse:
    """Moment ellipse of the lesion pixels, semi-axes at two standard deviations."""
    ys, xs = np.nonzero(mask.bits)
    n = xs.size
    if n == 0:
        raise EmptyMaskError("mask has no lesion pixels")
    if n < 3:
        raise DegenerateMaskError(f"only {n} lesion pixels")
    cx = xs.mean()
    cy = ys.mean()
    dx = xs - cx
    dy = ys - cy
    # raw (unnormalized) central moments
    m20 = float(dx @ dx)
    m02 = float(dy @ dy)
    m11 = float(dx @ dy)
    mu20, mu02, mu11 = m20 / n, m02 / n, m11 / n

    half_tr = 0.5 * (mu20 + mu02)
    radius = math.hypot(0.5 * (mu20 - mu02), mu11)
    lam_major = half_tr + radius
    lam_minor = half_tr - radius
    if lam_minor <= 1e-9 * max(lam_major, 1.0):
        raise DegenerateMaskError("lesion pixels are collinear")

    if abs(m20 - m02) < 1e-9 * n and abs(m11) < 1e-9 * n:
        theta = 0.0
    else:
        theta = 0.5 * math.atan2(2.0 * mu11, mu20 - mu02)
        if theta >= math.pi / 2:
            theta -= math.pi
    return Ellipse((float(cx), float(cy)), 2.0 * math.sqrt(lam_major), 2.0 * math.sqrt(lam_minor), theta)


@dataclass(frozen=True)
class ControlPair:
    """Ellipse center plus the four axis endpoints, before and after perturbation.

    Point order: center, major +, major -, minor +, minor -. ``deltas`` holds the
    relative length change applied to each endpoint.
    """

    source: Tuple[Point, ...]
    target: Tuple[Point, ...]
    deltas: Tuple[float, ...] = (0.0, 0.0, 0.0, 0.0)


def axis_offsets(e: Ellipse) -> np.ndarray:
    u = np.array([math.cos(e.theta), math.sin(e.theta)])
    v = np.array([-math.sin(e.theta), math.cos(e.theta)])
    return np.array([e.semi_major * u, -e.semi_major * u, e.semi_minor * v, -e.semi_minor * v])


def make_control_pair(e: Ellipse, seed: SeedContext, max_frac: float = MAX_FRAC) -> ControlPair:
    if not 0.0 <= max_frac < 1.0:
        raise ValueError(f"max_frac must be in [0, 1), got {max_frac}")
    rs = seed.stream("warp")
    deltas = [rs.uniform(-max_frac, max_frac) for _ in range(4)]
    center = np.array(e.center, dtype=np.float64)
    offsets = axis_offsets(e)
    source = [tuple(center)] + [tuple(center + off) for off in offsets]
    target = [tuple(center)] + [tuple(center + (1.0 + d) * off) for d, off in zip(deltas, offsets)]
    as_pts = lambda pts: tuple((float(x), float(y)) for x, y in pts)  # noqa: E731
    return ControlPair(as_pts(source), as_pts(target), tuple(float(d) for d in deltas))


# --------------------------------------------------------------------------
# thin-plate spline

def tps_kernel(r2: np.ndarray) -> np.ndarray:
    """U as a function of squared distance: r^2 log r^2, with U(0) = 0."""
    r2 = np.asarray(r2, dtype=np.float64)
    out = np.zeros_like(r2)
    nz = r2 > 0
    out[nz] = r2[nz] * np.log(r2[nz])
    return out


def _sq_dists(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    d = p[:, None, :] - q[None, :, :]
    return np.einsum("ijk,ijk->ij", d, d)


@dataclass(frozen=True, eq=False)
class TpsTransform:
    """Plane map f(p) = affine[0] + p_x * affine[1] + p_y * affine[2] + sum_i weights[i] * U(|p - src_i|).

    ``affine`` is (3, 2) and ``weights`` (n, 2): one column per output coordinate.
    """

    control_src: np.ndarray
    affine: np.ndarray
    weights: np.ndarray
    regularization: float = 0.0

    def __call__(self, p):
        return tps_eval(self, p)


def fit_tps(src, dst, regularization: float = 0.0) -> TpsTransform:
    """Solve the bordered thin-plate system mapping ``src`` points onto ``dst``.

    The system is assembled and solved in a normalized frame (source points
    centered on their centroid and divided by their RMS radius) and the
    coefficients are converted back to pixel units. ``regularization`` is the
    ridge added to the kernel block in that normalized frame.
    """
    if regularization < 0:
        raise ValueError("regularization must be >= 0")
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    n = src.shape[0]
    if dst.shape[0] != n:
        raise ValueError("source and target point counts differ")
    if n < 3:
        raise SingularSystemError(f"need at least 3 control points, got {n}")

    origin = src.mean(axis=0)
    centered = src - origin
    scale = math.sqrt(float(np.mean(np.sum(centered ** 2, axis=1))))
    if scale == 0.0:
        raise SingularSystemError("all control points coincide")
    q = centered / scale

    d2 = _sq_dists(q, q)
    off_diag = d2[~np.eye(n, dtype=bool)]
    if off_diag.min() < 1e-20:
        raise SingularSystemError("duplicate control points")
    sv = np.linalg.svd(q, compute_uv=False)
    if sv[-1] < 1e-9 * sv[0]:
        raise SingularSystemError("control points are collinear")

    system = np.zeros((n + 3, n + 3))
    system[:n, :n] = tps_kernel(d2) + regularization * np.eye(n)
    system[:n, n] = 1.0
    system[:n, n + 1:] = q
    system[n, :n] = 1.0
    system[n + 1:, :n] = q.T
    rhs = np.zeros((n + 3, 2))
    rhs[:n] = dst
    try:
        sol = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc
    if not np.all(np.isfinite(sol)):
        raise SingularSystemError("non-finite TPS solution")

    w_n = sol[:n]
    a0_n = sol[n]
    lin_n = sol[n + 1:]            # (2, 2): rows = input coord, cols = output coord

    # back to pixel units: U(r/s) = U(r)/s^2 - log(s^2) r^2 / s^2, and the
    # side conditions reduce sum_i w_i |p - p_i|^2 to sum_i w_i |p_i|^2
    s2 = scale * scale
    weights = w_n / s2
    lin = lin_n / scale
    const = a0_n - origin @ lin - (math.log(s2) / s2) * (np.sum(src ** 2, axis=1) @ w_n)
    affine = np.vstack([const, lin])
    return TpsTransform(src.copy(), affine, weights, float(regularization))


def solve_tps(pair: ControlPair, regularization: float = 0.0) -> TpsTransform:
    """Forward transform carrying ``pair.source`` onto ``pair.target``."""
    return fit_tps(pair.source, pair.target, regularization)


def tps_eval(t: TpsTransform, p) -> np.ndarray:
    pts = np.asarray(p, dtype=np.float64)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 2)
    out = t.affine[0] + pts @ t.affine[1:] + tps_kernel(_sq_dists(pts, t.control_src)) @ t.weights
    return out[0] if single else out


# --------------------------------------------------------------------------
# resampling

def _backward_coords(pair: ControlPair, width: int, height: int, regularization: float) -> np.ndarray:
    back = fit_tps(pair.target, pair.source, regularization)
    ys, xs = np.mgrid[0:height, 0:width]
    grid = np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64)
    return tps_eval(back, grid)


def bilinear_sample(arr: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Sample (H, W, C) ``arr`` at (x, y) ``coords``; out-of-frame clamps to the edge."""
    h, w = arr.shape[:2]
    x = np.clip(coords[:, 0], 0.0, w - 1)
    y = np.clip(coords[:, 1], 0.0, h - 1)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    a = arr.astype(np.float64)
    top = a[y0, x0] * (1 - fx) + a[y0, x1] * fx
    bottom = a[y1, x0] * (1 - fx) + a[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def warp_image(img: ImageBuffer, pair: ControlPair, regularization: float = 0.0) -> ImageBuffer:
    coords = _backward_coords(pair, img.width, img.height, regularization)
    vals = bilinear_sample(img.pixels, coords)
    out = np.clip(np.floor(vals + 0.5), 0, 255).astype(np.uint8)
    return ImageBuffer(out.reshape(img.height, img.width, 3))


def warp_mask(mask: SegMask, pair: ControlPair, regularization: float = 0.0) -> SegMask:
    """Nearest-neighbour counterpart of :func:`warp_image` for binary masks."""
    coords = _backward_coords(pair, mask.width, mask.height, regularization)
    x = np.clip(np.floor(coords[:, 0] + 0.5), 0, mask.width - 1).astype(np.intp)
    y = np.clip(np.floor(coords[:, 1] + 0.5), 0, mask.height - 1).astype(np.intp)
    return SegMask(mask.bits[y, x].reshape(mask.height, mask.width))


def lesion_warp(img: ImageBuffer, mask: SegMask, seed: SeedContext, max_frac: float = MAX_FRAC,
                regularization: float = 0.0, min_minor: float = MIN_MINOR_AXIS):
    """Fit, perturb and warp one sample; returns ``(image, mask, ellipse, pair)``.

    Raises DegenerateMaskError when the fitted minor semi-axis is below
    ``min_minor`` pixels, since such thin lesions give near-collinear controls.
    """
    check_pair(img, mask)
    e = fit_ellipse(mask)
    if e.semi_minor < min_minor:
        raise DegenerateMaskError(f"minor semi-axis {e.semi_minor:.3f} px below {min_minor}")
    pair = make_control_pair(e, seed, max_frac)
    return warp_image(img, pair, regularization), warp_mask(mask, pair, regularization), e, pair
