"""Planar shape primitives: ellipses, oriented boxes, axis-aligned boxes.

Conventions used throughout the toolkit:

* angles are radians in the canonical range [0, pi), measured from the
  +x axis toward +y;
* ellipse axis lengths ``l1 >= l2`` are FULL lengths (diameters), so a
  boundary point on the major axis sits at distance ``l1 / 2`` from the
  center;
* coordinates are input-image pixels, x to the right, y downward.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Ellipse",
    "OrientedBox",
    "AxisBox",
    "canonicalize_angle",
    "rotation_matrix",
    "cov_from_ellipse",
    "ellipse_from_cov",
    "affine_transform_ellipse",
    "ellipse_aabb",
    "obb_aabb",
    "shape_aabb",
    "point_in_ellipse",
    "region_contains",
    "raster_iou",
    "box_iou",
    "obb_from_ellipse",
]

# Relative eigenvalue gap below which an ellipse is treated as a circle
# (orientation is then arbitrary; we pick theta = 0).
_TIE_RTOL = 1e-12


def canonicalize_angle(theta: float) -> float:
    """Reduce an angle modulo pi into [0, pi)."""
    theta = float(theta)
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    t = math.fmod(theta, math.pi)
    if t < 0.0:
        t += math.pi
    if t >= math.pi:  # fmod rounding can land exactly on pi
        t -= math.pi
    return t


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Ellipse:
    """Bounding ellipse: center, full axis lengths l1 >= l2 > 0, orientation."""

    cx: float
    cy: float
    l1: float
    l2: float
    theta: float

    def __post_init__(self):
        for name in ("cx", "cy", "l1", "l2"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.l1 >= self.l2 > 0.0):
            raise ValueError(
                f"axis order: need l1 >= l2 > 0, got l1={self.l1}, l2={self.l2}"
            )
        object.__setattr__(self, "theta", canonicalize_angle(self.theta))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy])

    @property
    def area(self) -> float:
        return math.pi * self.l1 * self.l2 / 4.0

    def boundary_points(self, n: int) -> np.ndarray:
        """n points on the boundary, shape (n, 2)."""
        t = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
        local = np.stack([0.5 * self.l1 * np.cos(t), 0.5 * self.l2 * np.sin(t)], axis=1)
        return local @ rotation_matrix(self.theta).T + self.center


@dataclass(frozen=True)
class OrientedBox:
    """Rotated rectangle: center, side lengths w (along theta) and h, orientation."""

    cx: float
    cy: float
    w: float
    h: float
    theta: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.w > 0.0 and self.h > 0.0):
            raise ValueError(f"box sides must be positive, got w={self.w}, h={self.h}")
        object.__setattr__(self, "theta", canonicalize_angle(self.theta))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy])

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> np.ndarray:
        """The 4 corners, shape (4, 2)."""
        local = 0.5 * np.array(
            [[-self.w, -self.h], [self.w, -self.h], [self.w, self.h], [-self.w, self.h]]
        )
        return local @ rotation_matrix(self.theta).T + self.center


@dataclass(frozen=True)
class AxisBox:
    """Axis-aligned box given by top-left corner and non-negative extents."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.w < 0.0 or self.h < 0.0:
            raise ValueError(f"box extents must be >= 0, got w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h


Shape = Ellipse | OrientedBox | AxisBox


def cov_from_ellipse(e: Ellipse) -> np.ndarray:
    """Shape matrix R(theta) diag((l1/2)^2, (l2/2)^2) R(theta)^T of an ellipse.

    The interior is exactly { p : (p-c)^T m^-1 (p-c) <= 1 }, and the major
    eigenvector of m points along theta.
    """
    r = rotation_matrix(e.theta)
    d = np.diag([(0.5 * e.l1) ** 2, (0.5 * e.l2) ** 2])
    return r @ d @ r.T


def ellipse_from_cov(center, m) -> Ellipse:
    """Inverse of :func:`cov_from_ellipse` up to theta canonicalization.

    Equal eigenvalues (a circle) give theta = 0 by convention. Raises for
    matrices that are not symmetric positive-definite.
    """
    m = np.asarray(m, dtype=float)
    center = np.asarray(center, dtype=float)
    if m.shape != (2, 2) or not np.all(np.isfinite(m)):
        raise ValueError("degenerate shape matrix")
    if not np.allclose(m, m.T, rtol=1e-8, atol=1e-10):
        raise ValueError("degenerate shape matrix")
    evals, evecs = np.linalg.eigh(m)
    lam_minor, lam_major = float(evals[0]), float(evals[1])
    if lam_minor <= 0.0:
        raise ValueError("degenerate shape matrix")
    if lam_major - lam_minor <= _TIE_RTOL * lam_major:
        theta = 0.0
    else:
        vx, vy = evecs[:, 1]
        theta = canonicalize_angle(math.atan2(vy, vx))
    return Ellipse(
        center[0], center[1], 2.0 * math.sqrt(lam_major), 2.0 * math.sqrt(lam_minor), theta
    )


def affine_transform_ellipse(e: Ellipse, a, t) -> Ellipse:
    """Map an ellipse through x -> A x + t; the image of an ellipse is an ellipse."""
    a = np.asarray(a, dtype=float)
    t = np.asarray(t, dtype=float)
    if a.shape != (2, 2) or abs(float(np.linalg.det(a))) < 1e-12:
        raise ValueError("singular transform")
    center = a @ e.center + t
    m = a @ cov_from_ellipse(e) @ a.T
    return ellipse_from_cov(center, m)


def ellipse_aabb(e: Ellipse) -> AxisBox:
    """Tight axis-aligned bounding box of an ellipse (closed form)."""
    ha, hb = 0.5 * e.l1, 0.5 * e.l2
    c, s = math.cos(e.theta), math.sin(e.theta)
    hx = math.sqrt((ha * c) ** 2 + (hb * s) ** 2)
    hy = math.sqrt((ha * s) ** 2 + (hb * c) ** 2)
    return AxisBox(e.cx - hx, e.cy - hy, 2.0 * hx, 2.0 * hy)


def obb_aabb(b: OrientedBox) -> AxisBox:
    corners = b.corners()
    x0, y0 = corners.min(axis=0)
    x1, y1 = corners.max(axis=0)
    return AxisBox(x0, y0, x1 - x0, y1 - y0)


def shape_aabb(shape: Shape) -> AxisBox:
    if isinstance(shape, Ellipse):
        return ellipse_aabb(shape)
    if isinstance(shape, OrientedBox):
        return obb_aabb(shape)
    if isinstance(shape, AxisBox):
        return shape
    raise TypeError(f"unsupported shape {type(shape).__name__}")


def obb_from_ellipse(e: Ellipse) -> OrientedBox:
    """Oriented box with the same center/axes/orientation as the ellipse."""
    return OrientedBox(e.cx, e.cy, e.l1, e.l2, e.theta)


def region_contains(shape: Shape, xs, ys) -> np.ndarray:
    """Boundary-inclusive membership test, vectorized over point coordinates."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if isinstance(shape, Ellipse):
        dx, dy = xs - shape.cx, ys - shape.cy
        c, s = math.cos(shape.theta), math.sin(shape.theta)
        u = dx * c + dy * s
        v = -dx * s + dy * c
        return (u / (0.5 * shape.l1)) ** 2 + (v / (0.5 * shape.l2)) ** 2 <= 1.0
    if isinstance(shape, OrientedBox):
        dx, dy = xs - shape.cx, ys - shape.cy
        c, s = math.cos(shape.theta), math.sin(shape.theta)
        u = dx * c + dy * s
        v = -dx * s + dy * c
        return (np.abs(u) <= 0.5 * shape.w) & (np.abs(v) <= 0.5 * shape.h)
    if isinstance(shape, AxisBox):
        return (xs >= shape.x) & (xs <= shape.x2) & (ys >= shape.y) & (ys <= shape.y2)
    raise TypeError(f"unsupported shape {type(shape).__name__}")


def point_in_ellipse(p, e: Ellipse) -> bool:
    p = np.asarray(p, dtype=float)
    return bool(region_contains(e, p[0], p[1]))


def raster_iou(a: Shape, b: Shape, resolution: int = 512) -> float:
    """IOU by membership counting on a supersampled grid over the union's AABB.

    The grid is anchored to the union AABB and sampled at cell centers, so
    the result is deterministic for a fixed resolution and translation-
    covariant up to sampling.
    """
    if resolution < 64:
        raise ValueError(f"resolution must be >= 64, got {resolution}")
    ba, bb = shape_aabb(a), shape_aabb(b)
    x0, y0 = min(ba.x, bb.x), min(ba.y, bb.y)
    x1, y1 = max(ba.x2, bb.x2), max(ba.y2, bb.y2)
    if x1 - x0 <= 0.0 or y1 - y0 <= 0.0:
        raise ValueError("empty union")
    xs = x0 + (np.arange(resolution) + 0.5) * ((x1 - x0) / resolution)
    ys = y0 + (np.arange(resolution) + 0.5) * ((y1 - y0) / resolution)
    gx = xs[None, :]
    gy = ys[:, None]
    in_a = region_contains(a, gx, gy)
    in_b = region_contains(b, gx, gy)
    union = int(np.count_nonzero(in_a | in_b))
    if union == 0:
        raise ValueError("empty union")
    inter = int(np.count_nonzero(in_a & in_b))
    return inter / union


def box_iou(a: AxisBox, b: AxisBox) -> float:
    """Closed-form axis-aligned IOU; 0 when the union has zero area."""
    ix = max(0.0, min(a.x2, b.x2) - max(a.x, b.x))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y, b.y))
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union
