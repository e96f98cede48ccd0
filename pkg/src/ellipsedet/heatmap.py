"""Ground-truth encoding: rotated-Gaussian heatmaps + regression targets.

An object's bounding ellipse becomes an anisotropic Gaussian blob on the
class heatmap, its bandwidths tied to the ellipse axes (sigma = axis
length / (6 * stride), in heatmap-cell units), so the blob fills the
object footprint instead of a fixed-radius disk. The cell containing the
downsampled center carries the sub-cell offset and the raw ellipse
parameters for regression.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Ellipse, region_contains

__all__ = [
    "EncoderConfig",
    "Instance",
    "Targets",
    "gaussian_sigmas",
    "gaussian_coeffs",
    "render_gaussian",
    "center_cell",
    "render_heatmap",
    "render_regression_maps",
    "encode_targets",
    "segmentation_mask",
]

_MODES = ("ellipse", "circle")


@dataclass(frozen=True)
class EncoderConfig:
    stride: int = 4
    num_classes: int = 3
    mode: str = "ellipse"

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class Instance:
    """One labeled object: class channel, bounding ellipse, heatmap peak."""

    class_id: int
    ellipse: Ellipse
    peak: float = 1.0

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"class_id must be >= 0, got {self.class_id}")
        if not (0.0 < self.peak <= 1.0):
            raise ValueError(f"peak must be in (0, 1], got {self.peak}")


@dataclass
class Targets:
    """Dense training targets for one image.

    heatmap  (C, h, w)  per-class Gaussian scores in [0, 1]
    offset   (2, h, w)  sub-cell center offset (x, y), set at center cells
    size     (3, h, w)  (l1, l2, theta) in input pixels/radians, at centers
    mask     (C, h, w)  bool, True exactly at each object's center cell
    seg      (H, W)     binary union of all object ellipses, input resolution
    """

    heatmap: np.ndarray
    offset: np.ndarray
    size: np.ndarray
    mask: np.ndarray
    seg: np.ndarray

    @property
    def num_positives(self) -> int:
        return int(np.count_nonzero(self.mask))


def gaussian_sigmas(e: Ellipse, stride: int, mode: str = "ellipse") -> tuple[float, float]:
    """Blob bandwidths in heatmap-cell units: one sixth of each axis.

    Circle mode ignores orientation and uses the major axis for both, which
    reduces the blob to an isotropic disk.
    """
    if mode == "circle":
        s = max(e.l1, e.l2) / (6.0 * stride)
        return s, s
    if mode != "ellipse":
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    return e.l1 / (6.0 * stride), e.l2 / (6.0 * stride)


def gaussian_coeffs(sx: float, sy: float, theta: float) -> tuple[float, float, float]:
    """Quadratic-form coefficients (a, b, c) of the rotated Gaussian exponent.

    exponent(dx, dy) = -(a dx^2 + 2 b dx dy + c dy^2), equal to
    -1/2 d^T S^-1 d for covariance S = R(theta) diag(sx^2, sy^2) R(theta)^T.
    """
    if sx <= 0.0 or sy <= 0.0:
        raise ValueError(f"sigmas must be positive, got {sx}, {sy}")
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    a = cos_t**2 / (2.0 * sx**2) + sin_t**2 / (2.0 * sy**2)
    b = math.sin(2.0 * theta) / (4.0 * sx**2) - math.sin(2.0 * theta) / (4.0 * sy**2)
    c = sin_t**2 / (2.0 * sx**2) + cos_t**2 / (2.0 * sy**2)
    return a, b, c


def render_gaussian(
    shape: tuple[int, int],
    mu: tuple[float, float],
    sx: float,
    sy: float,
    theta: float,
    peak: float = 1.0,
) -> np.ndarray:
    """Evaluate peak * exp(quadform) on the full (h, w) grid.

    Cell (ix, iy) is evaluated at continuous coordinate (ix, iy); no
    truncation window is applied, so far-field values decay smoothly.
    """
    h, w = shape
    a, b, c = gaussian_coeffs(sx, sy, theta)
    dx = np.arange(w, dtype=float)[None, :] - mu[0]
    dy = np.arange(h, dtype=float)[:, None] - mu[1]
    q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
    return peak * np.exp(-q)


def center_cell(e: Ellipse, stride: int) -> tuple[int, int, float, float]:
    """Center cell indices and fractional sub-cell offset on the heatmap grid."""
    mx, my = e.cx / stride, e.cy / stride
    ix, iy = int(math.floor(mx)), int(math.floor(my))
    return ix, iy, mx - ix, my - iy


def segmentation_mask(instances, image_size: tuple[int, int]) -> np.ndarray:
    """Binary union of all instance ellipses, sampled at pixel centers."""
    width, height = image_size
    seg = np.zeros((height, width), dtype=float)
    if not instances:
        return seg
    xs = np.arange(width, dtype=float)[None, :] + 0.5
    ys = np.arange(height, dtype=float)[:, None] + 0.5
    for inst in instances:
        seg = np.maximum(seg, region_contains(inst.ellipse, xs, ys).astype(float))
    return seg


def _grid_shape(image_size: tuple[int, int], config: EncoderConfig) -> tuple[int, int]:
    width, height = image_size
    if width < config.stride or height < config.stride:
        raise ValueError(f"image size {image_size} smaller than stride {config.stride}")
    if width % config.stride or height % config.stride:
        raise ValueError(
            f"image size {image_size} not divisible by stride {config.stride}"
        )
    return height // config.stride, width // config.stride


def _validated_cell(inst: Instance, image_size, w: int, h: int, config: EncoderConfig):
    if inst.class_id >= config.num_classes:
        raise ValueError(
            f"class_id {inst.class_id} out of range for {config.num_classes} classes"
        )
    e = inst.ellipse
    ix, iy, ox, oy = center_cell(e, config.stride)
    if not (0 <= ix < w and 0 <= iy < h):
        raise ValueError(f"object center ({e.cx}, {e.cy}) outside image {image_size}")
    return ix, iy, ox, oy


def render_heatmap(
    instances, image_size: tuple[int, int], config: EncoderConfig = EncoderConfig()
) -> np.ndarray:
    """Per-class Gaussian score maps, shape (num_classes, h, w).

    Overlapping blobs on the same class channel combine by element-wise
    max; the center cell is then forced up to the instance peak so decode
    always sees an exact local maximum there. Coincident centers are
    legal here (the larger peak wins, and two identical objects render
    the same map as either alone).
    """
    h, w = _grid_shape(image_size, config)
    heatmap = np.zeros((config.num_classes, h, w), dtype=float)
    for inst in instances:
        ix, iy, _, _ = _validated_cell(inst, image_size, w, h, config)
        e = inst.ellipse
        sx, sy = gaussian_sigmas(e, config.stride, config.mode)
        g = render_gaussian(
            (h, w), (e.cx / config.stride, e.cy / config.stride), sx, sy, e.theta, inst.peak
        )
        np.maximum(heatmap[inst.class_id], g, out=heatmap[inst.class_id])
        heatmap[inst.class_id, iy, ix] = max(heatmap[inst.class_id, iy, ix], inst.peak)
    return heatmap


def render_regression_maps(
    instances, image_size: tuple[int, int], config: EncoderConfig = EncoderConfig()
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Offset (2, h, w) and size (3, h, w) maps plus the center-cell mask.

    Each object's center cell carries its sub-cell offset and raw
    (l1, l2, theta). Two objects of the same class landing on one cell
    would silently shadow each other, so that raises instead; centers
    from different classes may share a cell (separate mask channels),
    in which case the later object owns the shared regression slots.
    """
    h, w = _grid_shape(image_size, config)
    offset = np.zeros((2, h, w), dtype=float)
    size = np.zeros((3, h, w), dtype=float)
    mask = np.zeros((config.num_classes, h, w), dtype=bool)
    for inst in instances:
        ix, iy, ox, oy = _validated_cell(inst, image_size, w, h, config)
        if mask[inst.class_id, iy, ix]:
            raise ValueError(
                f"center collision: two class-{inst.class_id} objects share cell ({ix}, {iy})"
            )
        e = inst.ellipse
        offset[:, iy, ix] = (ox, oy)
        size[:, iy, ix] = (e.l1, e.l2, e.theta)
        mask[inst.class_id, iy, ix] = True
    return offset, size, mask


def encode_targets(
    instances, image_size: tuple[int, int], config: EncoderConfig = EncoderConfig()
) -> Targets:
    """Encode labeled instances into dense training targets.

    Bundles the class heatmaps, regression maps, center mask, and the
    full-resolution segmentation union into one Targets record; see
    render_heatmap / render_regression_maps for the per-map rules.
    """
    instances = list(instances)
    heatmap = render_heatmap(instances, image_size, config)
    offset, size, mask = render_regression_maps(instances, image_size, config)
    seg = segmentation_mask(instances, image_size)
    return Targets(heatmap=heatmap, offset=offset, size=size, mask=mask, seg=seg)
