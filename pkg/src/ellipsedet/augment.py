"""Label-aware augmentation: peak smoothing, mosaic composition, cutmix.

All geometry bookkeeping is exact: mosaic maps each source image onto its
quadrant with a diagonal affine and maps every label ellipse through the
same affine; cutmix swaps pixels inside a rectangular patch and keeps the
surviving labels' geometry untouched (occlusion, not reshaping). Labels
whose visible fraction drops below the threshold are dropped; retained
labels have their heatmap peak scaled by visibility and floored just
above the decode threshold so they stay detectable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import qmc

from .dataset import LabelRecord, ObjectLabel
from .geometry import AxisBox, Ellipse, affine_transform_ellipse, rotation_matrix

__all__ = [
    "PEAK_FLOOR",
    "AugmentConfig",
    "Sample",
    "visibility_fraction",
    "smooth_labels",
    "smooth_sample",
    "mosaic_split",
    "mosaic_quadrants",
    "mosaic",
    "cutmix",
]

# Retained-object peak floor: decode threshold 0.3 plus a safety margin,
# so occluded-but-kept objects still clear the detector's cutoff.
PEAK_FLOOR = 0.35


@dataclass(frozen=True)
class AugmentConfig:
    smoothing_eps: float = 0.1
    visibility_tau: float = 0.5
    mosaic_center_jitter: float = 0.25
    rng_seed: int = 0
    visibility_samples: int = 1024

    def __post_init__(self):
        if not (0.0 <= self.smoothing_eps < 0.5):
            raise ValueError(f"smoothing_eps must be in [0, 0.5), got {self.smoothing_eps}")
        if not (0.0 < self.visibility_tau <= 1.0):
            raise ValueError(f"visibility_tau must be in (0, 1], got {self.visibility_tau}")
        if not (0.0 <= self.mosaic_center_jitter < 0.5):
            raise ValueError(
                f"mosaic_center_jitter must be in [0, 0.5), got {self.mosaic_center_jitter}"
            )
        if self.visibility_samples < 256:
            raise ValueError(f"visibility_samples must be >= 256, got {self.visibility_samples}")


@dataclass
class Sample:
    """An image with its labels; dims must agree with the record."""

    image: np.ndarray  # (H, W, 3) uint8
    record: LabelRecord

    def __post_init__(self):
        h, w = self.image.shape[:2]
        if (self.record.width, self.record.height) != (w, h):
            raise ValueError(
                f"record says {self.record.width}x{self.record.height}, image is {w}x{h}"
            )


def visibility_fraction(e: Ellipse, region: AxisBox, samples: int = 1024) -> float:
    """Fraction of the ellipse interior lying inside an axis-aligned region.

    Quasi-uniform interior points come from an (unscrambled) Halton
    sequence mapped by the usual sqrt-radius disk transform, so the result
    is deterministic. Accuracy is ~1/samples for smooth cuts.
    """
    if samples < 256:
        raise ValueError(f"need at least 256 samples, got {samples}")
    uv = qmc.Halton(d=2, scramble=False).random(samples)
    r = np.sqrt(uv[:, 0])
    phi = 2.0 * math.pi * uv[:, 1]
    local = np.stack([0.5 * e.l1 * r * np.cos(phi), 0.5 * e.l2 * r * np.sin(phi)], axis=1)
    pts = local @ rotation_matrix(e.theta).T + e.center
    inside = (
        (pts[:, 0] >= region.x)
        & (pts[:, 0] <= region.x2)
        & (pts[:, 1] >= region.y)
        & (pts[:, 1] <= region.y2)
    )
    return float(np.count_nonzero(inside)) / samples


def smooth_labels(peaks, eps: float) -> list[float]:
    """Label smoothing: every object's heatmap peak becomes 1 - eps."""
    if not (0.0 <= eps < 0.5):
        raise ValueError(f"eps must be in [0, 0.5), got {eps}")
    return [1.0 - eps for _ in peaks]


def smooth_sample(sample: Sample, eps: float) -> Sample:
    """Apply label smoothing to a sample's objects (image unchanged)."""
    peaks = smooth_labels([o.peak for o in sample.record.objects], eps)
    objects = tuple(replace(o, peak=p) for o, p in zip(sample.record.objects, peaks))
    return Sample(sample.image, replace(sample.record, objects=objects))


def _keep(obj: ObjectLabel, ellipse: Ellipse, box, visible: float, tau: float, size):
    """Shared keep/drop + peak rule; returns the retained label or None."""
    if visible < tau:
        return None
    w, h = size
    if not (0.0 <= ellipse.cx < w and 0.0 <= ellipse.cy < h):
        return None
    peak = max(obj.peak * visible, PEAK_FLOOR)
    return replace(obj, ellipse=ellipse, box=box, peak=min(peak, 1.0))


def _nn_indices(out_len: int, src_len: int) -> np.ndarray:
    """Source index per output pixel for nearest-neighbor axis scaling."""
    idx = np.floor((np.arange(out_len) + 0.5) * src_len / out_len).astype(int)
    return np.clip(idx, 0, src_len - 1)


def mosaic_split(cfg: AugmentConfig, size) -> tuple[int, int]:
    """The integer mosaic split point drawn for this config's seed.

    Uniform in the central region allowed by ``mosaic_center_jitter``,
    rounded to a whole pixel and kept off the image edges.
    """
    w, h = size
    rng = np.random.default_rng(cfg.rng_seed)
    j = cfg.mosaic_center_jitter
    sx = int(np.clip(round(rng.uniform(0.5 - j, 0.5 + j) * w), 1, w - 1))
    sy = int(np.clip(round(rng.uniform(0.5 - j, 0.5 + j) * h), 1, h - 1))
    return sx, sy


def mosaic_quadrants(split, size) -> list[tuple[int, int, int, int]]:
    """Quadrant rectangles (x0, y0, w, h) in TL, TR, BL, BR order."""
    sx, sy = split
    w, h = size
    return [
        (0, 0, sx, sy),
        (sx, 0, w - sx, sy),
        (0, sy, sx, h - sy),
        (sx, sy, w - sx, h - sy),
    ]


def mosaic(samples, cfg: AugmentConfig = AugmentConfig()):
    """Compose four samples into one image of the same size.

    The mosaic center is drawn uniformly within the central region allowed
    by ``mosaic_center_jitter`` and snapped to an integer pixel split.
    Quadrant order is top-left, top-right, bottom-left, bottom-right.
    Every output pixel is a nearest-neighbor copy of one source pixel;
    every label ellipse runs through the matching diagonal affine.
    """
    samples = list(samples)
    if len(samples) != 4:
        raise ValueError(f"mosaic needs exactly 4 samples, got {len(samples)}")
    h, w = samples[0].image.shape[:2]
    for s in samples[1:]:
        if s.image.shape != samples[0].image.shape:
            raise ValueError(
                f"dimension mismatch: {s.image.shape} vs {samples[0].image.shape}"
            )

    quads = mosaic_quadrants(mosaic_split(cfg, (w, h)), (w, h))
    out = np.empty_like(samples[0].image)
    objects = []
    for s, (x0, y0, qw, qh) in zip(samples, quads):
        cols = _nn_indices(qw, w)
        rows = _nn_indices(qh, h)
        out[y0 : y0 + qh, x0 : x0 + qw] = s.image[np.ix_(rows, cols)]

        a = np.array([[qw / w, 0.0], [0.0, qh / h]])
        t = np.array([x0, y0], dtype=float)
        region = AxisBox(x0, y0, qw, qh)
        for o in s.record.objects:
            e2 = affine_transform_ellipse(o.ellipse, a, t)
            box2 = None
            if o.box is not None:
                box2 = AxisBox(
                    x0 + o.box.x * a[0, 0], y0 + o.box.y * a[1, 1],
                    o.box.w * a[0, 0], o.box.h * a[1, 1],
                )
            visible = visibility_fraction(e2, region, cfg.visibility_samples)
            kept = _keep(o, e2, box2, visible, cfg.visibility_tau, (w, h))
            if kept is not None:
                objects.append(kept)

    rid = "mosaic-" + "-".join(s.record.image_id for s in samples)
    return Sample(out, LabelRecord(rid, w, h, tuple(objects)))


def _snap_patch(patch: AxisBox, size) -> tuple[int, int, int, int]:
    w, h = size
    x0, y0 = round(patch.x), round(patch.y)
    x1, y1 = round(patch.x2), round(patch.y2)
    if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
        raise ValueError(f"patch outside bounds: {patch} in {w}x{h}")
    return x0, y0, x1, y1


def cutmix(base: Sample, donor: Sample, patch: AxisBox, cfg: AugmentConfig = AugmentConfig()):
    """Replace a rectangular patch of ``base`` with donor pixels.

    The patch is snapped to whole pixels. Base labels survive when enough
    of them remains visible outside the patch, donor labels when enough
    sits inside it; surviving geometry is NOT altered — a partially
    occluded vehicle keeps its true extent, only its peak drops.
    """
    if base.image.shape != donor.image.shape:
        raise ValueError(
            f"dimension mismatch: {donor.image.shape} vs {base.image.shape}"
        )
    h, w = base.image.shape[:2]
    x0, y0, x1, y1 = _snap_patch(patch, (w, h))
    region = AxisBox(x0, y0, x1 - x0, y1 - y0)

    out = base.image.copy()
    out[y0:y1, x0:x1] = donor.image[y0:y1, x0:x1]

    objects = []
    for o in base.record.objects:
        visible = 1.0 - visibility_fraction(o.ellipse, region, cfg.visibility_samples)
        kept = _keep(o, o.ellipse, o.box, visible, cfg.visibility_tau, (w, h))
        if kept is not None:
            objects.append(kept)
    for o in donor.record.objects:
        visible = visibility_fraction(o.ellipse, region, cfg.visibility_samples)
        kept = _keep(o, o.ellipse, o.box, visible, cfg.visibility_tau, (w, h))
        if kept is not None:
            objects.append(kept)

    rid = f"cutmix-{base.record.image_id}-{donor.record.image_id}"
    return Sample(out, LabelRecord(rid, w, h, tuple(objects)))
