"""NMS-free decoding of heatmap + regression maps into detections.

A detection is any heatmap cell that is a local maximum over its 3x3
neighborhood and clears the score threshold. Ties on flat plateaus are
broken once per plateau (adjacent qualifying cells necessarily hold equal
values, so 8-connected components of qualifying cells are merged and the
first cell in row-major order speaks for the group).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import Ellipse

__all__ = ["DecodeConfig", "Detection", "decode", "extract_peaks"]

_MIN_SIDE = 1e-3  # floor applied to non-positive predicted axis lengths


@dataclass(frozen=True)
class DecodeConfig:
    stride: int = 4
    threshold: float = 0.3
    top_k: int = 100

    def __post_init__(self):
        if not (0.0 < self.threshold <= 1.0):
            raise ValueError(f"threshold out of range (0, 1]: {self.threshold}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")


@dataclass(frozen=True)
class Detection:
    class_id: int
    score: float
    ellipse: Ellipse


def _local_max(channel: np.ndarray) -> np.ndarray:
    """Cells >= all 8 neighbors (missing neighbors count as -inf)."""
    padded = np.pad(channel, 1, constant_values=-np.inf)
    best = channel.copy()
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            h, w = channel.shape
            np.maximum(best, padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w], out=best)
    return channel >= best


def _plateau_representatives(qualifying: np.ndarray) -> list[tuple[int, int]]:
    """First row-major cell of each 8-connected component of qualifying cells."""
    labels, count = ndimage.label(qualifying, structure=np.ones((3, 3), dtype=int))
    reps = []
    seen = set()
    ys, xs = np.nonzero(qualifying)  # nonzero iterates row-major
    for iy, ix in zip(ys, xs):
        lab = labels[iy, ix]
        if lab not in seen:
            seen.add(lab)
            reps.append((int(iy), int(ix)))
        if len(reps) == count:
            break
    return reps


def extract_peaks(
    heatmap: np.ndarray, threshold: float, top_k: int
) -> list[tuple[int, int, int, float]]:
    """Qualifying peak cells as (class_id, row, col, score) tuples.

    A cell qualifies when it is a 3x3 local maximum and its score is >=
    threshold (inclusive). Output is ordered by (score desc, class, row,
    column) and truncated to the global top_k; an empty list is a valid
    result.
    """
    if heatmap.ndim != 3:
        raise ValueError(f"heatmap must be (C, h, w), got shape {heatmap.shape}")
    candidates = []  # (-score, class_id, iy, ix)
    for k in range(heatmap.shape[0]):
        channel = heatmap[k]
        qualifying = _local_max(channel) & (channel >= threshold)
        if not qualifying.any():
            continue
        for iy, ix in _plateau_representatives(qualifying):
            candidates.append((-float(channel[iy, ix]), k, iy, ix))
    candidates.sort()
    return [(k, iy, ix, -neg) for neg, k, iy, ix in candidates[:top_k]]


def decode(
    heatmap: np.ndarray,
    offset: np.ndarray,
    size: np.ndarray,
    config: DecodeConfig = DecodeConfig(),
) -> list[Detection]:
    """Extract detections from prediction maps.

    Centers are reconstructed as (cell + sub-cell offset) * stride; axis
    lengths and orientation are read verbatim from the size map, then
    normalized into a valid ellipse (non-positive lengths floored, axes
    swapped with a 90-degree turn when the minor exceeds the major).
    Results are ordered by (score desc, class, row, column) and truncated
    to the global top_k.
    """
    if heatmap.ndim != 3:
        raise ValueError(f"heatmap must be (C, h, w), got shape {heatmap.shape}")
    c, h, w = heatmap.shape
    if offset.shape != (2, h, w) or size.shape != (3, h, w):
        raise ValueError("offset/size shapes must match the heatmap grid")

    out = []
    for class_id, iy, ix, score in extract_peaks(heatmap, config.threshold, config.top_k):
        cx = (ix + float(offset[0, iy, ix])) * config.stride
        cy = (iy + float(offset[1, iy, ix])) * config.stride
        l1 = max(float(size[0, iy, ix]), _MIN_SIDE)
        l2 = max(float(size[1, iy, ix]), _MIN_SIDE)
        theta = float(size[2, iy, ix])
        if l1 < l2:
            l1, l2 = l2, l1
            theta += np.pi / 2.0
        out.append(Detection(class_id, score, Ellipse(cx, cy, l1, l2, theta)))
    return out
