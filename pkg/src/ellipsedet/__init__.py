"""Bounding-ellipse vehicle detection toolkit.

Ellipse ground-truth encoding as rotated Gaussian heatmaps, the matching
loss stack with analytic gradients, NMS-free decoding, ellipse-aware
augmentation, ellipse-IOU evaluation, label/scene tooling, and an
annotation HTTP service.
"""

__version__ = "0.1.0"

from .geometry import AxisBox, Ellipse, OrientedBox

__all__ = ["AxisBox", "Ellipse", "OrientedBox", "__version__"]
