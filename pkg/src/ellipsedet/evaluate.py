"""Detection evaluation: greedy matching, interpolated AP, mAP.

Matching is per image and per class: detections are visited in descending
score order and each claims the highest-IOU unmatched ground truth if that
IOU clears the threshold (a ground truth can be matched at most once).
AP uses all-point interpolation (the precision envelope integrated over
recall). Classes with zero ground truth are excluded from the mean and
reported separately.

Overlap between a detection and a ground truth ellipse can be scored on
the ellipses themselves, on their oriented boxes, or on their axis-aligned
boxes; the latter is the classic source of phantom overlap between
slanted elongated neighbors.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Ellipse, box_iou, ellipse_aabb, obb_from_ellipse, raster_iou

__all__ = [
    "EvalConfig",
    "DetRow",
    "GtRow",
    "ClassEval",
    "EvalResult",
    "pair_iou",
    "det_rows",
    "gt_rows",
    "match_image",
    "average_precision",
    "evaluate",
    "detection_prf",
]

_IOU_KINDS = ("ellipse", "obb", "box")


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.5
    iou_kind: str = "ellipse"
    resolution: int = 512

    def __post_init__(self):
        if not (0.0 < self.iou_threshold <= 1.0):
            raise ValueError(f"iou threshold out of range (0, 1]: {self.iou_threshold}")
        if self.iou_kind not in _IOU_KINDS:
            raise ValueError(f"iou_kind must be one of {_IOU_KINDS}, got {self.iou_kind!r}")


@dataclass(frozen=True)
class DetRow:
    class_name: str
    score: float
    ellipse: Ellipse


@dataclass(frozen=True)
class GtRow:
    class_name: str
    ellipse: Ellipse


@dataclass
class ClassEval:
    ap: float
    num_gt: int
    tp: int
    fp: int
    precision: np.ndarray
    recall: np.ndarray


@dataclass
class EvalResult:
    mean_ap: float
    per_class: dict[str, ClassEval] = field(default_factory=dict)
    skipped_classes: list[str] = field(default_factory=list)


def pair_iou(a: Ellipse, b: Ellipse, kind: str = "ellipse", resolution: int = 512) -> float:
    """Overlap between two labeled shapes under the chosen geometry."""
    if kind == "ellipse":
        return raster_iou(a, b, resolution=resolution)
    if kind == "obb":
        return raster_iou(obb_from_ellipse(a), obb_from_ellipse(b), resolution=resolution)
    if kind == "box":
        return box_iou(ellipse_aabb(a), ellipse_aabb(b))
    raise ValueError(f"iou_kind must be one of {_IOU_KINDS}, got {kind!r}")


def det_rows(detections, classes) -> list[DetRow]:
    """Adapt decoder output (class ids) to evaluator rows (class names)."""
    return [DetRow(classes[d.class_id], d.score, d.ellipse) for d in detections]


def gt_rows(record) -> list[GtRow]:
    """Adapt a label record to evaluator rows."""
    return [GtRow(o.class_name, o.ellipse) for o in record.objects]


def match_image(
    dets: list[DetRow], gts: list[GtRow], config: EvalConfig = EvalConfig()
) -> list[bool]:
    """Greedy TP/FP flags for one image's detections of a single class.

    ``dets`` must already be sorted by descending score and share one
    class with ``gts``. Ties in IOU go to the earliest ground truth.
    """
    taken = [False] * len(gts)
    flags = []
    for d in dets:
        best_iou, best_j = 0.0, -1
        for j, g in enumerate(gts):
            if taken[j]:
                continue
            iou = pair_iou(d.ellipse, g.ellipse, config.iou_kind, config.resolution)
            if iou > best_iou:
                best_iou, best_j = iou, j
        if best_j >= 0 and best_iou >= config.iou_threshold:
            taken[best_j] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def average_precision(flags, num_gt: int):
    """All-point interpolated AP from score-ordered TP/FP flags.

    Returns (ap, precision, recall) where precision/recall are the raw
    running curves. The AP integrates the precision envelope: for each
    recall step, the best precision achieved at that recall or beyond.
    """
    if num_gt <= 0:
        raise ValueError(f"undefined AP: no ground truth (num_gt={num_gt})")
    flags = np.asarray(list(flags), dtype=bool)
    if flags.size == 0:
        return 0.0, np.zeros(0), np.zeros(0)
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    precision = tp / (tp + fp)
    recall = tp / num_gt
    # envelope: running max of precision from the right
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_r = 0.0
    ap = 0.0
    for p, r, is_tp in zip(envelope, recall, flags):
        if is_tp:
            ap += (r - prev_r) * p
            prev_r = r
    return float(ap), precision, recall


def _group(rows, key):
    out: dict = {}
    for r in rows:
        out.setdefault(key(r), []).append(r)
    return out


def evaluate(
    dets_by_image: dict[str, list[DetRow]],
    gts_by_image: dict[str, list[GtRow]],
    classes,
    config: EvalConfig = EvalConfig(),
) -> EvalResult:
    """mAP over classes with ground truth; per-class curves included.

    ``dets_by_image`` may omit images (treated as no detections) but must
    not name images absent from ``gts_by_image``.
    """
    unknown = set(dets_by_image) - set(gts_by_image)
    if unknown:
        raise ValueError(f"detections reference unknown image ids: {sorted(unknown)}")

    result = EvalResult(mean_ap=0.0)
    aps = []
    for cls in classes:
        scored: list[tuple[float, int, bool]] = []  # (-score, seq, flag) for global sort
        num_gt = 0
        seq = 0
        for image_id, gts in gts_by_image.items():
            gts_c = [g for g in gts if g.class_name == cls]
            num_gt += len(gts_c)
            dets_c = [d for d in dets_by_image.get(image_id, []) if d.class_name == cls]
            dets_c.sort(key=lambda d: -d.score)
            for d, flag in zip(dets_c, match_image(dets_c, gts_c, config)):
                scored.append((-d.score, seq, flag))
                seq += 1
        if num_gt == 0:
            result.skipped_classes.append(cls)
            continue
        scored.sort()
        flags = [f for _, _, f in scored]
        ap, precision, recall = average_precision(flags, num_gt)
        result.per_class[cls] = ClassEval(
            ap=ap,
            num_gt=num_gt,
            tp=int(sum(flags)),
            fp=int(len(flags) - sum(flags)),
            precision=precision,
            recall=recall,
        )
        aps.append(ap)
    if not aps:
        raise ValueError("undefined mAP: no class has ground truth")
    result.mean_ap = float(np.mean(aps))
    return result


def detection_prf(
    dets_by_image: dict[str, list[DetRow]],
    gts_by_image: dict[str, list[GtRow]],
    classes,
    config: EvalConfig = EvalConfig(),
) -> tuple[float, float, float]:
    """Aggregate precision / recall / F1 over all images and classes."""
    tp = fp = num_gt = 0
    for image_id, gts in gts_by_image.items():
        dets = dets_by_image.get(image_id, [])
        for cls in classes:
            gts_c = [g for g in gts if g.class_name == cls]
            dets_c = sorted(
                (d for d in dets if d.class_name == cls), key=lambda d: -d.score
            )
            flags = match_image(dets_c, gts_c, config)
            tp += sum(flags)
            fp += len(flags) - sum(flags)
            num_gt += len(gts_c)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / num_gt if num_gt else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1
