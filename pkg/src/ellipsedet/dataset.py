"""Label records (JSON persistence) and synthetic scene generation.

The on-disk label format is versioned JSON:

    {"v": 1, "image_id": "scene_000", "width": 512, "height": 512,
     "objects": [{"class": "car",
                  "ellipse": {"cx": .., "cy": .., "l1": .., "l2": .., "theta": ..},
                  "box": {"x": .., "y": .., "w": .., "h": ..},   # optional
                  "box_user_drawn": false,                        # optional
                  "peak": 1.0}]}                                  # optional

Floats survive a save/load round trip exactly (shortest-repr encoding).
Parse errors carry the byte offset (for JSON syntax) or the object index
(for semantic problems) so an annotation UI can point at the culprit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decode import extract_peaks
from .geometry import AxisBox, Ellipse, ellipse_aabb, region_contains
from .heatmap import Instance, center_cell, gaussian_sigmas, render_gaussian

__all__ = [
    "ObjectLabel",
    "LabelRecord",
    "labels_to_json",
    "parse_labels",
    "save_labels",
    "load_labels",
    "instances_from_record",
    "detections_to_json",
    "parse_detections",
    "SynthConfig",
    "synth_scene",
    "write_dataset",
    "CLASS_COLORS",
]

FORMAT_VERSION = 1

# class name -> fill RGB for synthetic scenes (distinct, mid-brightness)
CLASS_COLORS = {
    "car": (204, 62, 62),
    "bus": (62, 160, 62),
    "truck": (62, 90, 204),
}
_EXTRA_COLORS = [(200, 160, 40), (150, 60, 180), (40, 170, 170)]


@dataclass(frozen=True)
class ObjectLabel:
    class_name: str
    ellipse: Ellipse
    box: AxisBox | None = None
    box_user_drawn: bool = False
    peak: float = 1.0

    def __post_init__(self):
        if not self.class_name:
            raise ValueError("class name must be non-empty")
        if not (0.0 < self.peak <= 1.0):
            raise ValueError(f"peak must be in (0, 1], got {self.peak}")
        # an auto-filled box must cover the ellipse; only a human may shrink it
        if self.box is not None and not self.box_user_drawn:
            bb = ellipse_aabb(self.ellipse)
            tol = 1e-6
            if (self.box.x > bb.x + tol or self.box.y > bb.y + tol
                    or self.box.x2 < bb.x2 - tol or self.box.y2 < bb.y2 - tol):
                raise ValueError("box does not contain the ellipse extents")


@dataclass(frozen=True)
class LabelRecord:
    image_id: str
    width: int
    height: int
    objects: tuple[ObjectLabel, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")


def labels_to_json(record: LabelRecord) -> str:
    objs = []
    for o in record.objects:
        e = o.ellipse
        d = {
            "class": o.class_name,
            "ellipse": {"cx": e.cx, "cy": e.cy, "l1": e.l1, "l2": e.l2, "theta": e.theta},
        }
        if o.box is not None:
            d["box"] = {"x": o.box.x, "y": o.box.y, "w": o.box.w, "h": o.box.h}
            d["box_user_drawn"] = o.box_user_drawn
        if o.peak != 1.0:
            d["peak"] = o.peak
        objs.append(d)
    doc = {
        "v": FORMAT_VERSION,
        "image_id": record.image_id,
        "width": record.width,
        "height": record.height,
        "objects": objs,
    }
    return json.dumps(doc, indent=2)


def _require(obj: dict, key: str, kinds, where: str):
    if key not in obj:
        raise ValueError(f"{where}: missing field {key!r}")
    v = obj[key]
    if kinds is not None and not isinstance(v, kinds):
        raise ValueError(f"{where}: field {key!r} has wrong type {type(v).__name__}")
    return v


def _parse_object(d, index: int) -> ObjectLabel:
    where = f"object {index}"
    if not isinstance(d, dict):
        raise ValueError(f"{where}: must be an object")
    cls = _require(d, "class", str, where)
    ed = _require(d, "ellipse", dict, where)
    vals = {k: float(_require(ed, k, (int, float), f"{where}: ellipse")) for k in
            ("cx", "cy", "l1", "l2", "theta")}
    if vals["l1"] < vals["l2"]:
        raise ValueError(f"{where}: axis order: l1 ({vals['l1']}) < l2 ({vals['l2']})")
    try:
        ellipse = Ellipse(**vals)
    except ValueError as err:
        raise ValueError(f"{where}: {err}") from None
    box = None
    user_drawn = False
    if "box" in d:
        bd = _require(d, "box", dict, where)
        try:
            box = AxisBox(*(float(_require(bd, k, (int, float), f"{where}: box"))
                            for k in ("x", "y", "w", "h")))
        except ValueError as err:
            raise ValueError(f"{where}: {err}") from None
        user_drawn = bool(d.get("box_user_drawn", False))
    peak = d.get("peak", 1.0)
    if not isinstance(peak, (int, float)) or not (0.0 < float(peak) <= 1.0):
        raise ValueError(f"{where}: peak must be a number in (0, 1], got {peak!r}")
    try:
        return ObjectLabel(cls, ellipse, box=box, box_user_drawn=user_drawn, peak=float(peak))
    except ValueError as err:
        raise ValueError(f"{where}: {err}") from None


def parse_labels(text: str) -> LabelRecord:
    """Parse and validate a label document.

    JSON syntax errors report the byte offset; semantic errors report the
    index of the offending object.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ValueError(f"invalid JSON at byte {err.pos}: {err.msg}") from None
    if not isinstance(doc, dict):
        raise ValueError("document root must be an object")
    version = _require(doc, "v", int, "document")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported version {version}, expected {FORMAT_VERSION}")
    image_id = _require(doc, "image_id", str, "document")
    width = _require(doc, "width", int, "document")
    height = _require(doc, "height", int, "document")
    raw_objects = _require(doc, "objects", list, "document")
    objects = [_parse_object(o, i) for i, o in enumerate(raw_objects)]
    return LabelRecord(image_id=image_id, width=width, height=height, objects=tuple(objects))


def save_labels(record: LabelRecord, path) -> None:
    Path(path).write_text(labels_to_json(record) + "\n", encoding="utf-8")


def load_labels(path) -> LabelRecord:
    return parse_labels(Path(path).read_text(encoding="utf-8"))


def instances_from_record(record: LabelRecord, classes) -> list[Instance]:
    """Map labeled objects onto heatmap instances using a class-name list."""
    index = {name: i for i, name in enumerate(classes)}
    out = []
    for i, o in enumerate(record.objects):
        if o.class_name not in index:
            raise ValueError(f"object {i}: unknown class {o.class_name!r} (have {list(classes)})")
        out.append(Instance(index[o.class_name], o.ellipse, peak=o.peak))
    return out


def detections_to_json(image_id: str, detections, classes) -> str:
    """Serialize decoder output; class ids become names via ``classes``."""
    dets = []
    for d in detections:
        e = d.ellipse
        dets.append(
            {
                "class": classes[d.class_id],
                "score": d.score,
                "ellipse": {"cx": e.cx, "cy": e.cy, "l1": e.l1, "l2": e.l2, "theta": e.theta},
            }
        )
    return json.dumps({"v": FORMAT_VERSION, "image_id": image_id, "detections": dets}, indent=2)


def parse_detections(text: str) -> tuple[str, list[dict]]:
    """Parse a detections document into (image_id, rows).

    Rows are dicts {"class": str, "score": float, "ellipse": Ellipse}.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ValueError(f"invalid JSON at byte {err.pos}: {err.msg}") from None
    if not isinstance(doc, dict) or doc.get("v") != FORMAT_VERSION:
        raise ValueError("unsupported detections document")
    image_id = _require(doc, "image_id", str, "document")
    rows = []
    for i, d in enumerate(_require(doc, "detections", list, "document")):
        where = f"detection {i}"
        cls = _require(d, "class", str, where)
        score = float(_require(d, "score", (int, float), where))
        ed = _require(d, "ellipse", dict, where)
        vals = {k: float(_require(ed, k, (int, float), f"{where}: ellipse")) for k in
                ("cx", "cy", "l1", "l2", "theta")}
        try:
            ellipse = Ellipse(**vals)
        except ValueError as err:
            raise ValueError(f"{where}: {err}") from None
        rows.append({"class": cls, "score": score, "ellipse": ellipse})
    return image_id, rows


# ---------------------------------------------------------------------------
# synthetic scenes


@dataclass(frozen=True)
class SynthConfig:
    """Scene recipe: object count, class set, axis ranges, spacing.

    Scenes are guaranteed to decode cleanly: besides keeping ellipses
    disjoint (margin-inflated occupancy), placement rejects any candidate
    whose rendered blob would leave its class channel with a number of
    local maxima >= ``peak_threshold`` different from the object count.
    A strongly elongated rotated blob can alias a second discrete maximum
    along its major-axis ridge on the ``heatmap_stride`` grid; such draws
    are resampled.
    """

    width: int = 512
    height: int = 512
    num_objects: int = 6
    classes: tuple[str, ...] = ("car", "bus", "truck")
    l1_range: tuple[float, float] = (30.0, 64.0)
    l2_range: tuple[float, float] = (18.0, 30.0)
    margin: float = 6.0
    max_attempts: int = 1000
    noise_lo: int = 96
    noise_hi: int = 160
    heatmap_stride: int = 4
    peak_threshold: float = 0.3

    def __post_init__(self):
        if self.num_objects < 0:
            raise ValueError("num_objects must be >= 0")
        if not self.classes:
            raise ValueError("need at least one class")
        if self.l2_range[0] > self.l1_range[0]:
            raise ValueError("l2 range must start at or below l1 range")


def _color_for(name: str, fallback_index: int):
    if name in CLASS_COLORS:
        return CLASS_COLORS[name]
    return _EXTRA_COLORS[fallback_index % len(_EXTRA_COLORS)]


def synth_scene(seed: int, config: SynthConfig = SynthConfig(), image_id: str | None = None):
    """Generate one scene: (H, W, 3) uint8 image + matching label record.

    Objects are placed by rejection sampling against an occupancy mask of
    previously placed (margin-inflated) ellipses, so ground truth shapes
    never overlap. Deterministic for a given (seed, config). Raises when
    placement fails ``max_attempts`` times in a row.
    """
    rng = np.random.default_rng(seed)
    w, h = config.width, config.height
    image = rng.integers(config.noise_lo, config.noise_hi, size=(h, w, 3), dtype=np.uint8)

    occupied = np.zeros((h, w), dtype=bool)
    xs = np.arange(w, dtype=float)[None, :] + 0.5
    ys = np.arange(h, dtype=float)[:, None] + 0.5
    stride = config.heatmap_stride
    grid = (-(-h // stride), -(-w // stride))
    channels = {i: np.zeros(grid) for i in range(len(config.classes))}
    counts = {i: 0 for i in range(len(config.classes))}
    objects = []
    for _ in range(config.num_objects):
        for attempt in range(config.max_attempts):
            l1 = rng.uniform(*config.l1_range)
            l2 = rng.uniform(config.l2_range[0], min(config.l2_range[1], l1))
            theta = rng.uniform(0.0, np.pi)
            # propose a center whose padded AABB fits inside the image
            half = 0.5 * l1 + config.margin
            if 2 * half >= min(w, h):
                continue
            cx = rng.uniform(half, w - half)
            cy = rng.uniform(half, h - half)
            e = Ellipse(cx, cy, l1, l2, theta)
            inflated = Ellipse(cx, cy, l1 + 2 * config.margin, l2 + 2 * config.margin, theta)
            member = region_contains(inflated, xs, ys)
            if (member & occupied).any():
                continue
            cls_idx = int(rng.integers(len(config.classes)))
            ix, iy, _, _ = center_cell(e, stride)
            sx, sy = gaussian_sigmas(e, stride)
            cand = np.maximum(channels[cls_idx], render_gaussian(grid, (cx / stride, cy / stride), sx, sy, theta))
            cand[iy, ix] = 1.0
            peaks = extract_peaks(cand[None], config.peak_threshold, counts[cls_idx] + 2)
            if len(peaks) != counts[cls_idx] + 1:
                continue  # the blob aliases a spurious off-center maximum
            occupied |= member
            channels[cls_idx] = cand
            counts[cls_idx] += 1
            objects.append(ObjectLabel(config.classes[cls_idx], e, box=ellipse_aabb(e)))
            break
        else:
            raise ValueError(
                f"placement failed after {config.max_attempts} attempts "
                f"({len(objects)}/{config.num_objects} placed)"
            )

    for i, o in enumerate(objects):
        color = np.array(_color_for(o.class_name, i), dtype=np.uint8)
        mask = region_contains(o.ellipse, xs, ys)
        image[mask] = color

    rid = image_id if image_id is not None else f"scene_{seed:04d}"
    record = LabelRecord(image_id=rid, width=w, height=h, objects=tuple(objects))
    return image, record


def write_dataset(root, count: int, base_seed: int = 0, config: SynthConfig = SynthConfig()):
    """Write ``count`` scenes under root/images and root/labels; returns ids."""
    from PIL import Image

    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    ids = []
    for i in range(count):
        image, record = synth_scene(base_seed + i, config, image_id=f"scene_{base_seed + i:04d}")
        Image.fromarray(image).save(root / "images" / f"{record.image_id}.png")
        save_labels(record, root / "labels" / f"{record.image_id}.json")
        ids.append(record.image_id)
    return ids
