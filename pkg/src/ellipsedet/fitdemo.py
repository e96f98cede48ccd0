"""Label recovery by direct optimization of the prediction tensors.

With no network in the loop, the full objective can still be exercised
end to end: start from random prediction maps, run plain gradient
descent on them against encoded ground-truth targets, and check that
decoding the optimized maps reproduces the labels. Heatmap and
segmentation channels are parameterized through a sigmoid so their
values stay inside (0, 1); offset and size maps are optimized raw.

Step sizes are per-tensor because the loss terms see very different
scales (sub-cell offsets vs. pixel axis lengths vs. per-cell scores);
the defaults are calibrated for the bundled three-object demo scene.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import LabelRecord, SynthConfig, instances_from_record, synth_scene
from .decode import DecodeConfig, Detection, decode
from .evaluate import EvalConfig, det_rows, detection_prf, gt_rows
from .heatmap import EncoderConfig, Targets, encode_targets
from .losses import LossConfig, Predictions, _sigmoid, total_loss

__all__ = ["FitConfig", "FitResult", "demo_scene", "fit_predictions_demo", "fit_f1"]

_LOGIT_INIT = -1.75  # starting score ~0.15: mostly "off", like a fresh model


@dataclass(frozen=True)
class FitConfig:
    iters: int = 2000
    step: float = 1.0
    step_heatmap: float = 8.0
    step_offset: float = 3.0
    step_size: float | None = None  # default depends on loss.size_mode
    step_theta: float | None = None  # radians move on a ~30x smaller scale
    step_seg: float = 50_000.0
    init_scale: float = 0.05
    size_init: tuple[float, float, float] = (24.0, 16.0, 0.8)
    seed: int = 0
    loss: LossConfig = field(default_factory=lambda: LossConfig(smooth_l1=True))
    decode: DecodeConfig = field(default_factory=DecodeConfig)

    def __post_init__(self):
        if self.iters < 1:
            raise ValueError(f"iters must be >= 1, got {self.iters}")
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")

    @property
    def resolved_step_size(self) -> np.ndarray:
        """Per-channel (w, h, theta) step multipliers for the size map."""
        # piou gradients on the size slots are ~1/union smaller than the
        # L1 subgradients the regression mode sees; theta gets a smaller
        # step than the pixel-scale channels or it orbits the optimum
        piou = self.loss.size_mode == "piou"
        wh = self.step_size if self.step_size is not None else (300.0 if piou else 30.0)
        th = self.step_theta if self.step_theta is not None else (15.0 if piou else 30.0)
        return np.array([wh, wh, th])[:, None, None]


@dataclass
class FitResult:
    trace: np.ndarray  # loss per iteration; [0] initial, [-1] final
    detections: list[Detection]

    @property
    def initial_loss(self) -> float:
        return float(self.trace[0])

    @property
    def final_loss(self) -> float:
        return float(self.trace[-1])


def demo_scene(
    seed: int = 0,
    num_objects: int = 3,
    image_size: tuple[int, int] = (160, 160),
    stride: int = 4,
    mode: str = "ellipse",
) -> tuple[Targets, LabelRecord]:
    """A small synthetic scene encoded into training targets.

    Returns the targets together with the ground-truth record so callers
    can score the decoded result against it.
    """
    width, height = image_size
    synth = SynthConfig(
        width=width,
        height=height,
        num_objects=num_objects,
        l1_range=(30.0, 44.0),
        l2_range=(18.0, 26.0),
        margin=8.0,
    )
    _, record = synth_scene(seed, synth)
    instances = instances_from_record(record, synth.classes)
    config = EncoderConfig(stride=stride, num_classes=len(synth.classes), mode=mode)
    return encode_targets(instances, image_size, config), record


def fit_predictions_demo(targets: Targets, config: FitConfig = FitConfig()) -> FitResult:
    """Gradient-descend random prediction maps onto the given targets.

    Records the loss at every iteration (plus the final value) and
    decodes the optimized maps. Raises when the loss leaves the finite
    range, naming the iteration.
    """
    rng = np.random.default_rng(config.seed)
    c, h, w = targets.heatmap.shape
    z_hm = rng.normal(_LOGIT_INIT, config.init_scale, (c, h, w))
    offset = rng.normal(0.5, config.init_scale, (2, h, w))
    size = np.asarray(config.size_init, dtype=float)[:, None, None] + rng.normal(
        0.0, 1.0, (3, h, w)
    ) * np.array([2.0, 2.0, 0.2])[:, None, None]
    spotnet = config.loss.spotnet
    z_seg = rng.normal(_LOGIT_INIT, config.init_scale, targets.seg.shape) if spotnet else None

    step_size = config.resolved_step_size
    trace = np.empty(config.iters + 1)
    for i in range(config.iters + 1):
        hm = _sigmoid(z_hm)
        seg = _sigmoid(z_seg) if spotnet else None
        r = total_loss(Predictions(hm, offset, size, seg), targets, config.loss)
        if not np.isfinite(r.value):
            raise ValueError(f"diverged at iteration {i}: loss is {r.value}")
        trace[i] = r.value
        if i == config.iters:
            break
        # sigmoid-squashed tensors chain through p(1 - p)
        z_hm -= config.step * config.step_heatmap * r.grads["heatmap"] * hm * (1.0 - hm)
        offset -= config.step * config.step_offset * r.grads["offset"]
        size -= config.step * step_size * r.grads["size"]
        if spotnet:
            z_seg -= config.step * config.step_seg * r.grads["seg"] * seg * (1.0 - seg)

    dets = decode(_sigmoid(z_hm), offset, size, config.decode)
    return FitResult(trace=trace, detections=dets)


def fit_f1(
    detections: list[Detection],
    record: LabelRecord,
    classes,
    eval_config: EvalConfig = EvalConfig(resolution=128),
) -> float:
    """F1 of decoded detections against the scene's ground truth."""
    dets = {record.image_id: det_rows(detections, list(classes))}
    gts = {record.image_id: gt_rows(record)}
    _, _, f1 = detection_prf(dets, gts, list(classes), eval_config)
    return f1
