"""Randomized instance generators for verifying analytic loss gradients.

Each case builds a scalar loss closure over a dict of parameter arrays,
sampled so that every coordinate sits safely away from kinks and clamps
(L1 residuals bounded away from 0, probabilities away from {0, 1}, box
sides well above the floor). ``run_case`` sweeps n independent instances
through central finite differences and returns the worst relative error.
"""
from __future__ import annotations

import numpy as np

from ellipsedet.geometry import Ellipse
from ellipsedet.heatmap import EncoderConfig, Instance, encode_targets
from ellipsedet.losses import (
    LossConfig,
    Predictions,
    finite_diff_check,
    focal_loss,
    l1_vector_loss,
    piou_loss,
    seg_loss,
    total_loss,
)


def _signed_away_from_zero(rng, shape, lo, hi):
    """Values with |v| in [lo, hi] and random sign: L1-kink-free residuals."""
    mag = rng.uniform(lo, hi, size=shape)
    return mag * rng.choice([-1.0, 1.0], size=shape)


def focal_case(rng):
    shape = (3, 6, 6)
    target = rng.uniform(0.0, 0.97, size=shape)
    mask = rng.random(shape) < 0.08
    target[mask] = 1.0
    pred = rng.uniform(0.05, 0.95, size=shape)
    params = {"heatmap": pred}
    f = lambda p: focal_loss(p["heatmap"], target, mask).value
    analytic = focal_loss(pred, target, mask).grads
    return f, params, analytic


def _l1_case(rng, dims, smooth, wrap_last):
    shape = (dims, 6, 6)
    mask = np.zeros(shape[1:], dtype=bool)
    idx = rng.choice(36, size=4, replace=False)
    mask[np.unravel_index(idx, shape[1:])] = True
    target = rng.uniform(0.0, 1.0, size=shape)
    # residuals in (0.05, 0.8), or onto the linear branch when smooth
    diff = _signed_away_from_zero(rng, shape, 0.05, 0.8)
    if smooth:
        linear = rng.random(shape) < 0.5
        diff = np.where(linear, np.sign(diff) * rng.uniform(1.3, 2.0, size=shape), diff)
    if wrap_last:
        # keep the angle residual away from the wrap kink at pi/2
        diff[-1] = np.clip(diff[-1], -1.2, 1.2)
        diff[-1][np.abs(np.abs(diff[-1]) - np.pi / 2) < 0.15] = 0.5
    pred = target + diff
    params = {"map": pred}
    f = lambda p: l1_vector_loss(p["map"], target, mask, smooth=smooth, wrap_last=wrap_last).value
    analytic = l1_vector_loss(pred, target, mask, smooth=smooth, wrap_last=wrap_last).grads
    return f, params, analytic


def offset_case(rng):
    return _l1_case(rng, dims=2, smooth=False, wrap_last=False)


def offset_smooth_case(rng):
    return _l1_case(rng, dims=2, smooth=True, wrap_last=False)


def size_case(rng):
    return _l1_case(rng, dims=3, smooth=False, wrap_last=False)


def size_wrapped_case(rng):
    return _l1_case(rng, dims=3, smooth=False, wrap_last=True)


def _random_box_pair(rng):
    t = np.array(
        [
            rng.uniform(0.0, 40.0),
            rng.uniform(0.0, 40.0),
            rng.uniform(10.0, 40.0),
            rng.uniform(10.0, 40.0),
            rng.uniform(0.0, np.pi),
        ]
    )
    p = t.copy()
    p[0] += rng.uniform(-8.0, 8.0)
    p[1] += rng.uniform(-8.0, 8.0)
    p[2] *= rng.uniform(0.7, 1.4)
    p[3] *= rng.uniform(0.7, 1.4)
    p[4] += rng.uniform(-0.5, 0.5)
    return p, t


def piou_case(rng):
    pairs = [_random_box_pair(rng) for _ in range(2)]
    pred = np.stack([p for p, _ in pairs])
    target = np.stack([t for _, t in pairs])
    params = {"boxes": pred}
    f = lambda q: piou_loss(q["boxes"], target).value
    analytic = piou_loss(pred, target).grads
    return f, params, analytic


def seg_case(rng):
    shape = (8, 8)
    target = (rng.random(shape) < 0.5).astype(float)
    pred = rng.uniform(0.05, 0.95, size=shape)
    params = {"seg": pred}
    f = lambda p: seg_loss(p["seg"], target).value
    analytic = seg_loss(pred, target).grads
    return f, params, analytic


def _small_scene(rng, num_classes=2):
    insts = [
        Instance(int(rng.integers(num_classes)), Ellipse(5.0 + rng.uniform(0, 2), 5.0, 8.0, 5.0, rng.uniform(0, np.pi))),
        Instance(int(rng.integers(num_classes)), Ellipse(11.0, 10.0 + rng.uniform(0, 2), 9.0, 6.0, rng.uniform(0, np.pi))),
    ]
    return encode_targets(insts, (16, 16), EncoderConfig(stride=4, num_classes=num_classes))


def _perturbed_preds(rng, targets, with_seg):
    hm = np.clip(targets.heatmap + rng.uniform(-0.3, 0.3, targets.heatmap.shape), 0.05, 0.95)
    off = targets.offset + _signed_away_from_zero(rng, targets.offset.shape, 0.05, 0.45)
    size = targets.size + _signed_away_from_zero(rng, targets.size.shape, 0.1, 2.0)
    size[:2] = np.maximum(size[:2], 4.0)  # keep box sides comfortably positive
    seg = rng.uniform(0.05, 0.95, targets.seg.shape) if with_seg else None
    return hm, off, size, seg


def total_regression_case(rng):
    targets = _small_scene(rng)
    hm, off, size, _ = _perturbed_preds(rng, targets, with_seg=False)
    cfg = LossConfig(size_mode="regression", spotnet=False)
    params = {"heatmap": hm, "offset": off, "size": size}

    def f(p):
        preds = Predictions(heatmap=p["heatmap"], offset=p["offset"], size=p["size"])
        return total_loss(preds, targets, cfg).value

    analytic = total_loss(Predictions(heatmap=hm, offset=off, size=size), targets, cfg).grads
    return f, params, analytic


def total_spotnet_seg_case(rng):
    targets = _small_scene(rng)
    hm, off, size, seg = _perturbed_preds(rng, targets, with_seg=True)
    cfg = LossConfig(size_mode="regression", spotnet=True)
    params = {"seg": seg}

    def f(p):
        preds = Predictions(heatmap=hm, offset=off, size=size, seg=p["seg"])
        return total_loss(preds, targets, cfg).value

    full = total_loss(Predictions(heatmap=hm, offset=off, size=size, seg=seg), targets, cfg)
    analytic = {"seg": full.grads["seg"]}
    return f, params, analytic


def total_piou_case(rng):
    targets = _small_scene(rng)
    hm, off, size, _ = _perturbed_preds(rng, targets, with_seg=False)
    cfg = LossConfig(size_mode="piou", spotnet=False)
    params = {"offset": off, "size": size}

    def f(p):
        preds = Predictions(heatmap=hm, offset=p["offset"], size=p["size"])
        return total_loss(preds, targets, cfg).value

    full = total_loss(Predictions(heatmap=hm, offset=off, size=size), targets, cfg)
    analytic = {"offset": full.grads["offset"], "size": full.grads["size"]}
    return f, params, analytic


# case name -> (builder, fd step, tolerance); the overlap-based cases get a
# looser bound and the bare piou case a smaller step — its sigmoid edges
# carry enough curvature that h^2 truncation dominates at 1e-5
CASES = {
    "focal": (focal_case, 1e-5, 1e-6),
    "offset": (offset_case, 1e-5, 1e-6),
    "offset_smooth": (offset_smooth_case, 1e-5, 1e-6),
    "size": (size_case, 1e-5, 1e-6),
    "size_wrapped": (size_wrapped_case, 1e-5, 1e-6),
    "seg": (seg_case, 1e-5, 1e-6),
    "total_regression": (total_regression_case, 1e-5, 1e-6),
    "total_spotnet_seg": (total_spotnet_seg_case, 1e-5, 1e-6),
    "piou": (piou_case, 1e-6, 1e-5),
    "total_piou": (total_piou_case, 1e-5, 1e-5),
}


def run_case(name: str, n_instances: int, seed: int = 0) -> float:
    builder, h, _tol = CASES[name]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        f, params, analytic = builder(rng)
        worst = max(worst, finite_diff_check(f, params, analytic, h=h))
    return worst
