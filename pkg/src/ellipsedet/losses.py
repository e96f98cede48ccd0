"""Training losses with analytic gradients, reference (numpy) implementation.

Every loss returns a :class:`LossResult` holding the scalar value and the
exact gradient with respect to each prediction tensor, so the whole stack
can be checked coordinate-by-coordinate against central finite differences
and driven directly by plain gradient descent (see ``fitdemo``).

Tensors follow the target layout of :mod:`ellipsedet.heatmap`:
heatmap (C, h, w), offset (2, h, w), size (3, h, w), seg (H, W).
Oriented boxes for the pixel-overlap loss are rows (cx, cy, w, h, theta).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import OrientedBox, obb_aabb

__all__ = [
    "LossConfig",
    "LossResult",
    "Predictions",
    "focal_loss",
    "l1_vector_loss",
    "offset_loss",
    "size_loss",
    "kernel_membership",
    "kernel_iou",
    "piou_loss",
    "seg_loss",
    "total_loss",
    "finite_diff_check",
]

_EPS_LOG = 1e-12  # probability clamp for logarithms
_MIN_SIDE = 1e-3  # floor for box sides built from raw size predictions


@dataclass(frozen=True)
class LossConfig:
    """Weights and variants for the combined objective.

    size_mode selects how shape regression is supervised: "regression"
    uses the per-cell L1 on (l1, l2, theta), "piou" swaps it for the
    pixel-overlap loss on boxes assembled at positive cells.
    """

    alpha: float = 2.0
    beta: float = 4.0
    lambda_offset: float = 1.0
    lambda_size: float = 0.1
    lambda_piou: float = 0.1
    size_mode: str = "regression"
    spotnet: bool = False
    stride: int = 4
    smooth_l1: bool = False
    smooth_delta: float = 1.0
    wrap_theta: bool = False
    piou_k: float = 10.0

    def __post_init__(self):
        if self.size_mode not in ("regression", "piou"):
            raise ValueError(f"size_mode must be 'regression' or 'piou', got {self.size_mode!r}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.piou_k <= 0.0:
            raise ValueError(f"piou_k must be positive, got {self.piou_k}")


@dataclass
class LossResult:
    value: float
    grads: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class Predictions:
    """Raw prediction tensors, already mapped to their natural ranges

    (heatmap and seg in (0, 1), offsets/sizes unconstrained).
    """

    heatmap: np.ndarray
    offset: np.ndarray
    size: np.ndarray
    seg: np.ndarray | None = None


def focal_loss(
    pred: np.ndarray,
    target: np.ndarray,
    pos_mask: np.ndarray,
    alpha: float = 2.0,
    beta: float = 4.0,
) -> LossResult:
    """Penalty-reduced focal loss over the class heatmaps.

    Positive cells are given explicitly by ``pos_mask`` (one per object
    center, per class channel) rather than inferred from target == 1, so
    reduced-peak targets from augmentation keep their positive status.
    Negatives are weighted down by (1 - target)^beta near blob centers.
    Normalized by the positive count; a scene with no positives is an error.
    """
    if pred.shape != target.shape or pred.shape != pos_mask.shape:
        raise ValueError("heatmap tensors must share a shape")
    p = np.clip(pred, _EPS_LOG, 1.0 - _EPS_LOG)
    pos = pos_mask.astype(bool)
    n = int(np.count_nonzero(pos))
    if n == 0:
        raise ValueError("no objects")

    grad = np.zeros_like(p)
    neg = ~pos
    pn, yn = p[neg], target[neg]
    neg_w = (1.0 - yn) ** beta
    neg_terms = neg_w * pn**alpha * np.log1p(-pn)
    grad[neg] = -(neg_w * (alpha * pn ** (alpha - 1.0) * np.log1p(-pn) - pn**alpha / (1.0 - pn)))

    pp = p[pos]
    pos_terms = (1.0 - pp) ** alpha * np.log(pp)
    grad[pos] = -(-alpha * (1.0 - pp) ** (alpha - 1.0) * np.log(pp) + (1.0 - pp) ** alpha / pp)

    value = -(float(pos_terms.sum()) + float(neg_terms.sum())) / n
    grad /= n
    return LossResult(value=value, grads={"heatmap": grad})


def _l1_and_grad(diff: np.ndarray, smooth: bool, delta: float):
    if not smooth:
        return np.abs(diff), np.sign(diff)
    a = np.abs(diff)
    quad = a < delta
    val = np.where(quad, 0.5 * diff**2 / delta, a - 0.5 * delta)
    grad = np.where(quad, diff / delta, np.sign(diff))
    return val, grad


def l1_vector_loss(
    pred: np.ndarray,
    target: np.ndarray,
    pos_mask: np.ndarray,
    smooth: bool = False,
    delta: float = 1.0,
    wrap_last: bool = False,
) -> LossResult:
    """Mean over positive cells of the summed per-component L1 distance.

    pred/target are (D, h, w); pos_mask is (h, w). With ``wrap_last`` the
    final component is treated as an angle modulo pi: the residual is
    min(|d|, pi - |d|) with the matching sign in the gradient.
    """
    if pred.shape != target.shape:
        raise ValueError("regression tensors must share a shape")
    if pos_mask.shape != pred.shape[1:]:
        raise ValueError("mask shape must match the map grid")
    pos = pos_mask.astype(bool)
    n = int(np.count_nonzero(pos))
    if n == 0:
        raise ValueError("no objects")
    grad = np.zeros_like(pred, dtype=float)

    diff = pred[:, pos] - target[:, pos]  # (D, n)
    val, g = _l1_and_grad(diff, smooth, delta)
    if wrap_last:
        d = diff[-1]
        a = np.abs(d)
        wrapped = a > math.pi - a  # the complementary arc is shorter
        val_last, g_last = _l1_and_grad(d, smooth, delta)
        val_last = np.where(wrapped, math.pi - a, val_last)
        g_last = np.where(wrapped, -np.sign(d), g_last)
        val[-1], g[-1] = val_last, g_last
    grad[:, pos] = g / n
    return LossResult(value=float(val.sum()) / n, grads={"map": grad})


def offset_loss(pred, target, pos_mask, smooth: bool = False, delta: float = 1.0) -> LossResult:
    """L1 on the 2-vector sub-cell offsets at positive cells."""
    r = l1_vector_loss(pred, target, pos_mask, smooth=smooth, delta=delta)
    return LossResult(value=r.value, grads={"offset": r.grads["map"]})


def size_loss(
    pred,
    target,
    pos_mask,
    smooth: bool = False,
    delta: float = 1.0,
    wrap_theta: bool = False,
) -> LossResult:
    """L1 on the 3-vector (l1, l2, theta) at positive cells.

    The default treats theta as a plain scalar; ``wrap_theta`` scores the
    angular residual modulo pi instead.
    """
    r = l1_vector_loss(pred, target, pos_mask, smooth=smooth, delta=delta, wrap_last=wrap_theta)
    return LossResult(value=r.value, grads={"size": r.grads["map"]})


# ---------------------------------------------------------------------------
# pixel-overlap (kernelized IOU) loss


def _grid_for(boxes, k: float):
    """Fixed integer-anchored pixel-center lattice covering all boxes.

    The margin keeps truncated kernel tails below ~e^(-k*2), and anchoring
    to whole integers keeps the lattice stable under small parameter
    perturbations (finite differences never see cells pop in and out with
    non-negligible weight).
    """
    margin = 2.0 + 8.0 / k
    bbs = [obb_aabb(b) for b in boxes]
    x0 = math.floor(min(bb.x for bb in bbs) - margin)
    x1 = math.ceil(max(bb.x2 for bb in bbs) + margin)
    y0 = math.floor(min(bb.y for bb in bbs) - margin)
    y1 = math.ceil(max(bb.y2 for bb in bbs) + margin)
    xs = np.arange(x0, x1, dtype=float) + 0.5
    ys = np.arange(y0, y1, dtype=float) + 0.5
    return xs[None, :], ys[:, None]


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def kernel_membership(box, xs, ys, k: float):
    """Soft membership F(p | box) on the grid, plus terms for its gradient.

    F = K_w * K_h with K(d, s) = sigmoid(k (s - d)) evaluated at the
    distances d along the box axes. Returns (F, parts) where parts carries
    the intermediates needed for the chain rule.
    """
    cx, cy, w, h, theta = box
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    dx = xs - cx
    dy = ys - cy
    u = dx * cos_t + dy * sin_t
    v = -dx * sin_t + dy * cos_t
    kw = _sigmoid(k * (0.5 * w - np.abs(u)))
    kh = _sigmoid(k * (0.5 * h - np.abs(v)))
    return kw * kh, (u, v, kw, kh, cos_t, sin_t)


def kernel_iou(a: OrientedBox, b: OrientedBox, k: float = 10.0) -> float:
    """Kernelized IOU of two oriented boxes (soft pixel counting).

    Intersection mass is the summed product of soft memberships; the union
    uses the exact box areas. The sigmoid kernel blurs each edge by ~1/k,
    so even identical boxes score slightly below 1.
    """
    ba = (a.cx, a.cy, a.w, a.h, a.theta)
    bb = (b.cx, b.cy, b.w, b.h, b.theta)
    xs, ys = _grid_for([a, b], k)
    fa, _ = kernel_membership(ba, xs, ys, k)
    fb, _ = kernel_membership(bb, xs, ys, k)
    rho = float(np.sum(fa * fb))
    union = a.w * a.h + b.w * b.h - rho
    return rho / union


def piou_loss(
    pred_boxes: np.ndarray, target_boxes: np.ndarray, k: float = 10.0, eps: float = 1e-6
) -> LossResult:
    """Mean negative log kernel-IOU over box pairs, with exact gradients.

    pred_boxes / target_boxes are (N, 5) rows (cx, cy, w, h, theta); the
    gradient is with respect to the predicted rows. The intersection mass
    is clamped at ``eps`` so an empty overlap yields a large finite loss
    whose gradient flows only through the union area.
    """
    pred_boxes = np.asarray(pred_boxes, dtype=float)
    target_boxes = np.asarray(target_boxes, dtype=float)
    if pred_boxes.shape != target_boxes.shape or pred_boxes.ndim != 2 or pred_boxes.shape[1] != 5:
        raise ValueError("box arrays must both be (N, 5)")
    n = pred_boxes.shape[0]
    if n == 0:
        raise ValueError("no boxes")
    grad = np.zeros_like(pred_boxes)

    total = 0.0
    for i in range(n):
        cxp, cyp, wp, hp, thp = pred_boxes[i]
        cxt, cyt, wt, ht, tht = target_boxes[i]
        if min(wp, hp, wt, ht) <= 0.0:
            raise ValueError(f"box sides must be positive (pair {i})")
        pb = OrientedBox(cxp, cyp, wp, hp, thp)
        tb = OrientedBox(cxt, cyt, wt, ht, tht)
        xs, ys = _grid_for([pb, tb], k)
        fp, (u, v, kw, kh, cos_t, sin_t) = kernel_membership(
            (cxp, cyp, wp, hp, thp), xs, ys, k
        )
        ft, _ = kernel_membership((cxt, cyt, wt, ht, tht), xs, ys, k)

        rho_raw = float(np.sum(fp * ft))
        clamped = rho_raw < eps
        rho = max(rho_raw, eps)
        union = wp * hp + wt * ht - rho
        total += -math.log(rho / union)

        # dK/ds = k K (1-K), dK/dd = -k K (1-K); d_w=|u|, d_h=|v|
        dkw = k * kw * (1.0 - kw)
        dkh = k * kh * (1.0 - kh)
        su, sv = np.sign(u), np.sign(v)
        wsum = ft * kh * dkw  # dF/d(d_w) factor times target weight (sign applied below)
        hsum = ft * kw * dkh
        # rho derivatives via d_w, d_h chain
        drho_cx = float(np.sum(wsum * -su * -cos_t) + np.sum(hsum * -sv * sin_t))
        drho_cy = float(np.sum(wsum * -su * -sin_t) + np.sum(hsum * -sv * -cos_t))
        drho_th = float(np.sum(wsum * -su * v) + np.sum(hsum * -sv * -u))
        drho_w = float(np.sum(wsum) * 0.5)
        drho_h = float(np.sum(hsum) * 0.5)
        if clamped:
            drho_cx = drho_cy = drho_th = drho_w = drho_h = 0.0

        dl_drho = -(1.0 / rho + 1.0 / union)
        grad[i, 0] = dl_drho * drho_cx
        grad[i, 1] = dl_drho * drho_cy
        grad[i, 2] = dl_drho * drho_w + hp / union
        grad[i, 3] = dl_drho * drho_h + wp / union
        grad[i, 4] = dl_drho * drho_th

    grad /= n
    return LossResult(value=total / n, grads={"boxes": grad})


def seg_loss(pred: np.ndarray, target: np.ndarray) -> LossResult:
    """Binary cross-entropy over the full-resolution presence mask."""
    if pred.shape != target.shape:
        raise ValueError("segmentation tensors must share a shape")
    p = np.clip(pred, _EPS_LOG, 1.0 - _EPS_LOG)
    m = p.size
    value = -float(np.sum(target * np.log(p) + (1.0 - target) * np.log1p(-p))) / m
    grad = -(target / p - (1.0 - target) / (1.0 - p)) / m
    return LossResult(value=value, grads={"seg": grad})


def _boxes_from_maps(offset, size, pos_mask, stride):
    """Assemble (N, 5) oriented boxes from map slots at positive cells.

    Returns the boxes, the cell indices, and a bool array flagging which
    size slots were clamped up to the minimum side (their gradient is 0).
    Cells are taken in row-major order.
    """
    ys, xs = np.nonzero(pos_mask)
    n = len(xs)
    boxes = np.zeros((n, 5))
    clamped = np.zeros((n, 2), dtype=bool)
    for j, (iy, ix) in enumerate(zip(ys, xs)):
        w_raw, h_raw, th = size[0, iy, ix], size[1, iy, ix], size[2, iy, ix]
        clamped[j] = (w_raw < _MIN_SIDE, h_raw < _MIN_SIDE)
        boxes[j] = (
            (ix + offset[0, iy, ix]) * stride,
            (iy + offset[1, iy, ix]) * stride,
            max(w_raw, _MIN_SIDE),
            max(h_raw, _MIN_SIDE),
            th,
        )
    return boxes, ys, xs, clamped


def total_loss(preds: Predictions, targets, config: LossConfig = LossConfig()) -> LossResult:
    """Combined objective: focal + weighted offset + shape term (+ seg).

    The shape term is the size/orientation L1 or, in piou mode, the
    pixel-overlap loss on boxes assembled from the offset/size maps at
    positive cells (gradients are chained back into those maps). The
    segmentation term joins at fixed weight 1 when ``spotnet`` is set.
    """
    pos_any = targets.mask.any(axis=0)
    out_grads: dict[str, np.ndarray] = {}

    f = focal_loss(preds.heatmap, targets.heatmap, targets.mask, config.alpha, config.beta)
    value = f.value
    out_grads["heatmap"] = f.grads["heatmap"]

    o = offset_loss(
        preds.offset, targets.offset, pos_any, smooth=config.smooth_l1, delta=config.smooth_delta
    )
    value += config.lambda_offset * o.value
    out_grads["offset"] = config.lambda_offset * o.grads["offset"]

    if config.size_mode == "regression":
        s = size_loss(
            preds.size,
            targets.size,
            pos_any,
            smooth=config.smooth_l1,
            delta=config.smooth_delta,
            wrap_theta=config.wrap_theta,
        )
        value += config.lambda_size * s.value
        out_grads["size"] = config.lambda_size * s.grads["size"]
    else:
        pred_boxes, ys, xs, clamped = _boxes_from_maps(
            preds.offset, preds.size, pos_any, config.stride
        )
        tgt_boxes, _, _, _ = _boxes_from_maps(
            targets.offset, targets.size, pos_any, config.stride
        )
        p = piou_loss(pred_boxes, tgt_boxes, k=config.piou_k)
        value += config.lambda_piou * p.value
        size_grad = np.zeros_like(preds.size)
        g = config.lambda_piou * p.grads["boxes"]
        for j, (iy, ix) in enumerate(zip(ys, xs)):
            # centers are (cell + offset) * stride: d center / d offset = stride
            out_grads["offset"][0, iy, ix] += g[j, 0] * config.stride
            out_grads["offset"][1, iy, ix] += g[j, 1] * config.stride
            if not clamped[j, 0]:
                size_grad[0, iy, ix] = g[j, 2]
            if not clamped[j, 1]:
                size_grad[1, iy, ix] = g[j, 3]
            size_grad[2, iy, ix] = g[j, 4]
        out_grads["size"] = size_grad

    if config.spotnet:
        if preds.seg is None:
            raise ValueError("spotnet mode needs a segmentation prediction")
        sg = seg_loss(preds.seg, targets.seg)
        value += sg.value
        out_grads["seg"] = sg.grads["seg"]

    return LossResult(value=value, grads=out_grads)


def finite_diff_check(
    f,
    params: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    h: float = 1e-5,
    floor: float = 1e-3,
    tiny: float = 1e-9,
) -> float:
    """Max relative error between analytic gradients and central differences.

    ``f`` maps the parameter dict to a scalar. Every coordinate of every
    array in ``analytic`` is checked; coordinates where both estimates are
    below ``tiny`` are skipped, and the relative error denominator is
    floored to keep near-zero gradients from amplifying roundoff.
    """
    worst = 0.0
    for name, grad in analytic.items():
        base = params[name]
        it = np.nditer(base, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = base[idx]
            base[idx] = orig + h
            up = f(params)
            base[idx] = orig - h
            down = f(params)
            base[idx] = orig
            fd = (up - down) / (2.0 * h)
            g = float(grad[idx])
            if max(abs(fd), abs(g)) < tiny:
                continue
            rel = abs(fd - g) / max(abs(fd), abs(g), floor)
            worst = max(worst, rel)
    return worst
