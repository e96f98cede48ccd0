import math

import numpy as np
import pytest

from ellipsedet.dataset import SynthConfig, instances_from_record, synth_scene
from ellipsedet.decode import DecodeConfig, decode
from ellipsedet.evaluate import (
    DetRow,
    EvalConfig,
    GtRow,
    average_precision,
    det_rows,
    detection_prf,
    evaluate,
    gt_rows,
    match_image,
    pair_iou,
)
from ellipsedet.geometry import Ellipse
from ellipsedet.heatmap import EncoderConfig, encode_targets
from test_geometry import FALSE_INTERSECTION_PAIR

CLASSES = ("car", "bus", "truck")


class TestAveragePrecision:
    def test_hand_case_exact(self):
        # flags [TP, FP, TP] against 3 ground truths:
        # precision 1, 1/2, 2/3; recall 1/3, 1/3, 2/3
        # AP = 1/3 * 1 + 1/3 * 2/3 = 5/9
        ap, precision, recall = average_precision([True, False, True], 3)
        assert ap == 5.0 / 9.0
        assert precision == pytest.approx([1.0, 0.5, 2.0 / 3.0])
        assert recall == pytest.approx([1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0])

    def test_perfect(self):
        ap, _, _ = average_precision([True, True], 2)
        assert ap == 1.0

    def test_all_false(self):
        ap, _, _ = average_precision([False, False], 2)
        assert ap == 0.0

    def test_no_detections(self):
        ap, p, r = average_precision([], 4)
        assert ap == 0.0 and p.size == 0

    def test_missed_gt_caps_ap(self):
        # one of two gts found with a clean detection: AP = recall reached
        ap, _, _ = average_precision([True], 2)
        assert ap == 0.5

    def test_envelope_uses_later_precision(self):
        # [FP, TP]: precision at the TP is 1/2 and recall 1; envelope fills
        # the whole recall range with 1/2
        ap, _, _ = average_precision([False, True], 1)
        assert ap == 0.5


def gt(cx, cy, cls="car", l1=40.0, l2=20.0, theta=0.3):
    return GtRow(cls, Ellipse(cx, cy, l1, l2, theta))


def det(cx, cy, score, cls="car", l1=40.0, l2=20.0, theta=0.3):
    return DetRow(cls, score, Ellipse(cx, cy, l1, l2, theta))


FAST = EvalConfig(resolution=128)


class TestMatching:
    def test_exact_match(self):
        assert match_image([det(50, 50, 0.9)], [gt(50, 50)], FAST) == [True]

    def test_each_gt_claimed_once(self):
        dets = [det(50, 50, 0.9), det(51, 50, 0.8)]
        assert match_image(dets, [gt(50, 50)], FAST) == [True, False]

    def test_high_score_claims_first(self):
        # the lower-scored detection is left with the farther gt
        dets = [det(50, 50, 0.9), det(58, 50, 0.8)]
        gts = [gt(50, 50), gt(58, 50)]
        assert match_image(dets, gts, FAST) == [True, True]

    def test_below_threshold_is_fp(self):
        assert match_image([det(120, 50, 0.9)], [gt(50, 50)], FAST) == [False]

    def test_no_gts_all_fp(self):
        assert match_image([det(50, 50, 0.9)], [], FAST) == [False]


class TestPairIou:
    def test_kinds_diverge_on_slanted_neighbors(self):
        a, b = FALSE_INTERSECTION_PAIR
        assert pair_iou(a, b, "ellipse", 512) == 0.0
        assert pair_iou(a, b, "obb", 512) < 0.05
        assert pair_iou(a, b, "box") > 0.05

    def test_identity(self):
        e = Ellipse(10, 10, 30, 12, 1.0)
        assert pair_iou(e, e, "ellipse", 128) == 1.0
        assert pair_iou(e, e, "box") == 1.0


class TestEvaluate:
    def test_self_eval_is_perfect(self):
        gts = {
            "a": [gt(50, 50), gt(150, 50, cls="bus")],
            "b": [gt(80, 80, cls="truck")],
        }
        dets = {k: [DetRow(g.class_name, 1.0, g.ellipse) for g in v] for k, v in gts.items()}
        r = evaluate(dets, gts, CLASSES, FAST)
        assert r.mean_ap == 1.0
        assert not r.skipped_classes

    def test_zero_gt_class_excluded_and_reported(self):
        gts = {"a": [gt(50, 50)]}
        dets = {"a": [det(50, 50, 0.9), det(150, 50, 0.8, cls="bus")]}
        r = evaluate(dets, gts, CLASSES, FAST)
        assert r.mean_ap == 1.0  # only "car" counts; bus FP is reported but unscored
        assert set(r.skipped_classes) == {"bus", "truck"}
        assert "bus" not in r.per_class

    def test_no_gt_anywhere_is_an_error(self):
        with pytest.raises(ValueError, match="no class has ground truth"):
            evaluate({"a": [det(50, 50, 0.9)]}, {"a": []}, CLASSES, FAST)

    def test_ap_undefined_without_gt(self):
        with pytest.raises(ValueError, match="undefined AP"):
            average_precision([True, False], 0)

    def test_false_positive_halves_map(self):
        gts = {"a": [gt(50, 50)]}
        # higher-scored FP in front: precision at the TP is 1/2
        dets = {"a": [det(200, 200, 0.95), det(50, 50, 0.9)]}
        r = evaluate(dets, gts, CLASSES, FAST)
        assert r.per_class["car"].ap == 0.5
        assert r.per_class["car"].tp == 1 and r.per_class["car"].fp == 1

    def test_cross_image_ranking(self):
        # a confident miss in one image drags down precision in another
        gts = {"a": [gt(50, 50)], "b": [gt(60, 60)]}
        dets = {"a": [det(50, 50, 0.8)], "b": [det(200, 200, 0.9)]}
        r = evaluate(dets, gts, CLASSES, FAST)
        # flags by score: [FP(0.9), TP(0.8)] over 2 gts -> AP = 0.5 * 0.5
        assert r.per_class["car"].ap == pytest.approx(0.25)

    def test_unknown_image_id_rejected(self):
        with pytest.raises(ValueError, match="unknown image ids"):
            evaluate({"zzz": []}, {"a": []}, CLASSES, FAST)

    def test_phantom_overlap_demo(self):
        # axis-aligned box overlap claims a match between disjoint ellipses
        a, b = FALSE_INTERSECTION_PAIR
        shift = 60.0  # keep coordinates positive for realism
        gts = {"img": [GtRow("car", Ellipse(a.cx + shift, a.cy + shift, a.l1, a.l2, a.theta))]}
        dets = {"img": [DetRow("car", 0.9, Ellipse(b.cx + shift, b.cy + shift, b.l1, b.l2, b.theta))]}
        loose = 0.2  # below the boxes' overlap, above nothing else
        box_eval = evaluate(dets, gts, ("car",), EvalConfig(iou_threshold=loose, iou_kind="box"))
        ell_eval = evaluate(dets, gts, ("car",), EvalConfig(iou_threshold=loose, iou_kind="ellipse"))
        assert box_eval.mean_ap == 1.0  # boxes hallucinate the match
        assert ell_eval.mean_ap == 0.0  # ellipses know better


class TestPrf:
    def test_pipeline_round_trip(self):
        cfg = SynthConfig(width=256, height=256, num_objects=3)
        _, rec = synth_scene(5, cfg)
        t = encode_targets(instances_from_record(rec, CLASSES), (256, 256), EncoderConfig())
        dets = decode(t.heatmap, t.offset, t.size, DecodeConfig())
        p, r, f1 = detection_prf(
            {rec.image_id: det_rows(dets, CLASSES)},
            {rec.image_id: gt_rows(rec)},
            CLASSES,
            FAST,
        )
        assert (p, r, f1) == (1.0, 1.0, 1.0)

    def test_counts(self):
        gts = {"a": [gt(50, 50), gt(150, 150)]}
        dets = {"a": [det(50, 50, 0.9), det(400, 400, 0.8)]}
        p, r, f1 = detection_prf(dets, gts, CLASSES, FAST)
        assert p == 0.5 and r == 0.5 and f1 == 0.5

    def test_empty(self):
        assert detection_prf({}, {"a": []}, CLASSES, FAST) == (0.0, 0.0, 0.0)
