import math

import numpy as np
import pytest

from ellipsedet.augment import (
    PEAK_FLOOR,
    AugmentConfig,
    Sample,
    cutmix,
    mosaic,
    mosaic_quadrants,
    mosaic_split,
    smooth_labels,
    smooth_sample,
    visibility_fraction,
)
from ellipsedet.dataset import LabelRecord, ObjectLabel, SynthConfig, synth_scene
from ellipsedet.geometry import AxisBox, Ellipse, ellipse_aabb, region_contains
from ellipsedet.heatmap import EncoderConfig, encode_targets
from ellipsedet.dataset import instances_from_record

CLASSES = ("car", "bus", "truck")


def synth_sample(seed, **kw):
    img, rec = synth_scene(seed, SynthConfig(**kw))
    return Sample(img, rec)


def transported_mask_iou(e_src, a, t, e_out, size):
    """IoU between the rasterized output ellipse and the source ellipse
    membership pulled through the inverse affine (label-vs-pixel oracle)."""
    w, h = size
    xs = np.arange(w, dtype=float)[None, :] + 0.5
    ys = np.arange(h, dtype=float)[:, None] + 0.5
    out_mask = region_contains(e_out, xs, ys)
    inv = np.linalg.inv(np.asarray(a, dtype=float))
    px, py = xs - t[0], ys - t[1]
    src_mask = region_contains(e_src, inv[0, 0] * px + inv[0, 1] * py,
                               inv[1, 0] * px + inv[1, 1] * py)
    union = np.count_nonzero(out_mask | src_mask)
    assert union > 0
    return np.count_nonzero(out_mask & src_mask) / union


class TestVisibilityFraction:
    def test_superset_region(self):
        e = Ellipse(50, 50, 30, 14, 0.8)
        assert visibility_fraction(e, ellipse_aabb(e)) == 1.0
        assert visibility_fraction(e, AxisBox(0, 0, 100, 100)) == 1.0

    def test_disjoint_region(self):
        e = Ellipse(50, 50, 30, 14, 0.8)
        assert visibility_fraction(e, AxisBox(200, 200, 50, 50)) == 0.0

    def test_straight_cut_through_center(self):
        e = Ellipse(50, 50, 20, 20, 0.0)
        f = visibility_fraction(e, AxisBox(50, 0, 100, 100))
        assert f == pytest.approx(0.5, abs=0.02)

    def test_deterministic(self):
        e = Ellipse(47.3, 52.1, 28, 13, 1.1)
        r = AxisBox(40, 40, 30, 25)
        assert visibility_fraction(e, r) == visibility_fraction(e, r)

    def test_sample_floor(self):
        with pytest.raises(ValueError, match="256"):
            visibility_fraction(Ellipse(0, 0, 4, 2, 0), AxisBox(0, 0, 1, 1), samples=100)


class TestSmoothLabels:
    def test_examples(self):
        assert smooth_labels([1.0, 1.0, 1.0], 0.1) == [0.9, 0.9, 0.9]
        assert smooth_labels([1.0, 1.0], 0.0) == [1.0, 1.0]

    def test_eps_range(self):
        with pytest.raises(ValueError):
            smooth_labels([1.0], 0.5)
        with pytest.raises(ValueError):
            smooth_labels([1.0], -0.01)

    def test_rendered_max_is_one_minus_eps(self):
        s = smooth_sample(synth_sample(2, width=256, height=256, num_objects=3), 0.1)
        t = encode_targets(
            instances_from_record(s.record, CLASSES), (256, 256), EncoderConfig()
        )
        assert t.heatmap.max() == 0.9
        # and exactly 1 - eps at each center cell
        for c in range(3):
            for v in t.heatmap[c][t.mask[c]]:
                assert v == 0.9


class TestMosaic:
    def test_center_split_halves_axes(self):
        cfg = AugmentConfig(mosaic_center_jitter=0.0, rng_seed=1)
        samples = [synth_sample(i, width=256, height=256, num_objects=2) for i in range(4)]
        assert mosaic_split(cfg, (256, 256)) == (128, 128)
        out = mosaic(samples, cfg)
        assert out.image.shape == samples[0].image.shape
        src_objs = [o for s in samples for o in s.record.objects]
        assert len(out.record.objects) == len(src_objs)  # everything fully visible
        for o_src, o_out in zip(src_objs, out.record.objects):
            assert o_out.ellipse.l1 == pytest.approx(o_src.ellipse.l1 / 2, abs=1e-9)
            assert o_out.ellipse.l2 == pytest.approx(o_src.ellipse.l2 / 2, abs=1e-9)
            assert o_out.peak == o_src.peak  # fully visible: unchanged

    def test_quadrant_offsets(self):
        cfg = AugmentConfig(mosaic_center_jitter=0.0)
        e = Ellipse(100.0, 60.0, 40.0, 20.0, 0.0)
        rec = LabelRecord("one", 256, 256, (ObjectLabel("car", e),))
        img = np.zeros((256, 256, 3), dtype=np.uint8)
        blank = LabelRecord("z", 256, 256, ())
        samples = [
            Sample(img, rec), Sample(img, blank), Sample(img, blank), Sample(img, rec)
        ]
        out = mosaic(samples, cfg)
        tl, br = out.record.objects
        assert (tl.ellipse.cx, tl.ellipse.cy) == (50.0, 30.0)
        assert (br.ellipse.cx, br.ellipse.cy) == (128 + 50.0, 128 + 30.0)

    def test_pixel_conservation(self):
        cfg = AugmentConfig(rng_seed=7)
        samples = [synth_sample(i + 10, width=128, height=128, num_objects=2) for i in range(4)]
        out = mosaic(samples, cfg)
        sx, sy = mosaic_split(cfg, (128, 128))
        for s, (x0, y0, qw, qh) in zip(samples, mosaic_quadrants((sx, sy), (128, 128))):
            cols = np.clip(np.floor((np.arange(qw) + 0.5) * 128 / qw).astype(int), 0, 127)
            rows = np.clip(np.floor((np.arange(qh) + 0.5) * 128 / qh).astype(int), 0, 127)
            np.testing.assert_array_equal(
                out.image[y0 : y0 + qh, x0 : x0 + qw], s.image[np.ix_(rows, cols)]
            )

    def test_label_transport_oracle(self):
        cfg = AugmentConfig(rng_seed=3)
        samples = [synth_sample(i + 20, width=256, height=256, num_objects=3) for i in range(4)]
        out = mosaic(samples, cfg)
        quads = mosaic_quadrants(mosaic_split(cfg, (256, 256)), (256, 256))
        it = iter(out.record.objects)
        for s, (x0, y0, qw, qh) in zip(samples, quads):
            a = np.diag([qw / 256, qh / 256])
            for o_src in s.record.objects:
                o_out = next(it)
                iou = transported_mask_iou(
                    o_src.ellipse, a, (x0, y0), o_out.ellipse, (256, 256)
                )
                assert iou >= 0.99

    def test_determinism(self):
        cfg = AugmentConfig(rng_seed=11)
        samples = [synth_sample(i, width=128, height=128, num_objects=2) for i in range(4)]
        a = mosaic(samples, cfg)
        b = mosaic(samples, cfg)
        assert np.array_equal(a.image, b.image)
        assert a.record == b.record

    def test_dimension_mismatch(self):
        s1 = synth_sample(0, width=128, height=128, num_objects=1)
        s2 = synth_sample(1, width=256, height=256, num_objects=1)
        with pytest.raises(ValueError, match="dimension mismatch"):
            mosaic([s1, s1, s1, s2])

    def test_needs_four(self):
        s = synth_sample(0, width=128, height=128, num_objects=1)
        with pytest.raises(ValueError, match="4 samples"):
            mosaic([s, s, s])

    def test_center_outside_image_dropped(self):
        # a label poking out of its source image may stay >= tau visible in
        # its quadrant, but its center lands outside -> must be dropped
        e = Ellipse(-2.0, 64.0, 40.0, 40.0, 0.0)
        rec = LabelRecord("edge", 128, 128, (ObjectLabel("car", e),))
        img = np.zeros((128, 128, 3), dtype=np.uint8)
        s = Sample(img, rec)
        cfg = AugmentConfig(mosaic_center_jitter=0.0, visibility_tau=0.05)
        out = mosaic([s, s, s, s], cfg)
        for o in out.record.objects:
            assert 0 <= o.ellipse.cx < 128
            assert 0 <= o.ellipse.cy < 128


def flat_sample(value, rec_id="flat", objects=()):
    img = np.full((128, 128, 3), value, dtype=np.uint8)
    return Sample(img, LabelRecord(rec_id, 128, 128, tuple(objects)))


class TestCutmix:
    def test_pixels_swapped_inside_patch(self):
        base = flat_sample(10, "b")
        donor = flat_sample(200, "d")
        out = cutmix(base, donor, AxisBox(32, 48, 40, 30))
        assert (out.image[48:78, 32:72] == 200).all()
        out.image[48:78, 32:72] = 10
        assert (out.image == 10).all()

    def test_donor_inside_patch_kept_unchanged(self):
        e = Ellipse(64.0, 64.0, 30.0, 16.0, 0.7)
        donor = flat_sample(200, "d", [ObjectLabel("car", e)])
        out = cutmix(flat_sample(10, "b"), donor, AxisBox(30, 30, 68, 68))
        assert len(out.record.objects) == 1
        o = out.record.objects[0]
        assert o.ellipse == e  # occlusion never reshapes
        assert o.peak == 1.0

    def test_base_mostly_covered_dropped(self):
        # ~75% of the circle sits inside the patch -> visible 0.25 < 0.5
        e = Ellipse(50.0, 64.0, 40.0, 40.0, 0.0)
        base = flat_sample(10, "b", [ObjectLabel("car", e)])
        out = cutmix(base, flat_sample(200, "d"), AxisBox(0, 0, 64, 128))
        assert out.record.objects == ()

    def test_base_slightly_covered_peak_scaled(self):
        e = Ellipse(80.0, 64.0, 40.0, 40.0, 0.0)
        base = flat_sample(10, "b", [ObjectLabel("car", e)])
        patch = AxisBox(0, 0, 64, 128)
        out = cutmix(base, flat_sample(200, "d"), patch)
        visible = 1.0 - visibility_fraction(e, AxisBox(0, 0, 64, 128))
        assert visible > 0.5
        assert out.record.objects[0].peak == pytest.approx(visible)
        assert out.record.objects[0].ellipse == e

    def test_peak_floor_applies(self):
        e = Ellipse(58.0, 64.0, 40.0, 40.0, 0.0)  # ~69% covered by the patch
        base = flat_sample(10, "b", [ObjectLabel("car", e)])
        visible = 1.0 - visibility_fraction(e, AxisBox(0, 0, 64, 128))
        assert 0.25 < visible < PEAK_FLOOR  # premise: raw scaling would undershoot
        cfg = AugmentConfig(visibility_tau=0.25)
        out = cutmix(base, flat_sample(200, "d"), AxisBox(0, 0, 64, 128), cfg)
        assert out.record.objects[0].peak == PEAK_FLOOR

    def test_patch_outside_bounds(self):
        base = flat_sample(10, "b")
        donor = flat_sample(200, "d")
        with pytest.raises(ValueError, match="patch outside bounds"):
            cutmix(base, donor, AxisBox(100, 100, 64, 64))
        with pytest.raises(ValueError, match="patch outside bounds"):
            cutmix(base, donor, AxisBox(-4, 0, 32, 32))

    def test_dimension_mismatch(self):
        base = flat_sample(10, "b")
        donor = Sample(
            np.zeros((64, 64, 3), dtype=np.uint8), LabelRecord("d", 64, 64, ())
        )
        with pytest.raises(ValueError, match="dimension mismatch"):
            cutmix(base, donor, AxisBox(0, 0, 10, 10))

    def test_transport_identity(self):
        # geometry is untouched, so the transport oracle is exact identity
        s_base = synth_sample(31, width=128, height=128, num_objects=2)
        s_donor = synth_sample(32, width=128, height=128, num_objects=2)
        out = cutmix(s_base, s_donor, AxisBox(20, 20, 60, 60))
        kept = {o.ellipse for o in out.record.objects}
        source = {o.ellipse for o in s_base.record.objects} | {
            o.ellipse for o in s_donor.record.objects
        }
        assert kept <= source
        for e in kept:
            assert transported_mask_iou(e, np.eye(2), (0, 0), e, (128, 128)) == 1.0

    def test_determinism(self):
        s_base = synth_sample(31, width=128, height=128, num_objects=2)
        s_donor = synth_sample(32, width=128, height=128, num_objects=2)
        patch = AxisBox(20, 20, 60, 60)
        a = cutmix(s_base, s_donor, patch)
        b = cutmix(s_base, s_donor, patch)
        assert np.array_equal(a.image, b.image)
        assert a.record == b.record


class TestConfigValidation:
    def test_ranges(self):
        with pytest.raises(ValueError):
            AugmentConfig(smoothing_eps=0.5)
        with pytest.raises(ValueError):
            AugmentConfig(visibility_tau=0.0)
        with pytest.raises(ValueError):
            AugmentConfig(mosaic_center_jitter=0.5)
        with pytest.raises(ValueError):
            AugmentConfig(visibility_samples=64)
