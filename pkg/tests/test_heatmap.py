import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ellipsedet.geometry import Ellipse, rotation_matrix
from ellipsedet.heatmap import (
    EncoderConfig,
    Instance,
    center_cell,
    encode_targets,
    gaussian_coeffs,
    gaussian_sigmas,
    render_gaussian,
    render_heatmap,
    render_regression_maps,
    segmentation_mask,
)

BOUNDARY_VALUE = math.exp(-4.5)  # blob value on the ellipse boundary, major axis


def quadform_route(shape, mu, sx, sy, theta, peak=1.0):
    """Independent evaluation via the covariance matrix instead of trig coeffs."""
    h, w = shape
    r = rotation_matrix(theta)
    cov = r @ np.diag([sx**2, sy**2]) @ r.T
    cov_inv = np.linalg.inv(cov)
    xs = np.arange(w, dtype=float)[None, :] - mu[0]
    ys = np.arange(h, dtype=float)[:, None] - mu[1]
    q = cov_inv[0, 0] * xs**2 + (cov_inv[0, 1] + cov_inv[1, 0]) * xs * ys + cov_inv[1, 1] * ys**2
    return peak * np.exp(-0.5 * q)


class TestGaussianEquivalence:
    def test_matches_covariance_route(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            sx = rng.uniform(0.5, 8.0)
            sy = rng.uniform(0.3, 1.0) * sx
            theta = rng.uniform(-10, 10)
            mu = (rng.uniform(5, 55), rng.uniform(5, 55))
            got = render_gaussian((60, 60), mu, sx, sy, theta)
            want = quadform_route((60, 60), mu, sx, sy, theta)
            assert np.max(np.abs(got - want)) < 1e-12

    def test_coeffs_equal_inverse_covariance(self):
        sx, sy, theta = 3.0, 1.2, 0.77
        a, b, c = gaussian_coeffs(sx, sy, theta)
        r = rotation_matrix(theta)
        half_inv = 0.5 * np.linalg.inv(r @ np.diag([sx**2, sy**2]) @ r.T)
        assert a == pytest.approx(half_inv[0, 0], abs=1e-14)
        assert b == pytest.approx(half_inv[0, 1], abs=1e-14)
        assert c == pytest.approx(half_inv[1, 1], abs=1e-14)

    def test_boundary_value_on_major_axis(self):
        # sigma = l1 / (6 stride) puts the boundary at 3 sigma: exp(-4.5)
        e = Ellipse(128.0, 128.0, 64.0, 24.0, 0.0)
        sx, sy = gaussian_sigmas(e, 4)
        g = render_gaussian((64, 64), (32.0, 32.0), sx, sy, e.theta)
        # boundary point (128 + 32, 128)/stride = cell (40, 32)
        assert g[32, 40] == pytest.approx(BOUNDARY_VALUE, abs=1e-6)
        assert g[32, 24] == pytest.approx(BOUNDARY_VALUE, abs=1e-6)

    def test_boundary_value_minor_axis(self):
        e = Ellipse(128.0, 128.0, 64.0, 24.0, 0.0)
        sx, sy = gaussian_sigmas(e, 4)
        g = render_gaussian((64, 64), (32.0, 32.0), sx, sy, e.theta)
        # minor boundary (128, 128 + 12)/stride = cell (32, 35)
        assert g[35, 32] == pytest.approx(BOUNDARY_VALUE, abs=1e-6)

    @given(
        st.floats(0.5, 6.0),
        st.floats(0.3, 1.0),
        st.floats(-10, 10),
        st.floats(2.0, 28.0),
        st.floats(2.0, 28.0),
    )
    @settings(max_examples=60)
    def test_range_and_peak_location(self, sx, ratio, theta, mx, my):
        g = render_gaussian((30, 30), (mx, my), sx, sx * ratio, theta)
        assert np.all(g >= 0.0) and np.all(g <= 1.0)
        iy, ix = np.unravel_index(np.argmax(g), g.shape)
        # the max cell is within one cell of the continuous mean
        assert abs(ix - mx) <= 1.0 and abs(iy - my) <= 1.0


class TestSigmas:
    def test_ellipse_mode(self):
        e = Ellipse(0, 0, 48.0, 24.0, 1.0)
        assert gaussian_sigmas(e, 4) == (2.0, 1.0)

    def test_circle_mode_uses_major(self):
        e = Ellipse(0, 0, 48.0, 24.0, 1.0)
        assert gaussian_sigmas(e, 4, mode="circle") == (2.0, 2.0)

    def test_circle_mode_rotation_invariant(self):
        a = Ellipse(64, 64, 40, 16, 0.3)
        b = Ellipse(64, 64, 40, 16, 2.1)
        cfg = EncoderConfig(mode="circle", num_classes=1)
        ta = encode_targets([Instance(0, a)], (128, 128), cfg)
        tb = encode_targets([Instance(0, b)], (128, 128), cfg)
        np.testing.assert_allclose(ta.heatmap, tb.heatmap, atol=1e-15)


class TestCenterCell:
    def test_fractional_split(self):
        e = Ellipse(130.0, 77.0, 20, 10, 0)
        ix, iy, ox, oy = center_cell(e, 4)
        assert (ix, iy) == (32, 19)
        assert ox == pytest.approx(0.5)
        assert oy == pytest.approx(0.25)

    @given(st.floats(0.0, 500.0), st.floats(0.0, 500.0))
    @settings(max_examples=50)
    def test_reconstruction_exact(self, cx, cy):
        e = Ellipse(cx, cy, 20, 10, 0)
        ix, iy, ox, oy = center_cell(e, 4)
        assert (ix + ox) * 4 == pytest.approx(cx, abs=1e-9)
        assert (iy + oy) * 4 == pytest.approx(cy, abs=1e-9)
        assert 0.0 <= ox < 1.0 and 0.0 <= oy < 1.0


class TestEncodeTargets:
    def test_shapes_and_center_slots(self):
        e = Ellipse(100.0, 60.0, 40.0, 18.0, 0.6)
        t = encode_targets([Instance(1, e)], (256, 128), EncoderConfig(num_classes=3))
        assert t.heatmap.shape == (3, 32, 64)
        assert t.offset.shape == (2, 32, 64)
        assert t.size.shape == (3, 32, 64)
        assert t.mask.shape == (3, 32, 64)
        assert t.seg.shape == (128, 256)
        ix, iy, ox, oy = center_cell(e, 4)
        assert t.heatmap[1, iy, ix] == 1.0
        assert t.mask[1, iy, ix]
        assert not t.mask[0].any() and not t.mask[2].any()
        assert t.offset[:, iy, ix] == pytest.approx([ox, oy])
        assert t.size[:, iy, ix] == pytest.approx([e.l1, e.l2, e.theta])
        assert t.num_positives == 1

    def test_center_cell_is_global_peak(self):
        e = Ellipse(101.3, 62.7, 40.0, 18.0, 0.6)
        t = encode_targets([Instance(0, e)], (256, 128), EncoderConfig(num_classes=1))
        ix, iy, _, _ = center_cell(e, 4)
        assert t.heatmap[0, iy, ix] == 1.0
        assert t.heatmap[0].max() == 1.0

    def test_overlap_combines_by_max(self):
        a = Instance(0, Ellipse(60.0, 64.0, 50.0, 30.0, 0.0))
        b = Instance(0, Ellipse(100.0, 64.0, 50.0, 30.0, 0.0))
        cfg = EncoderConfig(num_classes=1)
        t_both = encode_targets([a, b], (192, 128), cfg)
        t_a = encode_targets([a], (192, 128), cfg)
        t_b = encode_targets([b], (192, 128), cfg)
        np.testing.assert_allclose(
            t_both.heatmap, np.maximum(t_a.heatmap, t_b.heatmap), atol=1e-15
        )

    def test_different_classes_do_not_interact(self):
        a = Instance(0, Ellipse(60.0, 64.0, 50.0, 30.0, 0.0))
        b = Instance(2, Ellipse(100.0, 64.0, 50.0, 30.0, 0.0))
        t = encode_targets([a, b], (192, 128), EncoderConfig(num_classes=3))
        assert t.heatmap[1].max() == 0.0
        assert t.mask[0].sum() == 1 and t.mask[2].sum() == 1

    def test_reduced_peak(self):
        e = Ellipse(64.0, 64.0, 40.0, 20.0, 0.0)
        t = encode_targets([Instance(0, e, peak=0.35)], (128, 128), EncoderConfig(num_classes=1))
        assert t.heatmap[0].max() == pytest.approx(0.35)

    def test_same_class_shared_cell_is_an_error(self):
        a = Instance(0, Ellipse(64.0, 64.0, 40.0, 20.0, 0.0))
        b = Instance(0, Ellipse(65.0, 65.0, 30.0, 12.0, 0.5))
        with pytest.raises(ValueError, match="center collision"):
            encode_targets([a, b], (128, 128), EncoderConfig(num_classes=1))

    def test_cross_class_shared_cell_allowed(self):
        a = Instance(0, Ellipse(64.0, 64.0, 40.0, 20.0, 0.0))
        b = Instance(1, Ellipse(65.0, 65.0, 30.0, 12.0, 0.5))
        t = encode_targets([a, b], (128, 128), EncoderConfig(num_classes=2))
        ix, iy, ox, oy = center_cell(b.ellipse, 4)
        assert t.mask[0, iy, ix] and t.mask[1, iy, ix]
        # the class channels stay independent; the shared regression slots
        # belong to the later object
        assert t.size[:, iy, ix] == pytest.approx([30.0, 12.0, 0.5])
        assert t.offset[:, iy, ix] == pytest.approx([ox, oy])

    def test_coincident_duplicates_render_like_one(self):
        e = Ellipse(64.0, 64.0, 40.0, 20.0, 0.3)
        one = render_heatmap([Instance(0, e)], (128, 128), EncoderConfig(num_classes=1))
        two = render_heatmap(
            [Instance(0, e), Instance(0, e)], (128, 128), EncoderConfig(num_classes=1)
        )
        np.testing.assert_array_equal(one, two)

    def test_validation_errors(self):
        e = Ellipse(10, 10, 8, 4, 0)
        with pytest.raises(ValueError, match="not divisible"):
            encode_targets([Instance(0, e)], (130, 128), EncoderConfig())
        with pytest.raises(ValueError, match="class_id"):
            encode_targets([Instance(5, e)], (128, 128), EncoderConfig(num_classes=3))
        far = Ellipse(500.0, 10.0, 8, 4, 0)
        with pytest.raises(ValueError, match="outside image"):
            encode_targets([Instance(0, far)], (128, 128), EncoderConfig())
        with pytest.raises(ValueError, match="peak"):
            Instance(0, e, peak=0.0)

    def test_empty_scene(self):
        t = encode_targets([], (64, 64), EncoderConfig())
        assert t.heatmap.max() == 0.0
        assert t.num_positives == 0
        assert t.seg.max() == 0.0


class TestSegmentationMask:
    def test_fills_ellipse_region(self):
        e = Ellipse(64.0, 64.0, 60.0, 30.0, 0.0)
        seg = segmentation_mask([Instance(0, e)], (128, 128))
        # pixel-center sampling: area of mask tracks ellipse area
        assert seg.sum() == pytest.approx(e.area, rel=0.02)
        assert seg[64, 64] == 1.0
        assert seg[64, 64 + 31] == 0.0  # just outside major half-axis
        assert set(np.unique(seg)) <= {0.0, 1.0}

    def test_union_of_instances(self):
        a = Instance(0, Ellipse(40.0, 64.0, 30.0, 20.0, 0.2))
        b = Instance(1, Ellipse(90.0, 64.0, 30.0, 20.0, 1.2))
        seg = segmentation_mask([a, b], (128, 128))
        sa = segmentation_mask([a], (128, 128))
        sb = segmentation_mask([b], (128, 128))
        np.testing.assert_array_equal(seg, np.maximum(sa, sb))
