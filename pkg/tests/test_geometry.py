"""Geometry: homography algebra, rotations, angle estimation, containment."""

import numpy as np
import pytest
from matplotlib.path import Path as MplPath

from stitchstab import geometry as g


CAM = g.CameraParams.for_frame(1920, 1080)


def rand_homography(rng):
    """Well-conditioned random homography: rotation + translation + mild projective."""
    h = g.rotation_homography(
        rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.2, 0.2), CAM
    )
    h = g.compose(g.translation(rng.uniform(-50, 50), rng.uniform(-50, 50)), h)
    h[2, 0] += rng.uniform(-1e-5, 1e-5)
    h[2, 1] += rng.uniform(-1e-5, 1e-5)
    return g.normalize(h)


class TestCompose:
    def test_identity(self):
        assert np.allclose(g.compose(np.eye(3), np.eye(3)), np.eye(3))

    def test_inverse_definition(self):
        rng = np.random.default_rng(1)
        h = rand_homography(rng)
        assert np.abs(g.compose(h, g.invert(h)) - np.eye(3)).max() < 1e-9

    def test_translations_hand_product(self):
        # hand matrix product: translations add
        expect = g.translation(4, 6)
        assert np.allclose(g.compose(g.translation(1, 2), g.translation(3, 4)), expect)

    def test_compose_invert_roundtrip_1000(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            h = rand_homography(rng)
            err = np.abs(g.compose(g.invert(h), h) - np.eye(3)).max()
            assert err < 1e-9


class TestApply:
    def test_identity(self):
        assert g.apply(np.eye(3), (5, 7)) == (5.0, 7.0)

    def test_translation(self):
        assert g.apply(g.translation(3, 0), (0, 0)) == (3.0, 0.0)

    def test_projective_row_hand_eval(self):
        # w = 0.001 * 100 + 1 = 1.1, so x = 100 / 1.1
        h = np.eye(3)
        h[2, 0] = 0.001
        x, y = g.apply(h, (100, 0))
        assert x == pytest.approx(100 / 1.1)
        assert y == pytest.approx(0.0)

    def test_point_at_infinity(self):
        h = np.eye(3)
        h[2, 0] = -0.01
        with pytest.raises(g.GeometryError):
            g.apply(h, (100, 0))


class TestRotationHomography:
    def test_zero_is_identity(self):
        assert np.allclose(g.rotation_homography(0, 0, 0, CAM), np.eye(3))

    def test_pure_roll_is_inplane_rotation(self):
        h = g.rotation_homography(0, 0, np.pi / 2, CAM)
        px, py = CAM.principal_point
        # principal point fixed, a point right of it rotates to below it
        assert g.apply(h, (px, py)) == pytest.approx((px, py))
        x, y = g.apply(h, (px + 100, py))
        assert (x, y) == pytest.approx((px, py + 100), abs=1e-9)

    def test_small_yaw_first_order_translation(self):
        # first-order expansion: shift ~ (focal * yaw, 0) at the principal point
        alpha = 1e-3
        h = g.rotation_homography(alpha, 0, 0, CAM)
        px, py = CAM.principal_point
        x, y = g.apply(h, (px, py))
        assert x - px == pytest.approx(CAM.focal_length * alpha, rel=1e-3)
        assert y - py == pytest.approx(0.0, abs=1e-9)

    def test_argwise_inverse_per_axis(self):
        for angles in ((0.2, 0, 0), (0, 0.15, 0), (0, 0, 0.3)):
            fwd = g.rotation_homography(*angles, CAM)
            back = g.rotation_homography(*(-a for a in angles), CAM)
            assert np.abs(g.compose(back, fwd) - np.eye(3)).max() < 1e-9


class TestEstimateAngles:
    def test_identity(self):
        assert g.estimate_angles(np.eye(3), CAM) == (0.0, 0.0, 0.0)

    def test_half_focal_shift_is_30_degrees(self):
        h = np.eye(3)
        h[0, 2] = CAM.focal_length / 2
        yaw, pitch, roll = g.estimate_angles(h, CAM)
        assert yaw == pytest.approx(np.pi / 6)
        assert (pitch, roll) == (0.0, 0.0)

    def test_unit_d_over_e_is_45_degrees(self):
        h = np.eye(3)
        h[1, 0] = 1.0
        _, _, roll = g.estimate_angles(h, CAM)
        assert roll == pytest.approx(np.pi / 4)

    def test_clamps_out_of_range(self):
        h = np.eye(3)
        h[0, 2] = 2 * CAM.focal_length
        yaw, _, _ = g.estimate_angles(h, CAM)
        assert yaw == pytest.approx(np.pi / 2)

    def test_zero_e_zero_d_convention(self):
        h = np.eye(3)
        h[1, 1] = 0.0
        assert g.estimate_angles(h, CAM)[2] == 0.0


class TestDecompose:
    def test_identity(self):
        dec = g.decompose(np.eye(3), CAM)
        assert (dec.yaw, dec.pitch, dec.roll) == (0.0, 0.0, 0.0)
        assert np.allclose(dec.residual, np.eye(3))

    def test_roundtrip_on_synthetic_rotation(self):
        h = g.rotation_homography(0.1, -0.05, 0.2, CAM)
        dec = g.decompose(h, CAM)
        assert dec.yaw == pytest.approx(0.1, abs=1e-3)
        assert dec.pitch == pytest.approx(-0.05, abs=1e-3)
        assert dec.roll == pytest.approx(0.2, abs=1e-3)
        # residual is near identity: rotation block to ~1e-2, translation a few px
        assert np.abs(dec.residual - np.eye(3))[np.ix_([0, 1], [0, 1])].max() < 1e-2
        assert np.abs(dec.residual[:2, 2]).max() < 5.0

    def test_projective_part_lands_in_residual(self):
        h = g.rotation_homography(0.05, 0.02, -0.1, CAM)
        h[2, 0] += 2e-5
        h[2, 1] -= 1e-5
        h = g.normalize(h)
        dec = g.decompose(h, CAM)
        assert abs(dec.residual[2, 0]) > 0 or abs(dec.residual[2, 1]) > 0
        recon = g.recompose(dec, CAM)
        assert np.abs(recon - h).max() < 1e-9

    def test_reconstruction_identity_1000(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            h = rand_homography(rng)
            dec = g.decompose(h, CAM)
            assert np.abs(g.recompose(dec, CAM) - h).max() < 1e-9


class TestTransformQuad:
    def test_identity(self):
        q = g.rect_quad(0, 0, 10, 5)
        assert np.allclose(g.transform_quad(q, np.eye(3)), q)

    def test_translation(self):
        q = g.rect_quad(0, 0, 10, 5)
        out = g.transform_quad(q, g.translation(2, 3))
        assert np.allclose(out, q + np.array([2, 3]))

    def test_perspective_matches_per_vertex_apply(self):
        h = np.array([[1.1, 0.02, 5.0], [-0.03, 0.95, -2.0], [1e-4, -5e-5, 1.0]])
        q = g.rect_quad(0, 0, 100, 50)
        out = g.transform_quad(q, h)
        for i in range(4):
            assert tuple(out[i]) == pytest.approx(g.apply(h, q[i]))

    def test_vertex_at_infinity_raises(self):
        h = np.eye(3)
        h[2, 0] = -0.01
        q = g.rect_quad(0, 0, 100, 50)
        with pytest.raises(g.GeometryError):
            g.transform_quad(q, h)


def _union_oracle(crop, a, b, samples=512):
    """Dense containment oracle via matplotlib paths (independent route)."""
    pa = MplPath(a)
    pb = MplPath(b)
    pts = []
    for i in range(4):
        p0, p1 = crop[i], crop[(i + 1) % 4]
        for t in np.linspace(0, 1, samples, endpoint=False):
            pts.append(p0 + t * (p1 - p0))
    pts = np.array(pts)
    ina = pa.contains_points(pts, radius=1e-9) | pa.contains_points(pts, radius=-1e-9)
    inb = pb.contains_points(pts, radius=1e-9) | pb.contains_points(pts, radius=-1e-9)
    return bool(np.all(ina | inb))


class TestQuadInsideUnion:
    def test_subset(self):
        a = g.rect_quad(0, 0, 100, 50)
        assert g.quad_inside_union(a, a, g.rect_quad(200, 200, 210, 210))

    def test_fully_outside(self):
        crop = g.rect_quad(300, 300, 350, 350)
        assert not g.quad_inside_union(crop, g.rect_quad(0, 0, 100, 50), g.rect_quad(50, 0, 150, 50))

    def test_spanning_overlap_matches_dense_oracle(self):
        a = g.rect_quad(0, 0, 100, 60)
        b = g.rect_quad(60, 10, 160, 70)
        inside = g.rect_quad(20, 15, 140, 55)  # lives in the union
        outside = g.rect_quad(20, 5, 140, 55)  # pokes above b left of x=60
        assert _union_oracle(inside, a, b)
        assert g.quad_inside_union(inside, a, b)
        assert not _union_oracle(outside, a, b)
        assert not g.quad_inside_union(outside, a, b)

    def test_monotone_shrink_never_flips_true_to_false(self):
        rng = np.random.default_rng(3)
        a = g.rect_quad(0, 0, 100, 60)
        b = g.rect_quad(40, 20, 150, 90)
        for _ in range(50):
            cx, cy = rng.uniform(30, 90), rng.uniform(20, 50)
            w, h = rng.uniform(10, 60), rng.uniform(10, 40)
            crop = g.rect_quad(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
            if g.quad_inside_union(crop, a, b):
                centroid = crop.mean(axis=0)
                for s in (0.8, 0.5, 0.2):
                    shrunk = centroid + s * (crop - centroid)
                    assert g.quad_inside_union(shrunk, a, b)


class TestCameraParams:
    def test_defaults(self):
        cam = g.CameraParams.for_frame(1920, 1080)
        assert cam.principal_point == (960.0, 540.0)
        assert cam.sensor_height == 2160.0
        assert cam.focal_length == 1920.0

    def test_validation(self):
        with pytest.raises(ValueError):
            g.CameraParams(focal_length=-1, width=100, height=100)
        with pytest.raises(ValueError):
            g.CameraParams(focal_length=100, width=100, height=100, sensor_height=50)
