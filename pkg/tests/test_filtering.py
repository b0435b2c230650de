"""The stabilization state machine: filter, crop predicates, inside forcing."""

import math
from collections import deque

import numpy as np
import pytest

from stitchstab import filtering as flt, geometry, rolling_shutter as rs
from stitchstab.filtering import FilterParams, FilterState, StitchChoice
from stitchstab.geometry import CameraParams


CAM = CameraParams.for_frame(1920, 1080)
DIMS = (1920, 1080)


def window_oracle(values, capacity):
    """Straightforward replay of the sliding window semantics."""
    out = []
    win = []
    for v in values:
        win.append(v)
        if len(win) > capacity:
            win.pop(0)
        out.append((max(win) + min(win)) / 2.0)
    return out


class TestMidrange:
    def test_single_push(self):
        assert flt.midrange_push(deque(maxlen=8), 2.0) == 2.0

    def test_three_values(self):
        w = deque(maxlen=8)
        for v in (1.0, 3.0):
            flt.midrange_push(w, v)
        assert flt.midrange_push(w, 2.0) == 2.0

    def test_full_window_zero_to_seven(self):
        w = deque(maxlen=8)
        results = [flt.midrange_push(w, float(v)) for v in range(8)]
        assert results[-1] == 3.5

    def test_matches_oracle_on_random_stream(self):
        rng = np.random.default_rng(0)
        values = rng.standard_normal(5000).tolist()
        w = deque(maxlen=8)
        got = [flt.midrange_push(w, v) for v in values]
        assert got == window_oracle(values, 8)

    def test_output_bounded_by_window_contents(self):
        rng = np.random.default_rng(1)
        w = deque(maxlen=5)
        for v in rng.standard_normal(200):
            out = flt.midrange_push(w, float(v))
            assert min(w) <= out <= max(w)


class TestFilterUpdate:
    def test_identity_stream_keeps_q_identity(self):
        params = FilterParams()
        state = FilterState.initial(params)
        for _ in range(20):
            q = flt.filter_update(state, np.eye(3), CAM, params)
        assert np.array_equal(q, np.eye(3))

    def test_constant_velocity_no_lag(self):
        # with a full window of a constant value the mid-range equals it, so
        # the output camera follows the input and Q stops moving
        params = FilterParams()
        state = FilterState.initial(params)
        alpha = 0.002
        n = geometry.invert(geometry.rotation_homography(alpha, 0, 0, CAM))
        prev_q = None
        for i in range(30):
            q = flt.filter_update(state, n, CAM, params).copy()
            if i >= 20:
                assert np.abs(q - prev_q).max() < 1e-4
            prev_q = q

    def test_impulse_gets_half_response_immediately(self):
        params = FilterParams()
        state = FilterState.initial(params)
        for _ in range(8):
            flt.filter_update(state, np.eye(3), CAM, params)
        alpha0 = 0.01
        n = geometry.invert(geometry.rotation_homography(alpha0, 0, 0, CAM))
        q = flt.filter_update(state, n, CAM, params)

        def g_of(window):
            return (max(window) + min(window)) / 2.0

        # g jumps to alpha0/2 on the impulse frame (quick response), so the
        # net applied rotation that frame is -alpha0/2
        assert g_of(state.win_yaw) == pytest.approx(alpha0 / 2, rel=1e-2)
        dec = geometry.decompose(q, CAM)
        assert dec.yaw == pytest.approx(-alpha0 / 2, rel=5e-2)
        # and drops back to zero once the window evicts the impulse
        for _ in range(8):
            flt.filter_update(state, np.eye(3), CAM, params)
        assert g_of(state.win_yaw) == 0.0

    def test_forced_velocities_bypass_windows(self):
        params = FilterParams()
        state = FilterState.initial(params)
        n = geometry.invert(geometry.rotation_homography(0.01, 0, 0, CAM))
        flt.filter_update(state, n, CAM, params, forced_g=(0.01, 0.0, 0.0))
        assert len(state.win_yaw) == 0
        dec = geometry.decompose(state.q, CAM)
        assert abs(dec.yaw) < 1e-6  # full counter-rotation

    def test_residual_blend_keeps_lambda_near_identity(self):
        params = FilterParams()
        state = FilterState.initial(params)
        rng = np.random.default_rng(3)
        amp = 1e-4
        for i in range(200):
            angles = amp * np.sin(2 * np.pi * i / np.array([11.0, 17.0, 23.0]) + [0, 1, 2])
            n = geometry.invert(geometry.rotation_homography(*angles, CAM))
            flt.filter_update(state, n, CAM, params)
            assert np.abs(state.last_residual - np.eye(3)).max() < 1e-6


class TestCropBoundary:
    def test_identity_90_percent_1080p(self):
        quad = flt.crop_boundary(np.eye(3), 0.9, (1920, 1080))
        assert np.allclose(quad, geometry.rect_quad(96, 54, 96 + 1728, 54 + 972))

    def test_full_ratio_is_full_frame(self):
        quad = flt.crop_boundary(np.eye(3), 1.0, (1920, 1080))
        assert np.allclose(quad, geometry.rect_quad(0, 0, 1920, 1080))

    def test_translation_shifts_rect(self):
        quad = flt.crop_boundary(geometry.translation(200, 0), 0.9, (1920, 1080))
        assert np.allclose(quad, geometry.rect_quad(296, 54, 296 + 1728, 54 + 972))


class TestIsInsideConventional:
    def test_centered_crop_inside(self):
        quad = flt.crop_boundary(np.eye(3), 0.9, DIMS)
        assert flt.is_inside_conventional(quad, DIMS)

    def test_shift_beyond_margin_outside(self):
        # margin is 96 px at 90% of 1920
        quad = flt.crop_boundary(geometry.translation(200, 0), 0.9, DIMS)
        assert not flt.is_inside_conventional(quad, DIMS)
        quad_ok = flt.crop_boundary(geometry.translation(90, 0), 0.9, DIMS)
        assert flt.is_inside_conventional(quad_ok, DIMS)

    def test_full_frame_boundary_counts_inside(self):
        quad = flt.crop_boundary(np.eye(3), 1.0, DIMS)
        assert flt.is_inside_conventional(quad, DIMS)


class TestIsInsideStitching:
    def test_inside_main_no_stitch(self):
        choice = flt.is_inside_stitching(np.eye(3), np.eye(3), np.eye(3), DIMS, 0.9)
        assert choice == StitchChoice.NO_STITCH

    def test_left_exit_with_previous_coverage(self):
        # crop exits the left edge by 50 px; the camera panned right, so the
        # previous frame still covers 80 px past the current left edge
        # (content moved left: m maps prev x=0 to curr x=-80)
        p = geometry.translation(-96 - 50, 0)
        m_prev = geometry.translation(-80, 0)
        choice = flt.is_inside_stitching(p, m_prev, None, DIMS, 0.9)
        assert choice == StitchChoice.STITCH_PREV

    def test_next_used_when_prev_insufficient(self):
        p = geometry.translation(-96 - 50, 0)
        m_prev = geometry.translation(80, 0)  # previous frame covers the right: useless
        m_next = geometry.translation(80, 0)  # next frame covers past the left edge
        choice = flt.is_inside_stitching(p, m_prev, m_next, DIMS, 0.9)
        assert choice == StitchChoice.STITCH_NEXT

    def test_exit_beyond_both_subs_fails(self):
        p = geometry.translation(-96 - 50, 0)
        choice = flt.is_inside_stitching(p, np.eye(3), np.eye(3), DIMS, 0.9)
        assert choice == StitchChoice.FAIL

    def test_opposite_edge_deficit_fails(self):
        # zoom the crop out so it pokes out on the left and right at once
        p = np.diag([1.12, 1.0, 1.0])
        p = geometry.compose(geometry.translation(-0.06 * 1920, 0), p)
        big = geometry.translation(500, 0)
        choice = flt.is_inside_stitching(p, big, geometry.invert(big), DIMS, 0.9)
        assert choice == StitchChoice.FAIL

    def test_prefers_prev_over_next(self):
        p = geometry.translation(-96 - 50, 0)
        cover = geometry.translation(-80, 0)
        # both neighbors would cover the deficit; the previous one wins
        choice = flt.is_inside_stitching(p, cover, geometry.invert(cover), DIMS, 0.9)
        assert choice == StitchChoice.STITCH_PREV


class TestToIdentity:
    def test_identity_fixed_point(self):
        assert np.allclose(flt.to_identity(np.eye(3), 0.01), np.eye(3))

    def test_eps_one_is_identity(self):
        assert np.allclose(flt.to_identity(geometry.translation(9, 9), 1.0), np.eye(3))

    def test_translation_shrinks_elementwise(self):
        out = flt.to_identity(geometry.translation(10, 0), 0.01)
        assert out[0, 2] == pytest.approx(9.9)


class TestEnsureInside:
    def _pred(self, ratio=0.9):
        return lambda p: flt.is_inside_conventional(flt.crop_boundary(p, ratio, DIMS), DIMS)

    def test_already_inside_unchanged(self):
        p = geometry.translation(10, 0)
        out, iters = flt.ensure_inside(p, self._pred(), FilterParams())
        assert iters == 0
        assert np.array_equal(out, geometry.normalize(p))

    def test_far_outside_converges_within_geometric_bound(self):
        params = FilterParams()
        shift = 2000.0
        p = geometry.translation(shift, 0)
        out, iters = flt.ensure_inside(p, self._pred(), params)
        assert self._pred()(out)
        # translation decays by (1-eps) each step; bound until it is under margin
        bound = math.ceil(math.log(96.0 / shift) / math.log(1 - params.eps)) + 2
        assert iters <= bound

    def test_ratio_one_identity_zero_iterations(self):
        out, iters = flt.ensure_inside(np.eye(3), self._pred(1.0), FilterParams(crop_ratio=1.0))
        assert iters == 0

    def test_iteration_cap_raises(self):
        params = FilterParams(max_iterations=3)
        with pytest.raises(flt.EnsureInsideError):
            flt.ensure_inside(geometry.translation(5000, 0), lambda p: False, params)


class TestStabilizeStep:
    def test_q_p_consistency_and_post_inside(self):
        cam = CameraParams.for_frame(480, 280)
        params = FilterParams()
        state = FilterState.initial(params)
        rs_state = rs.RsState(cam)
        rng = np.random.default_rng(5)
        for i in range(60):
            m = geometry.compose(
                geometry.translation(rng.uniform(-25, 25), rng.uniform(-15, 15)),
                geometry.rotation_homography(0, 0, rng.uniform(-0.01, 0.01), cam),
            )
            d_curr, d_prev, n = rs_state.update(m)
            res = flt.stabilize_step(
                state, n, d_curr, cam, params, stitching=True,
                m_prev_to_curr=m, m_curr_to_next=geometry.translation(*rng.uniform(-20, 20, 2)),
            )
            # P = D Q up to scale
            assert np.abs(geometry.normalize(d_curr @ res.q) - res.p).max() < 1e-9
            # the emitted P satisfies the predicate
            assert res.choice != StitchChoice.FAIL

    def test_ensure_inside_resync_leaves_windows_untouched(self):
        cam = CameraParams.for_frame(480, 280)
        params = FilterParams()
        state = FilterState.initial(params)
        rs_state = rs.RsState(cam)
        # prime the windows, then hit a violent motion that forces a correction
        for _ in range(8):
            d_curr, _, n = rs_state.update(np.eye(3))
            flt.stabilize_step(state, n, cam=cam, params=params, stitching=False, d=d_curr)
        m = geometry.translation(150, 0)
        d_curr, _, n = rs_state.update(m)
        res = flt.stabilize_step(state, n, cam=cam, params=params, stitching=False, d=d_curr)
        assert res.iterations > 0
        assert len(state.win_yaw) == 8  # only the estimation pushes, no feedback
        entries = list(state.win_yaw)
        assert entries[-1] != 0.0 and all(v == 0.0 for v in entries[:-1])


class TestLockstepDominance:
    def test_stitch_fail_implies_conventional_fail(self, suite_clips, suite_stabilize_reports):
        for name, reports in suite_stabilize_reports.items():
            det = reports["stitching"].details
            assert det["lockstep_dominance_violations"] == 0
            assert det["lockstep_n_f_stitching"] <= det["lockstep_n_f_conventional"]
