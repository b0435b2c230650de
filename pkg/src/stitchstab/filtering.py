"""The stabilization state machine.

Per frame: estimate yaw/pitch/roll of the inverse distortion-free motion,
low-pass them with a mid-range filter, accumulate the distortion-free
cropping matrix Q, pull its residual toward identity to stop error build-up,
and finally force the crop back inside the frame when it escapes.  Two
inside predicates exist: the conventional one (crop within the main frame)
and the stitching one (crop within the union of the main frame and one
motion-aligned neighbor frame).
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, geometry
from .geometry import CameraParams


class EnsureInsideError(RuntimeError):
    """Iteration cap reached before the crop came back inside."""


class StitchChoice(enum.IntEnum):
    NO_STITCH = _kernels.CHOICE_NO_STITCH
    STITCH_PREV = _kernels.CHOICE_STITCH_PREV
    STITCH_NEXT = _kernels.CHOICE_STITCH_NEXT
    FAIL = _kernels.CHOICE_FAIL


@dataclass
class FilterParams:
    window: int = 8  # mid-range array length
    eta: float = 0.25  # residual-to-identity blend
    eps: float = 0.01  # per-iteration blend toward identity
    crop_ratio: float = 0.9
    max_iterations: int = 2000
    samples_per_edge: int = 64  # boundary samples for the union test

    def __post_init__(self):
        if not (0.0 < self.eta < 1.0):
            raise ValueError("eta must be in (0, 1)")
        if not (0.0 < self.eps < 1.0):
            raise ValueError("eps must be in (0, 1)")
        if not (0.0 < self.crop_ratio <= 1.0):
            raise ValueError("crop_ratio must be in (0, 1]")
        if self.window < 1:
            raise ValueError("window must be >= 1")


def midrange_push(window: deque, value: float) -> float:
    """Append value (evicting the oldest past capacity) and return the
    mid-range (max+min)/2 of the window.

    Compared with a running average this reacts instantly: any new extreme
    contributes half of its excursion on the very frame it arrives.
    """
    window.append(value)
    return (max(window) + min(window)) / 2.0


def output_dims(width: int, height: int, crop_ratio: float) -> tuple[int, int]:
    return int(round(crop_ratio * width)), int(round(crop_ratio * height))


def crop_rect(width: int, height: int, crop_ratio: float) -> tuple[float, float, int, int]:
    """Centered crop rectangle (off_x, off_y, out_w, out_h) in input pixels."""
    ow, oh = output_dims(width, height, crop_ratio)
    return (width - ow) / 2.0, (height - oh) / 2.0, ow, oh


def crop_boundary(p: np.ndarray, crop_ratio: float, frame_dims: tuple[int, int]) -> np.ndarray:
    """The centered crop rectangle mapped through p into input coordinates."""
    w, h = frame_dims
    ox, oy, ow, oh = crop_rect(w, h, crop_ratio)
    quad = geometry.rect_quad(ox, oy, ox + ow, oy + oh)
    return geometry.transform_quad(quad, p)


def is_inside_conventional(crop: np.ndarray, frame_dims: tuple[int, int]) -> bool:
    """True iff the crop quad lies in [0, W] x [0, H] (vertices suffice)."""
    w, h = frame_dims
    crop = np.asarray(crop, dtype=np.float64)
    return bool(
        np.all(crop[:, 0] >= 0.0)
        and np.all(crop[:, 0] <= w)
        and np.all(crop[:, 1] >= 0.0)
        and np.all(crop[:, 1] <= h)
    )


def sub_quad_prev(m_prev_to_curr: np.ndarray, frame_dims: tuple[int, int]) -> np.ndarray | None:
    """Previous-frame coverage in current coordinates: the frame rectangle
    pushed forward through the previous-to-current motion."""
    w, h = frame_dims
    quad = geometry.frame_quad(w, h)
    if not geometry.quad_positive_depth(quad, m_prev_to_curr):
        return None
    return geometry.transform_quad(quad, m_prev_to_curr)


def sub_quad_next(m_curr_to_next: np.ndarray, frame_dims: tuple[int, int]) -> np.ndarray | None:
    """Next-frame coverage in current coordinates (inverse of curr-to-next)."""
    try:
        inv = geometry.invert(m_curr_to_next)
    except geometry.GeometryError:
        return None
    return sub_quad_prev(inv, frame_dims)


_NO_QUAD = np.zeros((4, 2))


def is_inside_stitching(
    crop_p: np.ndarray,
    m_prev_to_curr: np.ndarray | None,
    m_curr_to_next: np.ndarray | None,
    frame_dims: tuple[int, int],
    crop_ratio: float,
    samples_per_edge: int = 64,
) -> StitchChoice:
    """Inside decision when one adjacent frame may fill the deficit.

    NO_STITCH when the conventional test passes; FAIL when the deficit
    touches two opposite frame edges or all four (no open seam can seal it);
    otherwise the previous frame is preferred over the next.
    """
    w, h = frame_dims
    ox, oy, ow, oh = crop_rect(w, h, crop_ratio)
    prev_q = sub_quad_prev(m_prev_to_curr, frame_dims) if m_prev_to_curr is not None else None
    next_q = sub_quad_next(m_curr_to_next, frame_dims) if m_curr_to_next is not None else None
    choice = _kernels.stitching_choice_k(
        np.ascontiguousarray(crop_p, dtype=np.float64),
        ox,
        oy,
        float(ow),
        float(oh),
        float(w),
        float(h),
        prev_q is not None,
        prev_q if prev_q is not None else _NO_QUAD,
        next_q is not None,
        next_q if next_q is not None else _NO_QUAD,
        int(samples_per_edge),
    )
    return StitchChoice(choice)


def to_identity(p: np.ndarray, eps: float) -> np.ndarray:
    """Elementwise blend eps*I + (1-eps)*p, renormalized."""
    return geometry.normalize(eps * np.eye(3) + (1.0 - eps) * np.asarray(p, dtype=np.float64))


def ensure_inside(p: np.ndarray, inside, params: FilterParams) -> tuple[np.ndarray, int]:
    """Blend p toward identity until the inside predicate accepts it.

    The predicate is any callable Homography -> bool.  Raises after
    params.max_iterations; unreachable for crop ratios below 1 because the
    blend converges to identity, where the predicate holds.
    """
    out = geometry.normalize(np.asarray(p, dtype=np.float64))
    iterations = 0
    while not inside(out):
        if iterations >= params.max_iterations:
            raise EnsureInsideError(f"not inside after {iterations} iterations")
        out = to_identity(out, params.eps)
        iterations += 1
    return out, iterations


@dataclass
class FilterState:
    """Distortion-free cropping matrix plus the mid-range filter windows."""

    q: np.ndarray = field(default_factory=lambda: np.eye(3))
    win_yaw: deque = None  # type: ignore[assignment]
    win_pitch: deque = None  # type: ignore[assignment]
    win_roll: deque = None  # type: ignore[assignment]
    last_yaw: float = 0.0
    last_pitch: float = 0.0
    last_roll: float = 0.0
    last_residual: np.ndarray = field(default_factory=lambda: np.eye(3))

    @classmethod
    def initial(cls, params: FilterParams) -> "FilterState":
        return cls(
            q=np.eye(3),
            win_yaw=deque(maxlen=params.window),
            win_pitch=deque(maxlen=params.window),
            win_roll=deque(maxlen=params.window),
        )

    def clone(self) -> "FilterState":
        c = FilterState(
            q=self.q.copy(),
            win_yaw=deque(self.win_yaw, maxlen=self.win_yaw.maxlen),
            win_pitch=deque(self.win_pitch, maxlen=self.win_pitch.maxlen),
            win_roll=deque(self.win_roll, maxlen=self.win_roll.maxlen),
            last_yaw=self.last_yaw,
            last_pitch=self.last_pitch,
            last_roll=self.last_roll,
            last_residual=self.last_residual.copy(),
        )
        return c


def filter_update(
    state: FilterState,
    n: np.ndarray,
    cam: CameraParams,
    params: FilterParams,
    forced_g: tuple[float, float, float] | None = None,
) -> np.ndarray:
    """One update of the distortion-free cropping matrix Q.

    Angles are estimated from n^-1, low-passed by the mid-range windows (or
    replaced outright by forced_g for planner-driven runs), then
    Q <- R(g) * n * Q, its residual is blended toward identity by eta, and
    the recomposed Q becomes the new state.
    """
    n = geometry.normalize(np.asarray(n, dtype=np.float64))
    px, py = cam.principal_point
    yaw_in, pitch_in, roll_in = geometry.estimate_angles(geometry.invert(n), cam)
    if forced_g is None:
        g_yaw = midrange_push(state.win_yaw, yaw_in)
        g_pitch = midrange_push(state.win_pitch, pitch_in)
        g_roll = midrange_push(state.win_roll, roll_in)
    else:
        g_yaw, g_pitch, g_roll = forced_g
    q_new, a, b, g = _kernels.update_q_k(
        np.ascontiguousarray(state.q),
        np.ascontiguousarray(n),
        g_yaw,
        g_pitch,
        g_roll,
        params.eta,
        cam.focal_length,
        px,
        py,
    )
    state.q = q_new
    state.last_yaw = a
    state.last_pitch = b
    state.last_roll = g
    state.last_residual = geometry.decompose(q_new, cam).residual
    return q_new


def resync_after_ensure(state: FilterState, p: np.ndarray, d: np.ndarray, cam: CameraParams) -> None:
    """Fold a forced inside-correction of P back into Q (Q = D^-1 P).

    The mid-range windows are left untouched; only the accumulated path sees
    the correction.
    """
    state.q = geometry.normalize(geometry.invert(d) @ p)
    dec = geometry.decompose(state.q, cam)
    state.last_yaw = dec.yaw
    state.last_pitch = dec.pitch
    state.last_roll = dec.roll
    state.last_residual = dec.residual


@dataclass
class StepResult:
    p: np.ndarray
    q: np.ndarray
    choice: StitchChoice
    iterations: int
    yaw: float
    pitch: float
    roll: float


def stabilize_step(
    state: FilterState,
    n: np.ndarray,
    d: np.ndarray,
    cam: CameraParams,
    params: FilterParams,
    stitching: bool,
    m_prev_to_curr: np.ndarray | None = None,
    m_curr_to_next: np.ndarray | None = None,
    forced_g: tuple[float, float, float] | None = None,
) -> StepResult:
    """Filter update plus EnsureInside for one frame; mutates state.

    Returns the cropping matrix P (= D Q after the inside correction), the
    stitch decision and the iteration count (n_f counts frames where it is
    nonzero).
    """
    filter_update(state, n, cam, params, forced_g=forced_g)
    p = geometry.normalize(d @ state.q)

    w, h = cam.width, cam.height
    ox, oy, ow, oh = crop_rect(w, h, params.crop_ratio)
    if stitching:
        prev_q = sub_quad_prev(m_prev_to_curr, (w, h)) if m_prev_to_curr is not None else None
        next_q = sub_quad_next(m_curr_to_next, (w, h)) if m_curr_to_next is not None else None
    else:
        prev_q = None
        next_q = None
    p_new, iterations, choice, ok = _kernels.ensure_inside_k(
        np.ascontiguousarray(p),
        1 if stitching else 0,
        ox,
        oy,
        float(ow),
        float(oh),
        float(w),
        float(h),
        prev_q is not None,
        prev_q if prev_q is not None else _NO_QUAD,
        next_q is not None,
        next_q if next_q is not None else _NO_QUAD,
        int(params.samples_per_edge),
        params.eps,
        params.max_iterations,
    )
    if not ok:
        raise EnsureInsideError(f"not inside after {iterations} iterations")
    if iterations > 0:
        resync_after_ensure(state, p_new, d, cam)
    return StepResult(
        p=p_new,
        q=state.q.copy(),
        choice=StitchChoice(choice) if stitching else StitchChoice.NO_STITCH,
        iterations=iterations,
        yaw=state.last_yaw,
        pitch=state.last_pitch,
        roll=state.last_roll,
    )
