"""Synthetic shaky sequences with exact ground truth.

Each frame is a rotated view into a large still image: the per-frame
yaw/pitch/roll path is a sum of low-frequency sinusoids plus white noise,
and an optional translational shutter skew distorts each frame row-wise.
Because the renderer applies exactly the camera model the stabilizer
assumes, the analytic frame-to-frame motions are available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels, geometry
from .geometry import CameraParams
from .motion import Frame


class SynthError(ValueError):
    pass


def _resize_bilinear(a: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    ys = np.linspace(0.0, a.shape[0] - 1.0, out_h)
    xs = np.linspace(0.0, a.shape[1] - 1.0, out_w)
    y0 = np.clip(np.floor(ys).astype(int), 0, a.shape[0] - 2)
    x0 = np.clip(np.floor(xs).astype(int), 0, a.shape[1] - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    p00 = a[np.ix_(y0, x0)]
    p01 = a[np.ix_(y0, x0 + 1)]
    p10 = a[np.ix_(y0 + 1, x0)]
    p11 = a[np.ix_(y0 + 1, x0 + 1)]
    return p00 * (1 - fy) * (1 - fx) + p01 * (1 - fy) * fx + p10 * fy * (1 - fx) + p11 * fy * fx


def procedural_source(width: int, height: int, seed: int) -> np.ndarray:
    """Trackable texture: smooth blobs plus fine detail, deterministic."""
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(0.0, 255.0, size=(height // 24 + 2, width // 24 + 2))
    mid = rng.uniform(0.0, 255.0, size=(height // 6 + 2, width // 6 + 2))
    fine = rng.uniform(0.0, 255.0, size=(height, width))
    img = (
        0.45 * _resize_bilinear(coarse, height, width)
        + 0.35 * _resize_bilinear(mid, height, width)
        + 0.20 * fine
    )
    return np.clip(img, 0, 255).astype(np.uint8)


@dataclass
class SynthSpec:
    """Deterministic recipe for a shaky clip with ground truth.

    amp_deg drives slow sinusoids (drift the stabilizer should follow) and
    shake_deg a fast 8-20 frame band (bounce it should cancel); noise_deg is
    white per-frame jitter.
    """

    frames: int = 300
    width: int = 480
    height: int = 270
    amp_deg: tuple[float, float, float] = (3.0, 2.0, 1.0)  # yaw, pitch, roll sinusoid amplitude
    shake_deg: tuple[float, float, float] = (0.0, 0.0, 0.0)  # fast oscillation band
    impulse_deg: tuple[float, float, float] = (0.0, 0.0, 0.0)  # step-like kicks (heel strikes)
    impulse_rate: float = 0.1  # kicks per frame
    noise_deg: float = 0.3  # white high-frequency component
    seed: int = 0
    focal_length: float | None = None
    rs_sensor_height: float | None = None  # enables shutter skew when set
    source: str | np.ndarray | None = None  # path or array; procedural when None

    def __post_init__(self):
        if self.frames < 2:
            raise SynthError("need at least 2 frames")
        if self.width < 32 or self.height < 32:
            raise SynthError("frames must be at least 32x32")


@dataclass
class SynthResult:
    frames: list[Frame]
    angles: np.ndarray  # (n, 3) yaw/pitch/roll radians
    motions: list[np.ndarray]  # analytic frame-to-frame homographies (n-1)
    cam: CameraParams


def angle_path(spec: SynthSpec) -> np.ndarray:
    """Slow sinusoids plus a fast shake band plus white noise, per axis."""
    rng = np.random.default_rng(spec.seed)
    n = spec.frames
    t = np.arange(n)
    out = np.zeros((n, 3))
    for axis in range(3):
        amp = np.deg2rad(spec.amp_deg[axis])
        for harmonic, scale in ((0, 1.0), (1, 0.4)):
            period = rng.uniform(30.0, 90.0) / (harmonic + 1)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            out[:, axis] += amp * scale * np.sin(2.0 * np.pi * t / period + phase)
        shake = np.deg2rad(spec.shake_deg[axis])
        period = rng.uniform(8.0, 12.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        out[:, axis] += shake * np.sin(2.0 * np.pi * t / period + phase)
        out[:, axis] += np.deg2rad(spec.noise_deg) * rng.standard_normal(n)
    # step-like kicks decaying through an AR(1): displacement extremes and
    # inter-frame motion coincide, like footstep transients
    if any(v > 0 for v in spec.impulse_deg):
        events = rng.random(n) < spec.impulse_rate
        kick = rng.standard_normal((n, 3))
        x = np.zeros(3)
        for i in range(n):
            x *= 0.82
            if events[i]:
                x = x + kick[i] * np.deg2rad(spec.impulse_deg)
            out[i] += x
    return out


def _load_source(spec: SynthSpec) -> np.ndarray:
    if spec.source is None:
        # 2x the frame plus swing room keeps every view inside
        return procedural_source(spec.width * 2, spec.height * 2, spec.seed + 1)
    if isinstance(spec.source, np.ndarray):
        return spec.source
    from PIL import Image

    img = Image.open(Path(spec.source)).convert("L")
    return np.asarray(img, dtype=np.uint8)


def _shutter_skew(n_mat: np.ndarray, sensor_height: float) -> np.ndarray:
    """Forward skew matrix from the translational components of a motion."""
    nn = geometry.normalize(n_mat)
    pre = np.array(
        [
            [1.0, -nn[0, 2] / sensor_height, 0.0],
            [0.0, max(1.0 - nn[1, 2] / sensor_height, 0.1), 0.0],
            [0.0, 0.0, 1.0],
        ]
    )
    return geometry.normalize(np.linalg.inv(pre))


def generate(spec: SynthSpec) -> SynthResult:
    """Render the clip and return frames plus analytic ground truth.

    Raises when any view would sample outside the source image.
    """
    source = _load_source(spec)
    sh, sw = source.shape
    if sh < spec.height or sw < spec.width:
        raise SynthError(f"source {sw}x{sh} smaller than frame {spec.width}x{spec.height}")
    cam = CameraParams.for_frame(spec.width, spec.height, focal_length=spec.focal_length)
    angles = angle_path(spec)

    center = geometry.translation((sw - spec.width) / 2.0, (sh - spec.height) / 2.0)
    rotations = [
        geometry.rotation_homography(a, b, g, cam) for a, b, g in angles
    ]

    # shutter skew per frame from the rotation-only relative motions
    skews = [np.eye(3)]
    for i in range(1, spec.frames):
        n_rel = geometry.compose(geometry.invert(rotations[i]), rotations[i - 1])
        if spec.rs_sensor_height is not None:
            skews.append(_shutter_skew(n_rel, spec.rs_sensor_height))
        else:
            skews.append(np.eye(3))

    frames: list[Frame] = []
    corners = geometry.frame_quad(spec.width, spec.height)
    for i in range(spec.frames):
        view = geometry.compose(center, geometry.compose(rotations[i], geometry.invert(skews[i])))
        quad = geometry.transform_quad(corners, view)
        if (
            quad[:, 0].min() < 0.0
            or quad[:, 1].min() < 0.0
            or quad[:, 0].max() > sw - 1.0
            or quad[:, 1].max() > sh - 1.0
        ):
            raise SynthError(
                f"frame {i}: view exits the source image; lower the amplitudes "
                f"or provide a larger source"
            )
        luma, _valid = _kernels.warp_bilinear_k(
            np.ascontiguousarray(source), np.ascontiguousarray(view), spec.height, spec.width
        )
        frames.append(Frame(index=i, luma=luma))

    motions = []
    for i in range(1, spec.frames):
        n_rel = geometry.compose(geometry.invert(rotations[i]), rotations[i - 1])
        m = geometry.compose(
            skews[i], geometry.compose(n_rel, geometry.invert(skews[i - 1]))
        )
        motions.append(m)
    return SynthResult(frames=frames, angles=angles, motions=motions, cam=cam)
