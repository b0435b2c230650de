"""Homography algebra, rotation parameterization and polygon containment.

Homographies are plain (3, 3) float64 numpy arrays, row-major, normalized so
the bottom-right coefficient is 1 whenever it is nonzero.  Quads are (4, 2)
arrays of pixel coordinates in vertex order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels


class GeometryError(ValueError):
    """Raised for degenerate transforms: points at infinity, singular maps."""


@dataclass
class CameraParams:
    """Pinhole intrinsics used by the rotation model and the shutter model.

    focal_length and the principal point are in pixels; sensor_height is the
    effective scan height (at least the frame height, larger for faster
    scanning sensors).
    """

    focal_length: float
    width: int
    height: int
    principal_point: tuple[float, float] = field(default=None)  # type: ignore[assignment]
    sensor_height: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.focal_length <= 0:
            raise ValueError("focal_length must be positive")
        if self.principal_point is None:
            self.principal_point = (self.width / 2.0, self.height / 2.0)
        if self.sensor_height is None:
            self.sensor_height = 2.0 * self.height
        if self.sensor_height < self.height:
            raise ValueError("sensor_height must be at least the frame height")

    @classmethod
    def for_frame(cls, width, height, focal_length=None, sensor_height_factor=2.0):
        fl = float(focal_length) if focal_length else float(max(width, height))
        return cls(
            focal_length=fl,
            width=width,
            height=height,
            sensor_height=sensor_height_factor * height,
        )


@dataclass
class AngleDecomposition:
    """Yaw/pitch/roll estimate plus the residual soaking up everything else."""

    yaw: float
    pitch: float
    roll: float
    residual: np.ndarray


def identity() -> np.ndarray:
    return np.eye(3)


def translation(tx: float, ty: float) -> np.ndarray:
    h = np.eye(3)
    h[0, 2] = tx
    h[1, 2] = ty
    return h


def normalize(h: np.ndarray) -> np.ndarray:
    """Scale so h33 = 1 (no-op when h33 is zero)."""
    h = np.asarray(h, dtype=np.float64)
    w = h[2, 2]
    if w != 0.0:
        return h / w
    return h.copy()


def compose(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Normalized product a @ b (apply b first, then a)."""
    return normalize(np.asarray(a, dtype=np.float64) @ np.asarray(b, dtype=np.float64))


def invert(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    det = np.linalg.det(h)
    if not np.isfinite(det) or abs(det) < 1e-300:
        raise GeometryError("homography is singular")
    return normalize(np.linalg.inv(h))


def apply(h: np.ndarray, point) -> tuple[float, float]:
    """Apply h to a Euclidean point; raises when the image is at infinity."""
    x, y = float(point[0]), float(point[1])
    h = np.asarray(h, dtype=np.float64)
    w = h[2, 0] * x + h[2, 1] * y + h[2, 2]
    if abs(w) < 1e-12:
        raise GeometryError(f"point ({x}, {y}) maps to infinity")
    return (
        (h[0, 0] * x + h[0, 1] * y + h[0, 2]) / w,
        (h[1, 0] * x + h[1, 1] * y + h[1, 2]) / w,
    )


def rotation_homography(yaw: float, pitch: float, roll: float, cam: CameraParams) -> np.ndarray:
    """K * R_yaw * R_pitch * R_roll * K^-1 in pixel space.

    Pure roll is an in-plane rotation about the principal point; small yaw
    shifts the principal point by about focal_length * yaw along +x.
    """
    px, py = cam.principal_point
    return _kernels.rotation_homography_k(
        float(yaw), float(pitch), float(roll), cam.focal_length, px, py
    )


def estimate_angles(n_inv: np.ndarray, cam: CameraParams) -> tuple[float, float, float]:
    """Rough yaw/pitch/roll from a normalized homography.

    yaw = asin(c'/fl), pitch = -asin(f'/fl), roll = atan(d'/e') with the
    coefficients read off the h33-normalized matrix; the asin arguments clamp
    to [-1, 1] since out-of-range values mean gross motion, not a crash.
    """
    n_inv = np.ascontiguousarray(n_inv, dtype=np.float64)
    px, py = cam.principal_point
    return _kernels.estimate_angles_k(n_inv, cam.focal_length, px, py)


def decompose(q: np.ndarray, cam: CameraParams) -> AngleDecomposition:
    """Factor q into estimated rotations times a residual homography.

    rotation_homography(yaw, pitch, roll) @ residual reproduces q up to scale.
    """
    q = np.ascontiguousarray(q, dtype=np.float64)
    px, py = cam.principal_point
    yaw, pitch, roll, lam = _kernels.decompose_k(q, cam.focal_length, px, py)
    return AngleDecomposition(yaw=yaw, pitch=pitch, roll=roll, residual=lam)


def recompose(dec: AngleDecomposition, cam: CameraParams) -> np.ndarray:
    r = rotation_homography(dec.yaw, dec.pitch, dec.roll, cam)
    return compose(r, dec.residual)


def rect_quad(x0: float, y0: float, x1: float, y1: float) -> np.ndarray:
    return np.array(
        [[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
        dtype=np.float64,
    )


def frame_quad(width: float, height: float) -> np.ndarray:
    return rect_quad(0.0, 0.0, float(width), float(height))


def transform_quad(quad: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Apply h to every vertex; degenerate (infinite) vertices raise."""
    quad = np.asarray(quad, dtype=np.float64)
    out = np.empty_like(quad)
    for i in range(quad.shape[0]):
        out[i] = apply(h, quad[i])
    return out


def quad_positive_depth(quad: np.ndarray, h: np.ndarray) -> bool:
    """True when every vertex of quad keeps positive homogeneous depth under h."""
    quad = np.asarray(quad, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    w = h[2, 0] * quad[:, 0] + h[2, 1] * quad[:, 1] + h[2, 2]
    return bool(np.all(w > 1e-12))


def point_in_quad(quad: np.ndarray, x: float, y: float) -> bool:
    quad = np.ascontiguousarray(quad, dtype=np.float64)
    return bool(_kernels.point_in_quad_k(quad, float(x), float(y)))


def quad_inside_union(
    crop: np.ndarray, a: np.ndarray, b: np.ndarray, samples_per_edge: int = 64
) -> bool:
    """True iff every sampled boundary point of crop lies inside a or b.

    Boundary sampling instead of an exact polygon union: the union of two
    convex quads is non-convex and sampling stays robust and branch-free.
    """
    crop = np.ascontiguousarray(crop, dtype=np.float64)
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    return bool(_kernels.quad_inside_union_k(crop, a, b, int(samples_per_edge)))
