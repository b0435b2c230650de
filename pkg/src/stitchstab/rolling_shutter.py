"""Translational rolling-shutter model.

Row-sequential exposure skews each frame by the inter-frame translation; for
translation-dominant motion the skew is the matrix
``D = [[1, -c/H, 0], [0, 1 - f/H, 0], [0, 0, 1]]^-1`` with c, f the
translation coefficients of the normalized motion and H the effective sensor
scan height.  Motions factor as M = D_curr * N * D_prev^-1 with N the
distortion-free part.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .geometry import CameraParams

# Lower bound on 1 - f/H; keeps D well conditioned under absurd motion fits.
MIN_ROW_SCALE = 0.1


def distortion_matrix(m: np.ndarray, cam: CameraParams) -> np.ndarray:
    """Shutter-skew matrix built from the translational part of a motion.

    c and f are read from the h33-normalized motion; 1 - f/H clamps to at
    least 0.1 so the matrix stays invertible for outlier frames.
    """
    mn = geometry.normalize(m)
    c = mn[0, 2]
    f = mn[1, 2]
    h_eff = cam.sensor_height
    row_scale = 1.0 - f / h_eff
    if row_scale < MIN_ROW_SCALE:
        row_scale = MIN_ROW_SCALE
    pre = np.array(
        [
            [1.0, -c / h_eff, 0.0],
            [0.0, row_scale, 0.0],
            [0.0, 0.0, 1.0],
        ]
    )
    return geometry.normalize(np.linalg.inv(pre))


def undistorted_motion(m: np.ndarray, d_curr: np.ndarray, d_prev: np.ndarray) -> np.ndarray:
    """Distortion-free motion N with m = d_curr @ N @ d_prev^-1 up to scale."""
    return geometry.normalize(geometry.invert(d_curr) @ m @ d_prev)


@dataclass
class RsState:
    """Tracks the shutter matrix of the most recent frame.

    update() consumes one motion and returns (d_curr, d_prev, n); d_prev is
    identity at stream start.
    """

    cam: CameraParams
    d_curr: np.ndarray = field(default_factory=lambda: np.eye(3))

    def update(self, m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        d_prev = self.d_curr
        d_curr = distortion_matrix(m, self.cam)
        n = undistorted_motion(m, d_curr, d_prev)
        self.d_curr = d_curr
        return d_curr, d_prev, n

    def clone(self) -> "RsState":
        return RsState(cam=self.cam, d_curr=self.d_curr.copy())
