"""Global 2D perspective motion estimation between adjacent frames.

Coarse-to-fine over a box-filtered pyramid: Harris-Stephens corners on the
previous frame, SAD block matching seeded by the lower layer's transform, and
a normalized linear least-squares homography fit per level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels, geometry


class MotionError(RuntimeError):
    """Base class for motion-estimation failures."""


class NoMatchError(MotionError):
    """Search window fell entirely outside the target frame."""


class DegenerateMatchesError(MotionError):
    """Fewer than four usable matches, or a rank-deficient system."""


MIN_PLANE = 32  # smallest pyramid level edge, pixels


@dataclass
class Frame:
    """One video frame: 8-bit luma plus optional 4:2:0 chroma planes."""

    index: int
    luma: np.ndarray
    chroma_u: np.ndarray | None = None
    chroma_v: np.ndarray | None = None

    def __post_init__(self):
        if self.luma.dtype != np.uint8 or self.luma.ndim != 2:
            raise ValueError("luma must be a 2-D uint8 plane")
        h, w = self.luma.shape
        for plane in (self.chroma_u, self.chroma_v):
            if plane is not None and plane.shape != (h // 2, w // 2):
                raise ValueError("chroma planes must be half-size (4:2:0)")

    @property
    def width(self) -> int:
        return self.luma.shape[1]

    @property
    def height(self) -> int:
        return self.luma.shape[0]

    @property
    def has_chroma(self) -> bool:
        return self.chroma_u is not None and self.chroma_v is not None


@dataclass
class PointMatch:
    source: tuple[int, int]
    dest: tuple[int, int]
    residual: int


@dataclass
class MotionConfig:
    levels: int = 4
    block: int = 16
    radius: int = 8
    max_features: int = 256
    trim_factor: float = 2.0  # drop matches with SAD above trim_factor * median


@dataclass
class MotionEstimate:
    homography: np.ndarray
    confident: bool = True


def build_pyramid(frame: Frame | np.ndarray, levels: int) -> list[np.ndarray]:
    """Box-filtered half-resolution pyramid; level 0 is full resolution.

    The level count clamps so the smallest level stays at least 32x32.
    Downsampling is the exact integer mean (a+b+c+d+2)//4 of 2x2 blocks.
    """
    plane = frame.luma if isinstance(frame, Frame) else frame
    if plane.shape[0] < MIN_PLANE or plane.shape[1] < MIN_PLANE:
        raise MotionError(f"frame {plane.shape[1]}x{plane.shape[0]} is smaller than 32x32")
    if levels < 1:
        raise MotionError("levels must be >= 1")
    out = [plane]
    for _ in range(levels - 1):
        prev = out[-1]
        hh, ww = prev.shape[0] // 2, prev.shape[1] // 2
        if hh < MIN_PLANE or ww < MIN_PLANE:
            break
        trimmed = prev[: 2 * hh, : 2 * ww].astype(np.uint32)
        blocks = trimmed.reshape(hh, 2, ww, 2)
        summed = blocks[:, 0, :, 0] + blocks[:, 0, :, 1] + blocks[:, 1, :, 0] + blocks[:, 1, :, 1]
        out.append(((summed + 2) // 4).astype(np.uint8))
    return out


def harris_response(plane: np.ndarray, k: float = 0.05, window: int = 5) -> np.ndarray:
    """Harris-Stephens corner response det(M) - k*trace(M)^2 per pixel."""
    f = plane.astype(np.float64)
    gx = np.zeros_like(f)
    gy = np.zeros_like(f)
    gx[:, 1:-1] = (f[:, 2:] - f[:, :-2]) * 0.5
    gy[1:-1, :] = (f[2:, :] - f[:-2, :]) * 0.5

    def box(a):
        # window x window box sum via integral image
        pad = window // 2
        padded = np.pad(a, pad + 1, mode="constant")
        ii = padded.cumsum(axis=0).cumsum(axis=1)
        s = (
            ii[window:, window:]
            - ii[:-window, window:]
            - ii[window:, :-window]
            + ii[:-window, :-window]
        )
        return s[: a.shape[0], : a.shape[1]]

    sxx = box(gx * gx)
    syy = box(gy * gy)
    sxy = box(gx * gy)
    return sxx * syy - sxy * sxy - k * (sxx + syy) ** 2


def detect_features(
    plane: np.ndarray,
    max_points: int = 256,
    border: int = 8,
    min_response: float = 1e4,
) -> np.ndarray:
    """Sparse Harris corners, non-maximum suppressed on a cell grid.

    The plane is divided into roughly sqrt(max_points)^2 cells and only the
    strongest corner above threshold survives per cell, which keeps the
    points spread out.  Returns an (N, 2) int array of x, y positions.
    """
    h, w = plane.shape
    if h < MIN_PLANE or w < MIN_PLANE:
        raise MotionError("plane smaller than 32x32")
    resp = harris_response(plane)
    if border > 0:
        resp[:border, :] = -np.inf
        resp[-border:, :] = -np.inf
        resp[:, :border] = -np.inf
        resp[:, -border:] = -np.inf

    grid = max(1, int(np.ceil(np.sqrt(max_points))))
    cell_h = max(1, int(np.ceil(h / grid)))
    cell_w = max(1, int(np.ceil(w / grid)))
    picks = []
    for cy in range(0, h, cell_h):
        for cx in range(0, w, cell_w):
            cell = resp[cy : cy + cell_h, cx : cx + cell_w]
            idx = int(np.argmax(cell))
            r, c = divmod(idx, cell.shape[1])
            val = cell[r, c]
            if np.isfinite(val) and val > min_response:
                picks.append((float(val), cx + c, cy + r))
    picks.sort(key=lambda t: (-t[0], t[2], t[1]))
    pts = [(x, y) for _, x, y in picks[:max_points]]
    return np.array(pts, dtype=np.int64).reshape(-1, 2)


def track_block(
    prev: np.ndarray,
    curr: np.ndarray,
    point,
    init=(0, 0),
    radius: int = 8,
    block: int = 16,
) -> PointMatch:
    """SAD block match of one point; destination minimizes the sum of
    absolute differences over the (2*radius+1)^2 window around point+init.

    Ties break to the smallest displacement and then row-major scan order so
    results are reproducible.
    """
    px, py = int(point[0]), int(point[1])
    bx, by, sad, found = _kernels.sad_search_k(
        prev, curr, px, py, int(round(init[0])), int(round(init[1])), int(radius), int(block)
    )
    if not found:
        raise NoMatchError(f"no valid SAD window around ({px}, {py})")
    return PointMatch(source=(px, py), dest=(bx, by), residual=sad)


def fit_homography(matches: list[PointMatch] | tuple) -> np.ndarray:
    """Least squares fit of the linearized projective constraints.

    Both point sets are normalized to zero mean and unit RMS radius before
    solving, and the result is denormalized with h33 = 1.
    """
    if len(matches) < 4:
        raise DegenerateMatchesError(f"need at least 4 matches, got {len(matches)}")
    src = np.array([m.source for m in matches], dtype=np.float64)
    dst = np.array([m.dest for m in matches], dtype=np.float64)
    return fit_homography_points(src, dst)


def _norm_transform(pts: np.ndarray) -> np.ndarray:
    mean = pts.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((pts - mean) ** 2, axis=1)))
    if rms < 1e-12:
        raise DegenerateMatchesError("all points coincide")
    s = 1.0 / rms
    t = np.array([[s, 0.0, -s * mean[0]], [0.0, s, -s * mean[1]], [0.0, 0.0, 1.0]])
    return t


def fit_homography_points(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    t1 = _norm_transform(src)
    t2 = _norm_transform(dst)
    ones = np.ones((src.shape[0], 1))
    sn = (np.hstack([src, ones]) @ t1.T)[:, :2]
    dn = (np.hstack([dst, ones]) @ t2.T)[:, :2]

    n = src.shape[0]
    a = np.zeros((2 * n, 8))
    b = np.zeros(2 * n)
    x, y = sn[:, 0], sn[:, 1]
    u, v = dn[:, 0], dn[:, 1]
    a[0::2, 0] = x
    a[0::2, 1] = y
    a[0::2, 2] = 1.0
    a[0::2, 6] = -u * x
    a[0::2, 7] = -u * y
    b[0::2] = u
    a[1::2, 3] = x
    a[1::2, 4] = y
    a[1::2, 5] = 1.0
    a[1::2, 6] = -v * x
    a[1::2, 7] = -v * y
    b[1::2] = v

    sol, _res, rank, _sv = np.linalg.lstsq(a, b, rcond=None)
    if rank < 8:
        raise DegenerateMatchesError(f"rank-deficient system (rank {rank})")
    hn = np.array(
        [
            [sol[0], sol[1], sol[2]],
            [sol[3], sol[4], sol[5]],
            [sol[6], sol[7], 1.0],
        ]
    )
    h = np.linalg.inv(t2) @ hn @ t1
    if abs(h[2, 2]) < 1e-12:
        raise DegenerateMatchesError("fit produced h33 ~ 0")
    return geometry.normalize(h)


def _upscale_h(h: np.ndarray) -> np.ndarray:
    s = np.diag([2.0, 2.0, 1.0])
    return geometry.normalize(s @ h @ np.diag([0.5, 0.5, 1.0]))


def calc_motion(prev: Frame, curr: Frame, cfg: MotionConfig | None = None) -> MotionEstimate:
    """Perspective motion from the previous to the current frame.

    Coarse-to-fine: per level, corners detected on prev are tracked with
    initial vectors from the upscaled lower-level homography, matches with a
    SAD residual above trim_factor * median are dropped, and the survivors
    feed the least-squares fit.  Falls back to identity (confident=False)
    when every level degenerates.
    """
    cfg = cfg or MotionConfig()
    if prev.luma.shape != curr.luma.shape:
        raise MotionError("frame dimensions differ")
    pyr_prev = build_pyramid(prev, cfg.levels)
    pyr_curr = build_pyramid(curr, cfg.levels)

    h = np.eye(3)
    any_fit = False
    for level in range(len(pyr_prev) - 1, -1, -1):
        pl = pyr_prev[level]
        cl = pyr_curr[level]
        pts = detect_features(pl, cfg.max_features, border=cfg.block // 2 + 1)
        if pts.shape[0] < 4:
            if level > 0:
                h = _upscale_h(h)
            continue
        # Seed each block search with the current estimate's displacement.
        ones = np.ones((pts.shape[0], 1))
        proj = np.hstack([pts.astype(np.float64), ones]) @ h.T
        w = proj[:, 2:3]
        good_depth = w[:, 0] > 1e-9
        inits = np.zeros((pts.shape[0], 2), dtype=np.int64)
        inits[good_depth] = np.round(
            proj[good_depth, :2] / w[good_depth] - pts[good_depth]
        ).astype(np.int64)

        dst, sad, ok = _kernels.track_points_k(
            pl, cl, pts, inits, int(cfg.radius), int(cfg.block)
        )
        if not ok.any():
            if level > 0:
                h = _upscale_h(h)
            continue
        pts_ok = pts[ok]
        dst_ok = dst[ok]
        sad_ok = sad[ok]
        med = np.median(sad_ok)
        keep = sad_ok <= cfg.trim_factor * med
        if keep.sum() >= 4:
            pts_ok = pts_ok[keep]
            dst_ok = dst_ok[keep]
        try:
            h = fit_homography_points(pts_ok.astype(np.float64), dst_ok.astype(np.float64))
            any_fit = True
        except DegenerateMatchesError:
            pass
        if level > 0:
            h = _upscale_h(h)

    if not any_fit:
        return MotionEstimate(homography=np.eye(3), confident=False)
    return MotionEstimate(homography=h, confident=True)
