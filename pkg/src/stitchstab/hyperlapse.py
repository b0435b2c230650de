"""Frame-skipping hyperlapse planner.

Per-frame motion is precomputed into a sidecar; the main pass accumulates it
over each skip group and plans per-output-frame camera velocities by a
bounded tree search.  Every node carries a virtual stabilizer state; each
search step extends the deepest leaves with one constant-motion child and T
turn children whose velocities average the recent input motion over
doubling periods, then keeps only the best S by accumulated cost.  The cost
charges each turn, the off-center crop angles, and every frame where the
inside correction had to engage.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels, filtering, geometry, rolling_shutter
from .filtering import FilterParams, StitchChoice
from .geometry import CameraParams

SIDECAR_FORMAT = "stitchstab-motion/1"

# Default angle cost: 1 per 10 degrees, stored per radian.
COST_PER_RADIAN = 1.0 / (10.0 * math.pi / 180.0)


class SidecarError(RuntimeError):
    pass


@dataclass
class HyperlapseParams:
    skip: int = 4
    horizon: int = 64  # N: search depth before the first emission
    beam: int = 1024  # S: nodes kept per depth
    turns: int = 6  # T: turn children per leaf
    period_base: int = 2  # d: averaging periods d^1..d^T
    eps_turn: float = 1.0
    eps_outside: float = 16.0
    eps_yaw: float = COST_PER_RADIAN
    eps_pitch: float = COST_PER_RADIAN
    eps_roll: float = COST_PER_RADIAN

    def __post_init__(self):
        if min(self.skip, self.horizon, self.beam, self.turns, self.period_base) < 1:
            raise ValueError("hyperlapse parameters must be positive")
        if self.beam < self.turns + 1:
            raise ValueError("beam must be at least turns + 1")
        for v in (self.eps_turn, self.eps_outside, self.eps_yaw, self.eps_pitch, self.eps_roll):
            if v < 0:
                raise ValueError("cost weights must be non-negative")

    @classmethod
    def standard(cls, skip: int = 4) -> "HyperlapseParams":
        return cls(skip=skip, horizon=64, beam=1024, turns=6)

    @classmethod
    def lite(cls, skip: int = 4) -> "HyperlapseParams":
        return cls(skip=skip, horizon=64, beam=256, turns=6)


# ---------------------------------------------------------------------------
# Motion sidecar
# ---------------------------------------------------------------------------


def _f17(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class MotionSidecar:
    """Per-frame motion metadata: one homography per frame after the first."""

    width: int
    height: int
    focal_length: float
    sensor_height: float
    motions: list[np.ndarray] = field(default_factory=list)
    format_version: str = SIDECAR_FORMAT

    def camera(self) -> CameraParams:
        return CameraParams(
            focal_length=self.focal_length,
            width=self.width,
            height=self.height,
            sensor_height=self.sensor_height,
        )

    def save(self, path) -> None:
        path = Path(path)
        lines = [
            json.dumps(
                {
                    "format": self.format_version,
                    "width": self.width,
                    "height": self.height,
                    "focal": json.loads(_f17(self.focal_length)),
                    "sensor_height": json.loads(_f17(self.sensor_height)),
                },
                separators=(",", ":"),
            )
        ]
        for i, m in enumerate(self.motions):
            coeffs = ",".join(_f17(v) for v in np.asarray(m, dtype=np.float64).ravel())
            lines.append('{"frame":%d,"m":[%s]}' % (i + 1, coeffs))
        path.write_text("\n".join(lines) + "\n", encoding="ascii")

    @classmethod
    def load(cls, path) -> "MotionSidecar":
        path = Path(path)
        lines = [ln for ln in path.read_text(encoding="ascii").splitlines() if ln.strip()]
        if not lines:
            raise SidecarError(f"{path}: empty sidecar")
        head = json.loads(lines[0])
        if head.get("format") != SIDECAR_FORMAT:
            raise SidecarError(f"{path}: unsupported format {head.get('format')!r}")
        sc = cls(
            width=int(head["width"]),
            height=int(head["height"]),
            focal_length=float(head["focal"]),
            sensor_height=float(head["sensor_height"]),
        )
        for idx, ln in enumerate(lines[1:], start=1):
            rec = json.loads(ln)
            if int(rec["frame"]) != idx:
                raise SidecarError(f"{path}: frame records out of order at {idx}")
            m = np.array(rec["m"], dtype=np.float64).reshape(3, 3)
            sc.motions.append(m)
        return sc


def accumulate_skip(sidecar: MotionSidecar, start: int, skip: int) -> np.ndarray:
    """Composite motion across skip consecutive transitions from frame start.

    Motions map earlier coordinates to later ones, so the later transition
    multiplies on the left.
    """
    if start < 0 or start + skip > len(sidecar.motions):
        raise SidecarError(
            f"transitions {start + 1}..{start + skip} out of range "
            f"(have {len(sidecar.motions)})"
        )
    m = np.eye(3)
    for i in range(start, start + skip):
        m = geometry.compose(sidecar.motions[i], m)
    return m


def hl_frame_cost(
    yaw: float, pitch: float, roll: float, outside: bool, params: HyperlapseParams
) -> float:
    """Per-frame cost: off-center angles plus the outside-crop penalty."""
    cost = (
        params.eps_yaw * abs(yaw)
        + params.eps_pitch * abs(pitch)
        + params.eps_roll * abs(roll)
    )
    if outside:
        cost += params.eps_outside
    return cost


def average_motion(history: list[tuple[float, float, float]], period: int) -> tuple[float, float, float]:
    """Arithmetic mean of the last `period` angle triples (all when shorter)."""
    if not history:
        return (0.0, 0.0, 0.0)
    window = history[-period:]
    n = len(window)
    return (
        sum(a for a, _, _ in window) / n,
        sum(b for _, b, _ in window) / n,
        sum(g for _, _, g in window) / n,
    )


# ---------------------------------------------------------------------------
# Search tree
# ---------------------------------------------------------------------------


@dataclass
class SearchNode:
    __slots__ = ("parent", "q", "velocities", "cost", "depth", "outside", "choice", "order")
    parent: "SearchNode | None"
    q: np.ndarray
    velocities: tuple[float, float, float]
    cost: float
    depth: int
    outside: bool
    choice: int
    order: int

    def lineage_contains(self, ancestor: "SearchNode", max_up: int) -> bool:
        node = self
        for _ in range(max_up + 1):
            if node is ancestor:
                return True
            if node.parent is None:
                return False
            node = node.parent
        return False


@dataclass
class StepData:
    """Shared per-output-step inputs for the virtual stabilizers."""

    m: np.ndarray  # accumulated motion over the skip group
    n: np.ndarray
    d: np.ndarray
    angles: tuple[float, float, float]
    sub_prev: np.ndarray | None
    sub_next: np.ndarray | None
    m_next: np.ndarray | None = None  # next group's accumulated motion


class HyperlapsePlanner:
    """Bounded tree search over camera velocities (revised finite search).

    The first emission happens after exactly `horizon` search steps; from
    then on each step emits one node, and the stream end drains the
    remaining best path.
    """

    def __init__(
        self,
        sidecar: MotionSidecar,
        hp: HyperlapseParams,
        fp: FilterParams,
        stitching: bool = True,
    ):
        self.sidecar = sidecar
        self.hp = hp
        self.fp = fp
        self.stitching = stitching
        self.cam = sidecar.camera()
        self.steps = self._precompute_steps()
        self.history: list[tuple[float, float, float]] = []
        self.root = SearchNode(
            parent=None,
            q=np.eye(3),
            velocities=(0.0, 0.0, 0.0),
            cost=0.0,
            depth=0,
            outside=False,
            choice=int(StitchChoice.NO_STITCH),
            order=0,
        )
        self.leaves: list[SearchNode] = []
        self.height = 0
        self.next_step = 0  # index into self.steps
        self.search_steps = 0
        self.first_emission_after: int | None = None
        self._order = 1
        self._init_nodes()

    # -- construction ------------------------------------------------------

    def _precompute_steps(self) -> list[StepData]:
        sc = self.sidecar
        cam = self.cam
        skip = self.hp.skip
        k = len(sc.motions) // skip
        rs = rolling_shutter.RsState(cam)
        dims = (cam.width, cam.height)
        steps: list[StepData] = []
        for i in range(k):
            m = accumulate_skip(sc, i * skip, skip)
            d_curr, _d_prev, n = rs.update(m)
            angles = geometry.estimate_angles(geometry.invert(n), cam)
            steps.append(
                StepData(
                    m=m,
                    n=n,
                    d=d_curr,
                    angles=angles,
                    sub_prev=filtering.sub_quad_prev(m, dims),
                    sub_next=None,
                )
            )
        for i in range(k - 1):
            steps[i].m_next = steps[i + 1].m
            steps[i].sub_next = filtering.sub_quad_next(steps[i].m_next, dims)
        return steps

    def _init_nodes(self) -> None:
        """Seed the root with a zero-velocity child plus one per period."""
        velocs = [(0.0, 0.0, 0.0)]
        k = len(self.steps)
        for t in range(1, self.hp.turns + 1):
            period = self.hp.period_base**t
            head = [self.steps[i].angles for i in range(min(period, k))]
            if head:
                velocs.append(average_motion(head, len(head)))
            else:
                velocs.append((0.0, 0.0, 0.0))
        for v in velocs:
            node = SearchNode(
                parent=self.root,
                q=np.eye(3),
                velocities=v,
                cost=0.0,
                depth=1,
                outside=False,
                choice=int(StitchChoice.NO_STITCH),
                order=self._order,
            )
            self._order += 1
            self.leaves.append(node)
        self.height = 1

    # -- search ------------------------------------------------------------

    def search_each_frame(self) -> None:
        """Expand the max-depth leaves with the next step's data."""
        if self.next_step >= len(self.steps):
            raise SidecarError("no frames left to search")
        step = self.steps[self.next_step]
        self.history.append(step.angles)
        hp = self.hp
        fp = self.fp
        cam = self.cam

        n_par = len(self.leaves)
        n_cand = n_par * (hp.turns + 1)
        parent_q = np.stack([leaf.q for leaf in self.leaves])
        cand_parent = np.empty(n_cand, dtype=np.int64)
        cand_veloc = np.empty((n_cand, 3))
        cand_turn = np.empty(n_cand)
        turn_velocs = [
            average_motion(self.history, hp.period_base**t) for t in range(1, hp.turns + 1)
        ]
        idx = 0
        for pi, leaf in enumerate(self.leaves):
            cand_parent[idx] = pi
            cand_veloc[idx] = leaf.velocities
            cand_turn[idx] = 0.0
            idx += 1
            for tv in turn_velocs:
                cand_parent[idx] = pi
                cand_veloc[idx] = tv
                cand_turn[idx] = hp.eps_turn
                idx += 1

        ox, oy, ow, oh = filtering.crop_rect(cam.width, cam.height, fp.crop_ratio)
        px, py = cam.principal_point
        has_prev = self.stitching and step.sub_prev is not None
        has_next = self.stitching and step.sub_next is not None
        q_out, add_cost, ei, choice = _kernels.expand_candidates(
            parent_q,
            cand_parent,
            cand_veloc,
            cand_turn,
            np.ascontiguousarray(step.n),
            np.ascontiguousarray(step.d),
            fp.eta,
            cam.focal_length,
            px,
            py,
            ox,
            oy,
            float(ow),
            float(oh),
            float(cam.width),
            float(cam.height),
            1 if self.stitching else 0,
            has_prev,
            step.sub_prev if has_prev else filtering._NO_QUAD,
            has_next,
            step.sub_next if has_next else filtering._NO_QUAD,
            int(fp.samples_per_edge),
            fp.eps,
            fp.max_iterations,
            hp.eps_yaw,
            hp.eps_pitch,
            hp.eps_roll,
            hp.eps_outside,
        )
        total = np.array([self.leaves[cand_parent[i]].cost for i in range(n_cand)]) + add_cost
        order = np.argsort(total, kind="stable")[: hp.beam]

        new_leaves: list[SearchNode] = []
        for i in order:
            parent = self.leaves[int(cand_parent[i])]
            node = SearchNode(
                parent=parent,
                q=q_out[i],
                velocities=(
                    float(cand_veloc[i, 0]),
                    float(cand_veloc[i, 1]),
                    float(cand_veloc[i, 2]),
                ),
                cost=float(total[i]),
                depth=parent.depth + 1,
                outside=bool(ei[i]),
                choice=int(choice[i]),
                order=self._order,
            )
            self._order += 1
            new_leaves.append(node)
        self.leaves = new_leaves
        self.height += 1
        self.next_step += 1
        self.search_steps += 1

    def fix_state(self) -> SearchNode:
        """Emit the depth-1 ancestor of the best leaf and re-root there."""
        best = min(self.leaves, key=lambda n: (n.cost, n.order))
        path = []
        node = best
        while node is not self.root:
            path.append(node)
            node = node.parent
        ret = path[-1]  # node next to the root
        self.root = ret
        self.leaves = [lf for lf in self.leaves if lf.lineage_contains(ret, self.height)]
        self.height -= 1
        return ret

    def run(self):
        """Yield emitted nodes in output order (the initial node first)."""
        hp = self.hp
        total_steps = len(self.steps)
        first = min(hp.horizon, total_steps)
        for _ in range(first):
            self.search_each_frame()
        self.first_emission_after = self.search_steps
        yield self.fix_state()
        while self.next_step < total_steps:
            self.search_each_frame()
            yield self.fix_state()
        while self.height > 0:
            yield self.fix_state()

    def final_cost(self) -> float:
        """Cost of the best lineage currently alive."""
        best = min(self.leaves, key=lambda n: (n.cost, n.order)) if self.leaves else self.root
        return float(best.cost)
