"""Full-pipeline orchestration: analyze, stabilize, hyperlapse, synth, eval.

The stabilize loop runs motion estimation, the shutter factorization, the
low-pass filter and the inside correction per frame, then either crops the
main frame or stitches it with the chosen neighbor along the optimal seam.
Stitching needs the next frame's motion, so output trails input by one
frame.  Rendering streams through a bounded queue to a writer thread; all
numeric decisions happen in the single processing thread, so threading
never changes the output.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import filtering, framesio, geometry, hyperlapse, motion, report, rolling_shutter, seam, synth
from .filtering import FilterParams, StitchChoice
from .geometry import CameraParams
from .hyperlapse import HyperlapseParams, MotionSidecar
from .motion import Frame, MotionConfig
from .report import EvalReport, FrameRecord


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    mode: str = "stabilize"  # stabilize | hyperlapse | analyze | eval | synth
    input: str | None = None
    output: str | None = None
    crop_ratio: float = 0.9
    stitching: bool = True
    focal_length: float | None = None
    sensor_height_factor: float = 2.0
    filter_params: FilterParams = field(default_factory=FilterParams)
    hyper_params: HyperlapseParams = field(default_factory=HyperlapseParams)
    motion_config: MotionConfig = field(default_factory=MotionConfig)
    sidecar: str | None = None
    dump_seams: str | None = None
    report_path: str | None = None
    figures: bool = True
    timing: bool = False
    seed: int = 0
    synth_spec: synth.SynthSpec | None = None

    def __post_init__(self):
        if not (0.0 < self.crop_ratio <= 1.0):
            raise ValueError("crop ratio must be in (0, 1]")
        self.filter_params.crop_ratio = self.crop_ratio


class _StageClock:
    def __init__(self):
        self.seconds: dict[str, float] = {}
        self.frames = 0

    def add(self, stage: str, dt: float) -> None:
        self.seconds[stage] = self.seconds.get(stage, 0.0) + dt

    def fps(self) -> dict[str, float]:
        out = {}
        for stage, sec in self.seconds.items():
            out[stage] = self.frames / sec if sec > 0 else float("inf")
        return out


def _camera_for(frames: list[Frame], cfg: PipelineConfig) -> CameraParams:
    f0 = frames[0]
    return CameraParams.for_frame(
        f0.width, f0.height, focal_length=cfg.focal_length,
        sensor_height_factor=cfg.sensor_height_factor,
    )


def _chroma_h(h: np.ndarray) -> np.ndarray:
    half = np.diag([0.5, 0.5, 1.0])
    return geometry.normalize(half @ h @ np.diag([2.0, 2.0, 1.0]))


def _warp_frame(frame: Frame, h: np.ndarray, out_dims, index: int):
    """Full-resolution warp of luma (+ chroma) through h (output -> input)."""
    luma_w = seam.warp(frame.luma, h, out_dims, scale=1)
    chroma = None
    if frame.has_chroma:
        hc = _chroma_h(h)
        cdims = (out_dims[0] // 2, out_dims[1] // 2)
        u = seam.warp(frame.chroma_u, hc, cdims, scale=1)
        v = seam.warp(frame.chroma_v, hc, cdims, scale=1)
        chroma = (u, v)
    return luma_w, chroma


def _plain_crop(frame: Frame, p: np.ndarray, embed: np.ndarray, out_dims, index: int) -> tuple[Frame, int]:
    h_main = geometry.compose(p, embed)
    luma_w, chroma = _warp_frame(frame, h_main, out_dims, index)
    invalid = int((~luma_w.valid).sum())
    out_u = out_v = None
    if chroma is not None:
        (u, v) = chroma
        out_u = np.where(u.valid, u.luma, 128).astype(np.uint8)
        out_v = np.where(v.valid, v.luma, 128).astype(np.uint8)
    out = Frame(index=index, luma=luma_w.luma, chroma_u=out_u, chroma_v=out_v)
    return out, invalid


@dataclass
class _StitchDebug:
    band: np.ndarray | None = None
    label: np.ndarray | None = None
    deficit: np.ndarray | None = None


def _stitch_frame(
    main: Frame,
    sub: Frame,
    p: np.ndarray,
    h_sub_from_out: np.ndarray,
    embed: np.ndarray,
    out_dims,
    index: int,
    band_factor: float = 3.0,
    debug: _StitchDebug | None = None,
) -> tuple[Frame, int]:
    """Warp main and sub into output space and merge along the optimal seam.

    Falls back to a naive fill (main where valid, else sub) when the deficit
    classifies as the closed ring or no finite seam exists.
    """
    h_main = geometry.compose(p, embed)
    main_q = seam.warp(main.luma, h_main, out_dims, scale=4)
    sub_q = seam.warp(sub.luma, h_sub_from_out, out_dims, scale=4)

    qw = out_dims[0] // 4
    qh = out_dims[1] // 4
    deficit = seam.deficit_mask(main_q)
    label_full = np.zeros((out_dims[1], out_dims[0]), dtype=bool)
    band = None
    if deficit.any():
        try:
            shape = seam.classify_deficit(deficit)
            if shape.kind != "O":
                graph = seam.build_search_region(shape, band_factor)
                graph = seam.edge_costs(main_q, sub_q, graph)
                sm = seam.dijkstra_seam(graph)
                poly = seam.seam_sub_polygon(sm, deficit)
                label_full = seam.rasterize_polygon(poly, out_dims[0], out_dims[1], scale=4)
                band = graph.band
        except seam.SeamError:
            pass  # naive fill below

    main_w, main_chroma = _warp_frame(main, h_main, out_dims, index)
    sub_w, sub_chroma = _warp_frame(sub, h_sub_from_out, out_dims, index)
    chroma_pair = None
    if main_chroma is not None and sub_chroma is not None:
        chroma_pair = (main_chroma, sub_chroma)
    luma, chroma, invalid = seam.merge(main_w, sub_w, label_full, chroma=chroma_pair)
    out_u, out_v = chroma if chroma is not None else (None, None)
    if debug is not None:
        debug.band = band
        debug.label = label_full
        debug.deficit = deficit
    out = Frame(index=index, luma=luma, chroma_u=out_u, chroma_v=out_v)
    return out, invalid


def _dump_seam_overlay(path: Path, out_frame: Frame, dbg: _StitchDebug) -> None:
    """Index-color overlay: search band yellow, sub-pasted pink, deficit blue."""
    h, w = out_frame.luma.shape
    rgb = np.stack([out_frame.luma] * 3, axis=-1).astype(np.uint8)

    def upscale(mask_q):
        return np.kron(mask_q, np.ones((4, 4), dtype=bool))[:h, :w]

    if dbg.band is not None:
        m = upscale(dbg.band)
        rgb[m] = (0.5 * rgb[m] + 0.5 * np.array([255, 230, 60])).astype(np.uint8)
    if dbg.label is not None:
        m = dbg.label
        rgb[m] = (0.5 * rgb[m] + 0.5 * np.array([240, 130, 200])).astype(np.uint8)
    if dbg.deficit is not None:
        m = upscale(dbg.deficit)
        rgb[m] = (0.35 * rgb[m] + 0.65 * np.array([60, 80, 255])).astype(np.uint8)
    Image.fromarray(rgb, mode="RGB").save(path)


class _WriterThread:
    """Bounded handoff queue feeding the encode stage."""

    def __init__(self, sink: framesio.FrameWriter | None):
        self.sink = sink
        self.q: queue.Queue = queue.Queue(maxsize=4)
        self.seconds = 0.0
        self.error: Exception | None = None
        self.thread = threading.Thread(target=self._run, daemon=True)
        self.thread.start()

    def _run(self):
        while True:
            item = self.q.get()
            if item is None:
                return
            if self.sink is None or self.error is not None:
                continue
            t0 = time.perf_counter()
            try:
                self.sink.write(item)
            except Exception as exc:  # surfaced on join
                self.error = exc
            self.seconds += time.perf_counter() - t0

    def put(self, frame: Frame) -> None:
        self.q.put(frame)

    def join(self) -> None:
        self.q.put(None)
        self.thread.join()
        if self.sink is not None:
            self.sink.close()
        if self.error is not None:
            raise self.error


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def analyze_frames(frames: list[Frame], cfg: PipelineConfig) -> MotionSidecar:
    cam = _camera_for(frames, cfg)
    sc = MotionSidecar(
        width=cam.width,
        height=cam.height,
        focal_length=cam.focal_length,
        sensor_height=cam.sensor_height,
    )
    for i in range(1, len(frames)):
        est = motion.calc_motion(frames[i - 1], frames[i], cfg.motion_config)
        sc.motions.append(est.homography)
    return sc


def run_analyze(cfg: PipelineConfig) -> MotionSidecar:
    frames = framesio.read_frames(cfg.input)
    if len(frames) < 2:
        raise PipelineError("need at least 2 frames")
    sc = analyze_frames(frames, cfg)
    if cfg.sidecar:
        sc.save(cfg.sidecar)
    return sc


# ---------------------------------------------------------------------------
# stabilize
# ---------------------------------------------------------------------------


def run_stabilize(cfg: PipelineConfig, frames: list[Frame] | None = None) -> EvalReport:
    clock = _StageClock()
    t0 = time.perf_counter()
    if frames is None:
        t = time.perf_counter()
        frames = framesio.read_frames(cfg.input)
        clock.add("decode", time.perf_counter() - t)
    if len(frames) < 2:
        raise PipelineError("need at least 2 frames")

    cam = _camera_for(frames, cfg)
    fp = cfg.filter_params
    out_dims = filtering.output_dims(cam.width, cam.height, cfg.crop_ratio)
    if frames[0].has_chroma and (out_dims[0] % 2 or out_dims[1] % 2):
        raise PipelineError(
            f"output {out_dims[0]}x{out_dims[1]} is odd; 4:2:0 chroma needs even "
            f"dimensions (pick a crop ratio with an even rounded output)"
        )
    ox, oy, ow, oh = filtering.crop_rect(cam.width, cam.height, cfg.crop_ratio)
    embed = geometry.translation(ox, oy)
    dims = (cam.width, cam.height)

    state = filtering.FilterState.initial(fp)
    rs_state = rolling_shutter.RsState(cam)
    writer = _WriterThread(framesio.FrameWriter(cfg.output) if cfg.output else None)
    dump_dir = Path(cfg.dump_seams) if cfg.dump_seams else None
    if dump_dir:
        dump_dir.mkdir(parents=True, exist_ok=True)

    rep = EvalReport(total_frames=len(frames))
    n_f = 0
    lockstep_conv = 0
    lockstep_stitch = 0
    dominance_violations = 0
    stitch_invalid = 0
    total_invalid = 0
    choices = {c.name: 0 for c in StitchChoice}
    angles_path = []

    # motions[i] maps frame i-1 coordinates to frame i (identity for frame 0)
    t = time.perf_counter()
    motions = [np.eye(3)]
    for i in range(1, len(frames)):
        est = motion.calc_motion(frames[i - 1], frames[i], cfg.motion_config)
        motions.append(est.homography)
    clock.add("motion", time.perf_counter() - t)

    try:
        for i, frame in enumerate(frames):
            t = time.perf_counter()
            m = motions[i]
            m_next = motions[i + 1] if i + 1 < len(frames) else None
            d_curr, d_prev, n = rs_state.update(m)

            # lockstep predicate diagnostics on the pre-correction crop
            filtering.filter_update(state, n, cam, fp)
            p0 = geometry.normalize(d_curr @ state.q)
            crop0 = filtering.crop_boundary(p0, cfg.crop_ratio, dims)
            conv_ok = filtering.is_inside_conventional(crop0, dims)
            stitch0 = filtering.is_inside_stitching(
                p0, m if i > 0 else None, m_next, dims, cfg.crop_ratio, fp.samples_per_edge
            )
            if not conv_ok:
                lockstep_conv += 1
            if stitch0 == StitchChoice.FAIL:
                lockstep_stitch += 1
                if conv_ok:
                    dominance_violations += 1

            prev_q = filtering.sub_quad_prev(m, dims) if (cfg.stitching and i > 0) else None
            next_q = (
                filtering.sub_quad_next(m_next, dims)
                if (cfg.stitching and m_next is not None)
                else None
            )
            p_new, iterations, choice_i, ok = filtering._kernels.ensure_inside_k(
                np.ascontiguousarray(p0),
                1 if cfg.stitching else 0,
                ox,
                oy,
                float(ow),
                float(oh),
                float(cam.width),
                float(cam.height),
                prev_q is not None,
                prev_q if prev_q is not None else filtering._NO_QUAD,
                next_q is not None,
                next_q if next_q is not None else filtering._NO_QUAD,
                int(fp.samples_per_edge),
                fp.eps,
                fp.max_iterations,
            )
            if not ok:
                raise filtering.EnsureInsideError(f"frame {i}: inside correction diverged")
            if iterations > 0:
                filtering.resync_after_ensure(state, p_new, d_curr, cam)
                n_f += 1
            choice = StitchChoice(choice_i) if cfg.stitching else StitchChoice.NO_STITCH
            choices[choice.name] += 1
            angles_path.append((state.last_yaw, state.last_pitch, state.last_roll))
            clock.add("filter", time.perf_counter() - t)

            t = time.perf_counter()
            dbg = _StitchDebug() if dump_dir else None
            if choice == StitchChoice.STITCH_PREV and i > 0:
                h_sub = geometry.compose(geometry.invert(m), geometry.compose(p_new, embed))
                out, invalid = _stitch_frame(
                    frame, frames[i - 1], p_new, h_sub, embed, out_dims, i, debug=dbg
                )
                stitch_invalid += invalid
            elif choice == StitchChoice.STITCH_NEXT and m_next is not None:
                h_sub = geometry.compose(m_next, geometry.compose(p_new, embed))
                out, invalid = _stitch_frame(
                    frame, frames[i + 1], p_new, h_sub, embed, out_dims, i, debug=dbg
                )
                stitch_invalid += invalid
            else:
                out, invalid = _plain_crop(frame, p_new, embed, out_dims, i)
            total_invalid += invalid
            clock.add("render", time.perf_counter() - t)
            if dump_dir and dbg is not None and choice in (
                StitchChoice.STITCH_PREV,
                StitchChoice.STITCH_NEXT,
            ):
                _dump_seam_overlay(dump_dir / f"frame_{i:06d}_seam.png", out, dbg)

            rep.frames.append(
                FrameRecord(
                    index=i,
                    yaw=state.last_yaw,
                    pitch=state.last_pitch,
                    roll=state.last_roll,
                    ensure_iterations=iterations,
                    choice=choice.name,
                    invalid_pixels=invalid,
                )
            )
            writer.put(out)
            clock.frames += 1
    finally:
        writer.join()
    clock.add("encode", writer.seconds)
    clock.add("total", time.perf_counter() - t0)

    angles = np.array(angles_path)
    jit = report.jitter_score(angles)
    rep.jitter = jit
    if cfg.stitching:
        rep.n_f_stitching = n_f
        rep.jitter_stitching = jit
    else:
        rep.n_f_conventional = n_f
        rep.jitter_conventional = jit
    rep.details.update(
        {
            "mode": "stitching" if cfg.stitching else "conventional",
            "output_dims": list(out_dims),
            "n_f": n_f,
            "lockstep_n_f_conventional": lockstep_conv,
            "lockstep_n_f_stitching": lockstep_stitch,
            "lockstep_dominance_violations": dominance_violations,
            "stitch_choices": choices,
            "stitch_invalid_pixels": stitch_invalid,
            "total_invalid_pixels": total_invalid,
        }
    )
    if cfg.timing:
        rep.throughput_fps = clock.fps()
    if cfg.report_path:
        report.write_report(rep, cfg.report_path, figures=cfg.figures, include_timing=cfg.timing)
    return rep


# ---------------------------------------------------------------------------
# hyperlapse
# ---------------------------------------------------------------------------


def run_hyperlapse(cfg: PipelineConfig, frames: list[Frame] | None = None) -> EvalReport:
    clock = _StageClock()
    t0 = time.perf_counter()
    if frames is None:
        t = time.perf_counter()
        frames = framesio.read_frames(cfg.input)
        clock.add("decode", time.perf_counter() - t)
    if len(frames) < 2:
        raise PipelineError("need at least 2 frames")

    t = time.perf_counter()
    if cfg.sidecar and Path(cfg.sidecar).exists():
        sc = MotionSidecar.load(cfg.sidecar)
        if (sc.width, sc.height) != (frames[0].width, frames[0].height):
            raise PipelineError("sidecar dimensions do not match the input")
        if len(sc.motions) != len(frames) - 1:
            raise PipelineError(
                f"sidecar has {len(sc.motions)} transitions for {len(frames)} frames"
            )
    else:
        sc = analyze_frames(frames, cfg)
        if cfg.sidecar:
            sc.save(cfg.sidecar)
    clock.add("analyze", time.perf_counter() - t)

    cam = sc.camera()
    fp = cfg.filter_params
    hp = cfg.hyper_params
    out_dims = filtering.output_dims(cam.width, cam.height, cfg.crop_ratio)
    if frames[0].has_chroma and (out_dims[0] % 2 or out_dims[1] % 2):
        raise PipelineError("odd output dimensions are incompatible with 4:2:0 chroma")
    ox, oy, _ow, _oh = filtering.crop_rect(cam.width, cam.height, cfg.crop_ratio)
    embed = geometry.translation(ox, oy)
    skip = hp.skip

    t = time.perf_counter()
    planner = hyperlapse.HyperlapsePlanner(sc, hp, fp, stitching=cfg.stitching)
    emitted = list(planner.run())
    clock.add("search", time.perf_counter() - t)

    writer = _WriterThread(framesio.FrameWriter(cfg.output) if cfg.output else None)
    rep = EvalReport(total_frames=len(emitted))
    n_f = 0
    stitch_invalid = 0
    angles_path = []
    try:
        t = time.perf_counter()
        for i, node in enumerate(emitted):
            if i == 0:
                p = geometry.normalize(node.q)
                step = None
            else:
                step = planner.steps[i - 1]
                p = geometry.normalize(step.d @ node.q)
            main = frames[i * skip]
            choice = StitchChoice(node.choice) if cfg.stitching else StitchChoice.NO_STITCH
            if i == 0:
                choice = StitchChoice.NO_STITCH
            if choice == StitchChoice.STITCH_PREV and i > 0:
                h_sub = geometry.compose(
                    geometry.invert(step.m), geometry.compose(p, embed)
                )
                out, invalid = _stitch_frame(
                    main, frames[(i - 1) * skip], p, h_sub, embed, out_dims, i
                )
                stitch_invalid += invalid
            elif choice == StitchChoice.STITCH_NEXT and step is not None and step.m_next is not None:
                h_sub = geometry.compose(step.m_next, geometry.compose(p, embed))
                out, invalid = _stitch_frame(
                    main, frames[(i + 1) * skip], p, h_sub, embed, out_dims, i
                )
                stitch_invalid += invalid
            else:
                out, invalid = _plain_crop(main, p, embed, out_dims, i)
            if node.outside:
                n_f += 1
            a = geometry.estimate_angles(node.q, cam)
            angles_path.append(a)
            rep.frames.append(
                FrameRecord(
                    index=i,
                    yaw=a[0],
                    pitch=a[1],
                    roll=a[2],
                    ensure_iterations=1 if node.outside else 0,
                    choice=choice.name,
                    invalid_pixels=invalid,
                )
            )
            writer.put(out)
            clock.frames += 1
        clock.add("render", time.perf_counter() - t)
    finally:
        writer.join()
    clock.add("encode", writer.seconds)
    clock.add("total", time.perf_counter() - t0)

    rep.hyperlapse_final_cost = planner.final_cost()
    rep.jitter = report.jitter_score(np.array(angles_path))
    key = "n_f_stitching" if cfg.stitching else "n_f_conventional"
    setattr(rep, key, n_f)
    rep.details.update(
        {
            "mode": "stitching" if cfg.stitching else "conventional",
            "skip": skip,
            "beam": hp.beam,
            "horizon": hp.horizon,
            "first_emission_after_steps": planner.first_emission_after,
            "cost_per_emission": [node.cost for node in emitted],
            "stitch_invalid_pixels": stitch_invalid,
            "output_dims": list(out_dims),
        }
    )
    if cfg.timing:
        rep.throughput_fps = clock.fps()
    if cfg.report_path:
        report.write_report(rep, cfg.report_path, figures=cfg.figures, include_timing=cfg.timing)
    return rep


# ---------------------------------------------------------------------------
# synth and eval
# ---------------------------------------------------------------------------


def run_synth(cfg: PipelineConfig) -> synth.SynthResult:
    spec = cfg.synth_spec or synth.SynthSpec(seed=cfg.seed)
    res = synth.generate(spec)
    if cfg.output:
        framesio.write_frames(res.frames, cfg.output)
        out = Path(cfg.output)
        gt = out.with_suffix(".angles.txt") if out.suffix else out / "ground_truth.angles.txt"
        framesio.write_ground_truth(res.angles, gt)
    if cfg.sidecar:
        sc = MotionSidecar(
            width=res.cam.width,
            height=res.cam.height,
            focal_length=res.cam.focal_length,
            sensor_height=res.cam.sensor_height,
            motions=list(res.motions),
        )
        sc.save(cfg.sidecar)
    return res


def run_eval(cfg: PipelineConfig, frames: list[Frame] | None = None) -> EvalReport:
    """Paired conventional/stitching comparison on one input."""
    if frames is None:
        frames = framesio.read_frames(cfg.input)
    base = dict(
        crop_ratio=cfg.crop_ratio,
        focal_length=cfg.focal_length,
        sensor_height_factor=cfg.sensor_height_factor,
        motion_config=cfg.motion_config,
        timing=cfg.timing,
        figures=False,
    )
    conv = run_stabilize(
        PipelineConfig(mode="stabilize", stitching=False, filter_params=FilterParams(), **base),
        frames=frames,
    )
    stit = run_stabilize(
        PipelineConfig(mode="stabilize", stitching=True, filter_params=FilterParams(), **base),
        frames=frames,
    )
    rep = EvalReport(total_frames=len(frames))
    rep.n_f_conventional = conv.n_f_conventional
    rep.n_f_stitching = stit.n_f_stitching
    rep.jitter_conventional = conv.jitter
    rep.jitter_stitching = stit.jitter
    rep.jitter = stit.jitter
    rep.frames = stit.frames
    rep.details = {
        "conventional": conv.details,
        "stitching": stit.details,
    }
    if cfg.timing:
        rep.throughput_fps = stit.throughput_fps
    if cfg.report_path:
        report.write_report(rep, cfg.report_path, figures=cfg.figures, include_timing=cfg.timing)
    return rep
