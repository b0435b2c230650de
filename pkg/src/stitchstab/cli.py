"""Command-line interface.

Subcommands: analyze (write the motion sidecar), stabilize, hyperlapse,
synth (generate a shaky test clip with ground truth) and eval (paired
conventional/stitching comparison).  Precedence: flag > config default.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import pipeline, synth
from .filtering import FilterParams
from .hyperlapse import HyperlapseParams
from .motion import MotionConfig


def _add_common(p: argparse.ArgumentParser, needs_input=True) -> None:
    if needs_input:
        p.add_argument("--input", required=True, help="Y4M file or image directory")
    p.add_argument("--output", default=None, help="output Y4M file or image directory")
    p.add_argument("--crop-ratio", type=float, default=0.9, help="kept fraction per axis")
    p.add_argument("--focal", type=float, default=None, help="focal length in pixels")
    p.add_argument(
        "--sensor-height-factor",
        type=float,
        default=2.0,
        help="effective shutter scan height as a multiple of the frame height",
    )
    p.add_argument("--report", default=None, help="write the run report JSON here")
    p.add_argument("--no-figures", action="store_true", help="skip report figures")
    p.add_argument("--timing", action="store_true", help="include wall-clock FPS in the report")
    p.add_argument("--seed", type=int, default=0)


def _add_filter_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window", type=int, default=8, help="mid-range filter length")
    p.add_argument("--eta", type=float, default=0.25, help="residual-to-identity blend")
    p.add_argument("--eps", type=float, default=0.01, help="inside-correction blend step")
    p.add_argument("--max-iterations", type=int, default=2000)
    p.add_argument("--samples-per-edge", type=int, default=64)
    p.add_argument("--no-stitch", action="store_true", help="conventional stabilizer")
    p.add_argument("--dump-seams", default=None, help="write seam overlays into this directory")


def _add_hyper_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--skip", type=int, default=4, choices=(1, 2, 4, 8, 16), help="frame skip")
    p.add_argument("--preset", choices=("standard", "lite"), default="standard")
    p.add_argument("--horizon", type=int, default=None, help="search depth N before emitting")
    p.add_argument("--beam", type=int, default=None, help="nodes kept per depth (S)")
    p.add_argument("--turns", type=int, default=None, help="turn children per leaf (T)")
    p.add_argument("--sidecar", default=None, help="motion sidecar path (read or write)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stitchstab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="estimate per-frame motion into a sidecar")
    _add_common(p)
    p.add_argument("--sidecar", required=True, help="sidecar output path")

    p = sub.add_parser("stabilize", help="stabilize a clip")
    _add_common(p)
    _add_filter_flags(p)

    p = sub.add_parser("hyperlapse", help="fast-forward a clip with planned velocities")
    _add_common(p)
    _add_filter_flags(p)
    _add_hyper_flags(p)

    p = sub.add_parser("synth", help="generate a synthetic shaky clip with ground truth")
    _add_common(p, needs_input=False)
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--width", type=int, default=480)
    p.add_argument("--height", type=int, default=270)
    p.add_argument("--amp", type=float, nargs=3, default=(3.0, 2.0, 1.0),
                   metavar=("YAW", "PITCH", "ROLL"), help="sinusoid amplitudes in degrees")
    p.add_argument("--noise", type=float, default=0.3, help="white noise amplitude in degrees")
    p.add_argument("--source", default=None, help="source still image (procedural when absent)")
    p.add_argument("--rs-sensor-height", type=float, default=None,
                   help="enable shutter skew with this scan height")
    p.add_argument("--sidecar", default=None, help="write the analytic motion sidecar here")

    p = sub.add_parser("eval", help="paired conventional vs stitching comparison")
    _add_common(p)

    return ap


def _filter_params(args) -> FilterParams:
    return FilterParams(
        window=args.window,
        eps=args.eps,
        eta=args.eta,
        crop_ratio=args.crop_ratio,
        max_iterations=args.max_iterations,
        samples_per_edge=args.samples_per_edge,
    )


def _hyper_params(args) -> HyperlapseParams:
    hp = HyperlapseParams.standard(args.skip) if args.preset == "standard" else HyperlapseParams.lite(args.skip)
    if args.horizon is not None:
        hp.horizon = args.horizon
    if args.beam is not None:
        hp.beam = args.beam
    if args.turns is not None:
        hp.turns = args.turns
    return hp


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    common = dict(
        input=getattr(args, "input", None),
        output=args.output,
        crop_ratio=args.crop_ratio,
        focal_length=args.focal,
        sensor_height_factor=args.sensor_height_factor,
        report_path=args.report,
        figures=not args.no_figures,
        timing=args.timing,
        seed=args.seed,
        motion_config=MotionConfig(),
    )

    if args.command == "analyze":
        cfg = pipeline.PipelineConfig(mode="analyze", sidecar=args.sidecar, **common)
        sc = pipeline.run_analyze(cfg)
        print(f"analyzed {len(sc.motions) + 1} frames -> {args.sidecar}")
        return 0

    if args.command == "stabilize":
        cfg = pipeline.PipelineConfig(
            mode="stabilize",
            stitching=not args.no_stitch,
            filter_params=_filter_params(args),
            dump_seams=args.dump_seams,
            **common,
        )
        rep = pipeline.run_stabilize(cfg)
        n_f = rep.n_f_stitching if cfg.stitching else rep.n_f_conventional
        print(f"frames {rep.total_frames}  n_f {n_f}  jitter {rep.jitter:.6f}")
        if rep.throughput_fps:
            print("fps " + " ".join(f"{k}={v:.1f}" for k, v in sorted(rep.throughput_fps.items())))
        return 0

    if args.command == "hyperlapse":
        cfg = pipeline.PipelineConfig(
            mode="hyperlapse",
            stitching=not args.no_stitch,
            filter_params=_filter_params(args),
            hyper_params=_hyper_params(args),
            sidecar=args.sidecar,
            dump_seams=args.dump_seams,
            **common,
        )
        rep = pipeline.run_hyperlapse(cfg)
        print(f"final cost {rep.hyperlapse_final_cost:.6f}")
        print(f"frames {rep.total_frames}  jitter {rep.jitter:.6f}")
        if rep.throughput_fps:
            print("fps " + " ".join(f"{k}={v:.1f}" for k, v in sorted(rep.throughput_fps.items())))
        return 0

    if args.command == "synth":
        if args.output is None:
            print("synth requires --output", file=sys.stderr)
            return 2
        spec = synth.SynthSpec(
            frames=args.frames,
            width=args.width,
            height=args.height,
            amp_deg=tuple(args.amp),
            noise_deg=args.noise,
            seed=args.seed,
            focal_length=args.focal,
            rs_sensor_height=args.rs_sensor_height,
            source=args.source,
        )
        cfg = pipeline.PipelineConfig(mode="synth", sidecar=args.sidecar, synth_spec=spec, **common)
        res = pipeline.run_synth(cfg)
        print(f"wrote {len(res.frames)} frames -> {args.output}")
        return 0

    if args.command == "eval":
        cfg = pipeline.PipelineConfig(mode="eval", **common)
        rep = pipeline.run_eval(cfg)
        print(
            f"frames {rep.total_frames}  "
            f"n_f conventional {rep.n_f_conventional}  stitching {rep.n_f_stitching}"
        )
        print(
            f"jitter conventional {rep.jitter_conventional:.6f}  "
            f"stitching {rep.jitter_stitching:.6f}"
        )
        print(json.dumps(rep.to_dict(include_timing=args.timing), indent=2, sort_keys=True))
        return 0

    return 2


if __name__ == "__main__":
    raise SystemExit(main())
