"""Run reports: one JSON document, a per-frame CSV, and rendered figures.

The JSON carries the run summary (frame counts, forced-correction counts,
jitter, planner cost); the CSV holds the per-frame camera path and stitch
decisions; the figures plot the camera path, the forced corrections and the
planner cost curve next to the report path.  Timing is opt-in so that two
runs with the same configuration produce byte-identical reports.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


@dataclass
class FrameRecord:
    index: int
    yaw: float
    pitch: float
    roll: float
    ensure_iterations: int
    choice: str
    invalid_pixels: int


@dataclass
class EvalReport:
    total_frames: int = 0
    n_f_conventional: int | None = None
    n_f_stitching: int | None = None
    jitter: float | None = None
    jitter_conventional: float | None = None
    jitter_stitching: float | None = None
    hyperlapse_final_cost: float | None = None
    throughput_fps: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    frames: list[FrameRecord] = field(default_factory=list)

    def validate(self) -> None:
        for nf in (self.n_f_conventional, self.n_f_stitching):
            if nf is not None and not (0 <= nf <= self.total_frames):
                raise ValueError(f"n_f {nf} outside [0, {self.total_frames}]")
        for v in (self.jitter, self.hyperlapse_final_cost):
            if v is not None and not math.isfinite(v):
                raise ValueError("non-finite report value")

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "total_frames": self.total_frames,
            "n_f_conventional": self.n_f_conventional,
            "n_f_stitching": self.n_f_stitching,
            "jitter": self.jitter,
            "jitter_conventional": self.jitter_conventional,
            "jitter_stitching": self.jitter_stitching,
            "hyperlapse_final_cost": self.hyperlapse_final_cost,
            "details": self.details,
        }
        if include_timing and self.throughput_fps:
            out["throughput_fps"] = self.throughput_fps
        return out


def jitter_score(angles: np.ndarray) -> float:
    """RMS of the first difference of the per-frame camera angles.

    angles is (n, 3); a constant path scores zero.
    """
    angles = np.asarray(angles, dtype=np.float64)
    if angles.shape[0] < 2:
        return 0.0
    d = np.diff(angles, axis=0)
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


def write_report(report: EvalReport, path, figures: bool = True, include_timing: bool = True) -> None:
    """Write report JSON plus the per-frame CSV and PNG figures beside it."""
    report.validate()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(report.to_dict(include_timing=include_timing), indent=2, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )
    if report.frames:
        _write_csv(report, path.with_suffix(".csv"))
    if figures:
        render_figures(report, path)


def _write_csv(report: EvalReport, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["frame", "yaw", "pitch", "roll", "ensure_iterations", "choice", "invalid_pixels"]
        )
        for fr in report.frames:
            writer.writerow(
                [
                    fr.index,
                    format(fr.yaw, ".17g"),
                    format(fr.pitch, ".17g"),
                    format(fr.roll, ".17g"),
                    fr.ensure_iterations,
                    fr.choice,
                    fr.invalid_pixels,
                ]
            )


def render_figures(report: EvalReport, report_path) -> list[Path]:
    """Camera-path, correction and cost figures next to the report file."""
    report_path = Path(report_path)
    stem = report_path.with_suffix("")
    written: list[Path] = []

    if report.frames:
        idx = [fr.index for fr in report.frames]
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
        for name in ("yaw", "pitch", "roll"):
            ax1.plot(idx, [np.rad2deg(getattr(fr, name)) for fr in report.frames], label=name)
        ax1.set_ylabel("camera angle [deg]")
        ax1.legend(loc="upper right", fontsize=8)
        ax1.grid(True, alpha=0.3)

        ei = [fr.ensure_iterations for fr in report.frames]
        ax2.fill_between(idx, ei, step="mid", alpha=0.6)
        ax2.set_ylabel("inside-correction iterations")
        ax2.set_xlabel("frame")
        ax2.grid(True, alpha=0.3)
        fig.tight_layout()
        out = Path(f"{stem}_path.png")
        fig.savefig(out, dpi=110)
        plt.close(fig)
        written.append(out)

    if report.n_f_conventional is not None and report.n_f_stitching is not None:
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        ax.bar(["conventional", "stitching"], [report.n_f_conventional, report.n_f_stitching])
        ax.set_ylabel("frames with forced correction")
        fig.tight_layout()
        out = Path(f"{stem}_nf.png")
        fig.savefig(out, dpi=110)
        plt.close(fig)
        written.append(out)

    costs = report.details.get("cost_per_emission")
    if costs:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.plot(range(len(costs)), costs)
        ax.set_xlabel("output frame")
        ax.set_ylabel("accumulated cost")
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        out = Path(f"{stem}_cost.png")
        fig.savefig(out, dpi=110)
        plt.close(fig)
        written.append(out)
    return written
