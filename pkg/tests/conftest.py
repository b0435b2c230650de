"""Shared fixtures: the calibrated synthetic suite and its cached runs.

The three acceptance sequences (two pitch-dominant, one yaw-dominant walking
bounce) were calibrated so the conventional stabilizer fails on well over 50
of 300 frames at the 90% crop while the stitching predicate rescues most of
them, and so the planner cost orderings hold at both skips and presets.
Everything is seeded and deterministic; session-scoped fixtures make the
expensive runs happen once.
"""

from __future__ import annotations

import numpy as np
import pytest

from stitchstab import pipeline, synth
from stitchstab.filtering import FilterParams
from stitchstab.motion import MotionConfig

SUITE_FOCAL = 960.0
SUITE_DIMS = (480, 280)
SUITE_FRAMES = 300
SUITE_MOTION = MotionConfig(max_features=96)

SUITE_SPECS = {
    "walk_a": dict(
        amp_deg=(0.3, 0.2, 0.03), shake_deg=(0.5, 1.35, 0.03), noise_deg=0.06, seed=42
    ),
    "walk_b": dict(
        amp_deg=(0.4, 0.15, 0.03), shake_deg=(2.3, 0.55, 0.03), noise_deg=0.06, seed=42
    ),
    "walk_c": dict(
        amp_deg=(0.3, 0.2, 0.03), shake_deg=(0.5, 1.35, 0.03), noise_deg=0.06, seed=33
    ),
}


def suite_spec(name: str) -> synth.SynthSpec:
    return synth.SynthSpec(
        frames=SUITE_FRAMES,
        width=SUITE_DIMS[0],
        height=SUITE_DIMS[1],
        focal_length=SUITE_FOCAL,
        **SUITE_SPECS[name],
    )


def suite_config(**kw) -> pipeline.PipelineConfig:
    kw.setdefault("motion_config", SUITE_MOTION)
    kw.setdefault("focal_length", SUITE_FOCAL)
    kw.setdefault("figures", False)
    kw.setdefault("filter_params", FilterParams())
    return pipeline.PipelineConfig(**kw)


@pytest.fixture(scope="session")
def suite_clips():
    return {name: synth.generate(suite_spec(name)) for name in SUITE_SPECS}


@pytest.fixture(scope="session")
def suite_sidecars(suite_clips):
    out = {}
    for name, res in suite_clips.items():
        out[name] = pipeline.analyze_frames(res.frames, suite_config())
    return out


@pytest.fixture(scope="session")
def suite_stabilize_reports(suite_clips):
    """Conventional and stitching runs for each suite clip, computed once."""
    out = {}
    for name, res in suite_clips.items():
        conv = pipeline.run_stabilize(suite_config(stitching=False), frames=res.frames)
        stit = pipeline.run_stabilize(suite_config(stitching=True), frames=res.frames)
        out[name] = {"conventional": conv, "stitching": stit}
    return out


@pytest.fixture(scope="session")
def small_clip():
    """A short clip for cheap smoke tests."""
    spec = synth.SynthSpec(
        frames=40,
        width=480,
        height=280,
        focal_length=SUITE_FOCAL,
        amp_deg=(0.3, 0.2, 0.03),
        shake_deg=(0.5, 1.35, 0.03),
        noise_deg=0.06,
        seed=42,
    )
    return synth.generate(spec)
