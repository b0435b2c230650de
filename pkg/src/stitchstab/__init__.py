"""stitchstab: two-frame-stitching electronic video stabilizer.

Crops shaky input under a smoothed camera path; when the crop would exit the
frame, the current frame is stitched with one adjacent frame along an
automatically found unnoticeable seam.  Includes a hyperlapse mode that
plans camera velocities by bounded tree search over precomputed motion.
"""

__version__ = "0.1.0"

from .filtering import FilterParams, FilterState, StitchChoice
from .geometry import AngleDecomposition, CameraParams
from .hyperlapse import HyperlapseParams, MotionSidecar
from .motion import Frame, MotionConfig
from .pipeline import PipelineConfig, run_analyze, run_eval, run_hyperlapse, run_stabilize, run_synth
from .report import EvalReport
from .synth import SynthSpec

__all__ = [
    "AngleDecomposition",
    "CameraParams",
    "EvalReport",
    "FilterParams",
    "FilterState",
    "Frame",
    "HyperlapseParams",
    "MotionConfig",
    "MotionSidecar",
    "PipelineConfig",
    "StitchChoice",
    "SynthSpec",
    "run_analyze",
    "run_eval",
    "run_hyperlapse",
    "run_stabilize",
    "run_synth",
    "__version__",
]
