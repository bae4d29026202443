"""Disparity refinement - local confidence-based and global variational refinement of stereo disparity maps."""

__version__ = "1.0.0"

from evalkit import (
    CameraRig,
    EvalReport,
    evaluate_disparity,
    rmse_depth,
    rmse_disparity,
)
from gdr import (
    GdrParams,
    descriptor_field,
    energy,
    primal_dual_solve,
    refine_global,
)
from ldr import (
    LdrParams,
    confidence_maps,
    refine_local,
)
from pipeline import (
    PipelineConfig,
    RunReport,
    run_batch,
    run_pipeline,
)
from synth import (
    CorruptionSpec,
    SceneSpec,
    brute_force_match,
    corrupt_disparity,
    gen_scene,
)

__all__ = [
    "LdrParams",
    "confidence_maps",
    "refine_local",
    "GdrParams",
    "descriptor_field",
    "energy",
    "primal_dual_solve",
    "refine_global",
    "CameraRig",
    "EvalReport",
    "evaluate_disparity",
    "rmse_disparity",
    "rmse_depth",
    "SceneSpec",
    "CorruptionSpec",
    "gen_scene",
    "corrupt_disparity",
    "brute_force_match",
    "PipelineConfig",
    "RunReport",
    "run_pipeline",
    "run_batch",
]
