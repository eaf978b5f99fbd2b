"""View-consistent 3D human pose refinement toolkit.

Canonical-view rigid normalization of skeletons from anatomical planes,
hierarchical neural correction (whole body, then per part), adversarial
plausibility training under consistent views, and the standard pose
evaluation metric suite, with a synthetic multi-viewpoint data generator
for desk-scale experiments.
"""

__version__ = "0.1.0"

from .geometry import (
    CanonicalFrame,
    DegenerateFrameError,
    RigidTransform,
    SimilarityTransform,
    apply,
    frame_to_transform,
    global_frame,
    invert,
    part_frame,
    procrustes_align,
)
from .metrics import EvalReport, SplitSpec, evaluate, run_protocol
from .model import ModelConfig, Pipeline, PipelineOutput, SCHEMES, discriminate
from .skeleton import PartSpec, SkeletonTopology, default_topology, load_topology
from .synthetic import SyntheticScene, generate_synthetic, project_orthographic
from .train import LossReport, TrainConfig, train_scheme

__all__ = [
    "CanonicalFrame",
    "DegenerateFrameError",
    "EvalReport",
    "LossReport",
    "ModelConfig",
    "PartSpec",
    "Pipeline",
    "PipelineOutput",
    "RigidTransform",
    "SCHEMES",
    "SimilarityTransform",
    "SkeletonTopology",
    "SplitSpec",
    "SyntheticScene",
    "TrainConfig",
    "apply",
    "default_topology",
    "discriminate",
    "evaluate",
    "frame_to_transform",
    "generate_synthetic",
    "global_frame",
    "invert",
    "load_topology",
    "part_frame",
    "procrustes_align",
    "project_orthographic",
    "run_protocol",
    "train_scheme",
]
