"""Synthetic multi-viewpoint pose generator.

Stands in for motion-capture data at desk scale: a fixed-torso rest
skeleton is articulated by sampling limb joint angles inside anatomical
ranges, rotated to a random viewpoint, and observed in 2D by an
orthographic projection. Everything is a pure function of the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform, rotation_xyz
from .skeleton import SkeletonTopology, default_topology

# Joint-angle sampling ranges around the rest pose (radians).
LIMB_ANGLE_LIMIT = math.pi / 3
HEAD_ANGLE_LIMIT = math.pi / 12
# Per-subject skeleton scale range.
SCALE_RANGE = (0.9, 1.1)
DEFAULT_FOCAL = 1e-3


@dataclass(frozen=True)
class SyntheticScene:
    """Ground-truth generation record for one synthetic sample.

    Scenes loaded back from metadata files carry no canonical pose.
    """

    canonical_pose: np.ndarray | None  # (J, 3) articulated pose, canonical view
    view_rotation: RigidTransform      # maps canonical -> observed view
    noise_sigma: float                 # mm, isotropic per-joint
    camera_focal: float                # orthographic projection scale


def rest_pose(topo: SkeletonTopology) -> np.ndarray:
    """Rest skeleton in the canonical view (facing +X, up +Z), millimeters.

    Elbows and knees carry a slight rest bend so the part planes are
    never collinear at the center of the sampling range.
    """
    coords = {
        "pelvis": (0.0, 0.0, 0.0),
        "right_hip": (0.0, 132.0, 0.0),
        "left_hip": (0.0, -132.0, 0.0),
        "chest": (0.0, 0.0, 233.0),
        "thorax": (0.0, 0.0, 489.0),
        "jaw": (35.0, 0.0, 597.0),
        "head": (53.0, 0.0, 709.0),
        "left_shoulder": (0.0, -149.0, 489.0),
        "right_shoulder": (0.0, 149.0, 489.0),
    }
    elbow_drop = (0.0, 0.0, -282.0)
    forearm = (249.0 * math.sin(math.pi / 6), 0.0, -249.0 * math.cos(math.pi / 6))
    knee_drop = (0.0, 0.0, -442.0)
    shin = (-454.0 * math.sin(math.pi / 12), 0.0, -454.0 * math.cos(math.pi / 12))
    for side in ("left", "right"):
        sx, sy, sz = coords[f"{side}_shoulder"]
        coords[f"{side}_elbow"] = (sx + elbow_drop[0], sy + elbow_drop[1], sz + elbow_drop[2])
        ex, ey, ez = coords[f"{side}_elbow"]
        coords[f"{side}_wrist"] = (ex + forearm[0], ey + forearm[1], ez + forearm[2])
        hx, hy, hz = coords[f"{side}_hip"]
        coords[f"{side}_knee"] = (hx + knee_drop[0], hy + knee_drop[1], hz + knee_drop[2])
        kx, ky, kz = coords[f"{side}_knee"]
        coords[f"{side}_ankle"] = (kx + shin[0], ky + shin[1], kz + shin[2])

    pose = np.zeros((topo.joint_count, 3))
    for name, xyz in coords.items():
        pose[topo.index(name)] = xyz
    return pose


def _descendants(topo: SkeletonTopology, joint: int) -> list[int]:
    children: dict[int, list[int]] = {}
    for child, par in enumerate(topo.parent):
        if par != -1:
            children.setdefault(par, []).append(child)
    out: list[int] = []
    stack = list(children.get(joint, []))
    while stack:
        j = stack.pop()
        out.append(j)
        stack.extend(children.get(j, []))
    return sorted(out)


def _rotate_about(pose: np.ndarray, joints: list[int], pivot_joint: int,
                  rotation: np.ndarray) -> None:
    pivot = pose[pivot_joint].copy()
    pose[joints] = (pose[joints] - pivot) @ rotation.T + pivot


# Articulated joints and their sampling ranges, in draw order. Rotating a
# joint's full descendant subtree about the joint keeps every bone length
# rigid while the hips and chest stay fixed (so the generated pose is
# exactly canonical before the view rotation).
_ARTICULATION = (
    ("chest", HEAD_ANGLE_LIMIT),
    ("thorax", HEAD_ANGLE_LIMIT),
    ("left_shoulder", LIMB_ANGLE_LIMIT),
    ("left_elbow", LIMB_ANGLE_LIMIT),
    ("right_shoulder", LIMB_ANGLE_LIMIT),
    ("right_elbow", LIMB_ANGLE_LIMIT),
    ("left_hip", LIMB_ANGLE_LIMIT),
    ("left_knee", LIMB_ANGLE_LIMIT),
    ("right_hip", LIMB_ANGLE_LIMIT),
    ("right_knee", LIMB_ANGLE_LIMIT),
)


def _articulate(pose: np.ndarray, topo: SkeletonTopology, rng: np.random.Generator) -> None:
    for joint_name, limit in _ARTICULATION:
        joint = topo.index(joint_name)
        rot = rotation_xyz(*rng.uniform(-limit, limit, size=3))
        _rotate_about(pose, _descendants(topo, joint), joint, rot)


def project_orthographic(pose: np.ndarray, scale: float) -> np.ndarray:
    """Drop z and scale: (x, y) = scale * (X, Y) per joint."""
    if scale <= 0:
        raise ValueError("projection scale must be positive")
    pose = np.asarray(pose, dtype=np.float64)
    return scale * pose[..., :2]


def generate_synthetic(seed: int, count: int, view_spread,
                       noise_sigma: float, *,
                       camera_focal: float = DEFAULT_FOCAL,
                       topo: SkeletonTopology | None = None,
                       ) -> list[tuple[np.ndarray, np.ndarray, SyntheticScene]]:
    """Generate ``count`` (pose2d, pose3d, scene) samples.

    Each sample articulates the rest skeleton (per-subject scale drawn
    from SCALE_RANGE, limb angles within anatomical ranges), rotates it
    by a view rotation with per-axis angles uniform in +-view_spread,
    adds isotropic Gaussian noise to the 3D joints, and projects
    orthographically to 2D. ``view_spread`` is one max angle for all
    three axes, or a triple for anisotropic view distributions (e.g. a
    turntable of cameras: small tilts, full yaw). Deterministic for a
    fixed seed.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    if topo is None:
        topo = default_topology()
    spread = np.broadcast_to(np.asarray(view_spread, dtype=np.float64), (3,))
    if (spread < 0).any():
        raise ValueError("view_spread must be non-negative")

    rng = np.random.default_rng(seed)
    base = rest_pose(topo)
    samples = []
    for _ in range(count):
        scale = rng.uniform(*SCALE_RANGE)
        canonical = base * scale
        _articulate(canonical, topo, rng)

        angles = rng.uniform(-spread, spread, size=3)
        view = rotation_xyz(*angles)
        observed = canonical @ view.T
        noise = rng.normal(0.0, noise_sigma, size=observed.shape) if noise_sigma > 0 \
            else np.zeros_like(observed)
        pose3d = observed + noise
        pose2d = project_orthographic(pose3d, camera_focal)
        scene = SyntheticScene(
            canonical_pose=canonical,
            view_rotation=RigidTransform(rotation=view, translation=np.zeros(3)),
            noise_sigma=noise_sigma,
            camera_focal=camera_focal,
        )
        samples.append((pose2d, pose3d, scene))
    return samples


def stack_samples(samples: list[tuple[np.ndarray, np.ndarray, SyntheticScene]],
                  ) -> tuple[np.ndarray, np.ndarray, list[SyntheticScene]]:
    """Split a sample list into (N, J, 2) / (N, J, 3) arrays plus scenes."""
    poses2d = np.stack([s[0] for s in samples])
    poses3d = np.stack([s[1] for s in samples])
    scenes = [s[2] for s in samples]
    return poses2d, poses3d, scenes
