"""Delimited pose files, transform sidecars, and scene metadata.

Pose files hold one record per frame: a frame id followed by J*2 (2D) or
J*3 (3D) comma-separated floats; readers auto-detect dimensionality from
the column count. Transform sidecars carry 12 floats per frame, the
row-major rotation then the translation. Floats are written with 17
significant digits so round trips are exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError
from .geometry import RigidTransform
from .skeleton import SkeletonTopology
from .synthetic import SyntheticScene


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def write_poses(path, poses: np.ndarray, frame_ids=None) -> None:
    """Write a (N, J, 2) or (N, J, 3) batch, one frame per line."""
    poses = np.asarray(poses, dtype=np.float64)
    if poses.ndim != 3 or poses.shape[-1] not in (2, 3):
        raise ValueError(f"expected (N, J, 2|3) batch, got {poses.shape}")
    if frame_ids is None:
        frame_ids = range(len(poses))
    with open(path, "w") as fh:
        for fid, pose in zip(frame_ids, poses):
            cells = [str(int(fid))] + [_fmt(v) for v in pose.ravel()]
            fh.write(",".join(cells) + "\n")


def read_poses(path, topo: SkeletonTopology) -> tuple[np.ndarray, np.ndarray]:
    """Read a pose file; returns (frame_ids, poses with auto-detected dims)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"pose file not found: {path}")
    rows = []
    ids = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise DataError(f"{path}:{lineno}: ragged record "
                                f"({len(cells)} columns, expected {width})")
            try:
                ids.append(int(cells[0]))
                rows.append([float(c) for c in cells[1:]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise DataError(f"pose file is empty: {path}")
    j = topo.joint_count
    values = np.asarray(rows, dtype=np.float64)
    if values.shape[1] == 2 * j:
        dims = 2
    elif values.shape[1] == 3 * j:
        dims = 3
    else:
        raise DataError(
            f"{path}: {values.shape[1]} value columns fit neither 2x{j} nor 3x{j}")
    if not np.isfinite(values).all():
        raise DataError(f"{path}: non-finite pose values")
    return np.asarray(ids, dtype=np.int64), values.reshape(len(rows), j, dims)


def write_transforms(path, rotations: np.ndarray, translations: np.ndarray,
                     frame_ids=None) -> None:
    """Sidecar with one rigid transform per frame (9 + 3 floats)."""
    rotations = np.asarray(rotations, dtype=np.float64)
    translations = np.asarray(translations, dtype=np.float64)
    if frame_ids is None:
        frame_ids = range(len(rotations))
    with open(path, "w") as fh:
        for fid, rot, t in zip(frame_ids, rotations, translations):
            cells = [str(int(fid))] + [_fmt(v) for v in rot.ravel()] \
                + [_fmt(v) for v in t]
            fh.write(",".join(cells) + "\n")


def read_transforms(path) -> tuple[np.ndarray, list[RigidTransform]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"transform sidecar not found: {path}")
    ids = []
    transforms = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            if len(cells) != 13:
                raise DataError(f"{path}:{lineno}: expected 13 columns, got {len(cells)}")
            ids.append(int(cells[0]))
            values = np.array([float(c) for c in cells[1:]])
            transforms.append(RigidTransform(rotation=values[:9].reshape(3, 3),
                                             translation=values[9:]))
    if not transforms:
        raise DataError(f"transform sidecar is empty: {path}")
    return np.asarray(ids, dtype=np.int64), transforms


def write_scenes(path, scenes: list[SyntheticScene], frame_ids=None) -> None:
    """Scene metadata: view rotation (9 floats), noise sigma, camera focal."""
    if frame_ids is None:
        frame_ids = range(len(scenes))
    with open(path, "w") as fh:
        for fid, scene in zip(frame_ids, scenes):
            cells = [str(int(fid))] \
                + [_fmt(v) for v in scene.view_rotation.rotation.ravel()] \
                + [_fmt(scene.noise_sigma), _fmt(scene.camera_focal)]
            fh.write(",".join(cells) + "\n")


def read_scenes(path) -> tuple[np.ndarray, list[SyntheticScene]]:
    """Scene metadata reader; loaded scenes carry no canonical pose."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"scene file not found: {path}")
    ids = []
    scenes = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            if len(cells) != 12:
                raise DataError(f"{path}:{lineno}: expected 12 columns, got {len(cells)}")
            ids.append(int(cells[0]))
            values = np.array([float(c) for c in cells[1:]])
            scenes.append(SyntheticScene(
                canonical_pose=None,
                view_rotation=RigidTransform(rotation=values[:9].reshape(3, 3),
                                             translation=np.zeros(3)),
                noise_sigma=float(values[9]),
                camera_focal=float(values[10]),
            ))
    if not scenes:
        raise DataError(f"scene file is empty: {path}")
    return np.asarray(ids, dtype=np.int64), scenes
