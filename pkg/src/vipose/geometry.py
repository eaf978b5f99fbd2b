"""Canonical-view rigid transforms from anatomical planes, and Procrustes alignment.

The whole-body canonical view places the hip-plane normal along +X, the
root-to-chest direction along +Z, and the root (hip midpoint) at the
origin. Part-local frames use the same recipe with a part's own plane
triple, proximal-bone axis and origin joint.

A rigid transform acts as ``x -> R @ (x - t)``; its exact inverse is
``rotation = R.T, translation = -R @ t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .skeleton import PartSpec, SkeletonTopology

# Collinearity threshold: cross-product norm relative to the product of
# the two edge lengths that formed it.
DEGENERACY_RATIO = 1e-6


class DegenerateFrameError(ValueError):
    """Raised when a canonical frame is requested from collinear joints."""


class AlignmentError(ValueError):
    """Raised when Procrustes alignment is undefined (zero-variance input)."""


@dataclass(frozen=True)
class RigidTransform:
    """Rotation plus origin shift, applied as ``x -> R @ (x - t)``."""

    rotation: np.ndarray   # (3, 3), orthonormal, det +1
    translation: np.ndarray  # (3,)

    def euler_xyz(self) -> tuple[float, float, float]:
        """Rotation angles about X, Y, Z for the R = RX @ RY @ RZ factorization."""
        return euler_xyz(self.rotation)


@dataclass(frozen=True)
class CanonicalFrame:
    """Unit plane normal ``n``, unit axis ``v`` (n . v = 0), and origin.

    ``degenerate`` marks frames built from collinear joints; their n/v
    are unreliable and callers should fall back to the identity.
    """

    normal: np.ndarray
    axis: np.ndarray
    origin: np.ndarray
    degenerate: bool


def identity_transform() -> RigidTransform:
    return RigidTransform(rotation=np.eye(3), translation=np.zeros(3))


def apply(transform: RigidTransform, pose: np.ndarray) -> np.ndarray:
    """Apply to points of shape (..., 3)."""
    pose = np.asarray(pose, dtype=np.float64)
    return (pose - transform.translation) @ transform.rotation.T


def invert(transform: RigidTransform) -> RigidTransform:
    r = transform.rotation
    return RigidTransform(rotation=r.T, translation=-(r @ transform.translation))


def apply_batch(rotations: np.ndarray, translations: np.ndarray,
                poses: np.ndarray) -> np.ndarray:
    """Per-sample transform of (N, J, 3) poses by (N, 3, 3) + (N, 3)."""
    return np.einsum("nij,nkj->nki", rotations, poses - translations[:, None, :])


def _frames_from_points(q1: np.ndarray, q2: np.ndarray, q3: np.ndarray,
                        a1: np.ndarray, a2: np.ndarray,
                        origin: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized frame construction from batched plane/axis points.

    All inputs are (N, 3). Returns unit normals, unit axes (normal
    re-orthogonalized against the axis), and a degeneracy mask.
    """
    e1 = q2 - q1
    e2 = q3 - q1
    raw_n = np.cross(e1, e2)
    edge_prod = np.linalg.norm(e1, axis=-1) * np.linalg.norm(e2, axis=-1)
    axis = a2 - a1
    axis_len = np.linalg.norm(axis, axis=-1)

    degenerate = (np.linalg.norm(raw_n, axis=-1) < DEGENERACY_RATIO * edge_prod) \
        | (edge_prod == 0.0) | (axis_len < 1e-12)

    safe_axis = np.where(axis_len[:, None] > 0, axis_len[:, None], 1.0)
    v = axis / safe_axis
    raw_len = np.linalg.norm(raw_n, axis=-1, keepdims=True)
    n = raw_n / np.where(raw_len > 0, raw_len, 1.0)
    # Guard round-off: force n exactly perpendicular to v.
    n = n - np.sum(n * v, axis=-1, keepdims=True) * v
    n_len = np.linalg.norm(n, axis=-1, keepdims=True)
    tiny = (n_len[:, 0] < 1e-9)
    degenerate = degenerate | tiny
    n = n / np.where(n_len > 0, n_len, 1.0)
    return n, v, degenerate


def global_frame(pose: np.ndarray, topo: SkeletonTopology) -> CanonicalFrame:
    """Whole-body frame from the (left_hip, right_hip, chest) plane.

    Origin is the hip midpoint (the root), ``v`` points root-to-chest,
    and ``n = cross(right_hip - origin, chest - origin)`` orthogonalized
    against ``v``. Collinear joints set the degenerate flag instead of
    raising.
    """
    pose = np.asarray(pose, dtype=np.float64)
    rh, chest = pose[topo.plane_joints[1]], pose[topo.plane_joints[2]]
    origin = 0.5 * (pose[topo.root_pair[0]] + pose[topo.root_pair[1]])
    n, v, deg = _frames_from_points(
        origin[None], rh[None], chest[None],
        origin[None], chest[None], origin[None])
    return CanonicalFrame(normal=n[0], axis=v[0], origin=origin, degenerate=bool(deg[0]))


def part_frame(pose: np.ndarray, part: PartSpec) -> CanonicalFrame:
    """Part-local frame from the part's plane triple and proximal bone."""
    pose = np.asarray(pose, dtype=np.float64)
    q1, q2, q3 = (pose[i] for i in part.plane_triple)
    a1, a2 = pose[part.axis_pair[0]], pose[part.axis_pair[1]]
    origin = pose[part.origin_joint]
    n, v, deg = _frames_from_points(q1[None], q2[None], q3[None],
                                    a1[None], a2[None], origin[None])
    return CanonicalFrame(normal=n[0], axis=v[0], origin=origin, degenerate=bool(deg[0]))


def frame_to_transform(frame: CanonicalFrame) -> RigidTransform:
    """Transform sending n -> +X, v x n -> +Y, v -> +Z, origin -> 0.

    Rows of the rotation are (n, v x n, v); with unit, perpendicular
    n and v this is orthonormal with det +1.
    """
    if frame.degenerate:
        raise DegenerateFrameError("cannot build a transform from a degenerate frame")
    n, v = frame.normal, frame.axis
    rot = np.stack([n, np.cross(v, n), v])
    return RigidTransform(rotation=rot, translation=np.asarray(frame.origin, dtype=np.float64))


def global_frames_batch(poses: np.ndarray, topo: SkeletonTopology,
                        ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched whole-body transforms: (N,3,3) rotations, (N,3) origins, mask.

    Degenerate samples get the identity transform and a True mask entry.
    """
    poses = np.asarray(poses, dtype=np.float64)
    origin = 0.5 * (poses[:, topo.root_pair[0]] + poses[:, topo.root_pair[1]])
    rh, chest = poses[:, topo.plane_joints[1]], poses[:, topo.plane_joints[2]]
    n, v, deg = _frames_from_points(origin, rh, chest, origin, chest, origin)
    return _stack_transforms(n, v, origin, deg)


def part_frames_batch(poses: np.ndarray, part: PartSpec,
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched part-local transforms, identity-on-degenerate like the global case."""
    poses = np.asarray(poses, dtype=np.float64)
    q1, q2, q3 = (poses[:, i] for i in part.plane_triple)
    a1, a2 = poses[:, part.axis_pair[0]], poses[:, part.axis_pair[1]]
    origin = poses[:, part.origin_joint]
    n, v, deg = _frames_from_points(q1, q2, q3, a1, a2, origin)
    return _stack_transforms(n, v, origin, deg)


def _stack_transforms(n: np.ndarray, v: np.ndarray, origin: np.ndarray,
                      degenerate: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rot = np.stack([n, np.cross(v, n), v], axis=1)
    rot = np.where(degenerate[:, None, None], np.eye(3)[None], rot)
    trans = np.where(degenerate[:, None], 0.0, origin)
    return rot, trans, degenerate


def rotation_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


def rotation_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def rotation_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_xyz(angle_x: float, angle_y: float, angle_z: float) -> np.ndarray:
    """Compose R = RX @ RY @ RZ in the library's axis-rotation convention."""
    return rotation_x(angle_x) @ rotation_y(angle_y) @ rotation_z(angle_z)


def euler_xyz(rotation: np.ndarray) -> tuple[float, float, float]:
    """Angles (about X, Y, Z) whose RX @ RY @ RZ product reproduces ``rotation``.

    At gimbal lock (|cos of the Y angle| ~ 0) only the sum/difference of
    the X and Z angles is determined; the Z angle is reported as 0.
    """
    r = np.asarray(rotation, dtype=np.float64)
    sy = -r[0, 2]
    b = math.asin(min(1.0, max(-1.0, sy)))
    if abs(math.cos(b)) > 1e-9:
        a = math.atan2(r[1, 2], r[2, 2])
        c = math.atan2(r[0, 1], r[0, 0])
    else:
        c = 0.0
        if sy > 0:  # Y angle +pi/2
            a = math.atan2(r[1, 0], r[1, 1])
        else:
            a = math.atan2(-r[1, 0], r[1, 1])
    return a, b, c


@dataclass(frozen=True)
class SimilarityTransform:
    """Scaled rigid motion ``x -> s * R @ x + t`` from Procrustes alignment."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * (np.asarray(points, dtype=np.float64) @ self.rotation.T) \
            + self.translation


def procrustes_align(estimate: np.ndarray, reference: np.ndarray,
                     ) -> tuple[SimilarityTransform, np.ndarray]:
    """Least-squares similarity alignment of ``estimate`` onto ``reference``.

    Solves min over (s, R, t) of sum_j ||s R e_j + t - r_j||^2 in closed
    form: center both point sets, take the SVD of the cross-covariance
    U S V^T, and set R = V diag(1, 1, det(V U^T)) U^T with the matching
    trace formula for s. Returns the transform and the aligned estimate.
    """
    est = np.asarray(estimate, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if est.shape != ref.shape or est.ndim != 2 or est.shape[1] != 3:
        raise ValueError(f"shape mismatch: {est.shape} vs {ref.shape}")

    mu_e = est.mean(axis=0)
    mu_r = ref.mean(axis=0)
    x = est - mu_e
    y = ref - mu_r
    norm_x2 = float(np.sum(x * x))
    if norm_x2 < 1e-12 or float(np.sum(y * y)) < 1e-12:
        raise AlignmentError("Procrustes alignment undefined for zero-variance pose")

    h = x.T @ y
    u, s, vt = np.linalg.svd(h)
    v = vt.T
    d = 1.0 if np.linalg.det(v @ u.T) >= 0 else -1.0
    rot = v @ np.diag([1.0, 1.0, d]) @ u.T
    scale = float(s[0] + s[1] + d * s[2]) / norm_x2
    trans = mu_r - scale * (rot @ mu_e)
    sim = SimilarityTransform(scale=scale, rotation=rot, translation=trans)
    return sim, sim.apply(est)
