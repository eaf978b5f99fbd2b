"""Pose evaluation metrics, report container, and the split/protocol harness.

All metric functions take prediction/ground-truth batches of shape
(N, J, 3) in millimeters and are pure: any root-centering happens in
``evaluate``, controlled by its flag, never inside the metric itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import euler_xyz, procrustes_align
from .skeleton import SkeletonTopology


def _as_batch(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[-1] != 3:
        raise ValueError(f"expected (N, J, 3) batch, got {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError("empty evaluation set")
    return arr


def mpjpe(preds: np.ndarray, gts: np.ndarray) -> float:
    """Mean Euclidean joint distance over all samples and joints."""
    preds, gts = _as_batch(preds), _as_batch(gts)
    if preds.shape != gts.shape:
        raise ValueError(f"shape mismatch: {preds.shape} vs {gts.shape}")
    return float(np.linalg.norm(preds - gts, axis=-1).mean())


def per_joint_error(preds: np.ndarray, gts: np.ndarray) -> np.ndarray:
    preds, gts = _as_batch(preds), _as_batch(gts)
    return np.linalg.norm(preds - gts, axis=-1).mean(axis=0)


def pa_mpjpe(preds: np.ndarray, gts: np.ndarray) -> float:
    """MPJPE after per-sample similarity (Procrustes) alignment."""
    preds, gts = _as_batch(preds), _as_batch(gts)
    total = 0.0
    for pred, gt in zip(preds, gts):
        _, aligned = procrustes_align(pred, gt)
        total += np.linalg.norm(aligned - gt, axis=-1).mean()
    return float(total / len(preds))


def bone_error(preds: np.ndarray, gts: np.ndarray,
               topo: SkeletonTopology) -> np.ndarray:
    """Per-bone mean distance between predicted and true bone vectors."""
    preds, gts = _as_batch(preds), _as_batch(gts)
    out = np.empty(len(topo.bones))
    for i, (child, parent) in enumerate(topo.bones):
        diff = (preds[:, child] - preds[:, parent]) - (gts[:, child] - gts[:, parent])
        out[i] = np.linalg.norm(diff, axis=-1).mean()
    return out


def bone_std(preds: np.ndarray, topo: SkeletonTopology) -> np.ndarray:
    """Per-bone population standard deviation of predicted bone lengths."""
    preds = _as_batch(preds)
    if preds.shape[0] < 2:
        raise ValueError("bone length deviation needs at least 2 samples")
    out = np.empty(len(topo.bones))
    for i, (child, parent) in enumerate(topo.bones):
        lengths = np.linalg.norm(preds[:, child] - preds[:, parent], axis=-1)
        out[i] = lengths.std()
    return out


def symmetry(preds: np.ndarray, topo: SkeletonTopology) -> np.ndarray:
    """Per limb pair, mean absolute left/right bone-length difference."""
    preds = _as_batch(preds)
    out = np.empty(len(topo.limb_pairs))
    for i, ((lc, lp), (rc, rp)) in enumerate(topo.limb_pairs):
        left = np.linalg.norm(preds[:, lc] - preds[:, lp], axis=-1)
        right = np.linalg.norm(preds[:, rc] - preds[:, rp], axis=-1)
        out[i] = np.abs(left - right).mean()
    return out


LIMB_PAIR_NAMES = ("U.Arm", "L.Arm", "U.Leg", "L.Leg")


@dataclass
class EvalReport:
    """Per-joint, per-bone and aggregate metrics for one evaluation run."""

    mpjpe: float
    pa_mpjpe: float
    per_joint_error: np.ndarray
    bone_error: np.ndarray
    bone_error_mean: float
    bone_std: np.ndarray
    bone_std_mean: float
    symmetry: np.ndarray
    symmetry_mean: float
    sample_count: int

    def to_dict(self) -> dict:
        return {
            "mpjpe": self.mpjpe,
            "pa_mpjpe": self.pa_mpjpe,
            "per_joint_error": self.per_joint_error.tolist(),
            "bone_error": self.bone_error.tolist(),
            "bone_error_mean": self.bone_error_mean,
            "bone_std": self.bone_std.tolist(),
            "bone_std_mean": self.bone_std_mean,
            "symmetry": self.symmetry.tolist(),
            "symmetry_mean": self.symmetry_mean,
            "sample_count": self.sample_count,
        }


def root_center(poses: np.ndarray, topo: SkeletonTopology) -> np.ndarray:
    """Subtract the hip midpoint (the root) from every joint."""
    poses = np.asarray(poses, dtype=np.float64)
    root = 0.5 * (poses[..., topo.root_pair[0], :] + poses[..., topo.root_pair[1], :])
    return poses - root[..., None, :]


def evaluate(preds: np.ndarray, gts: np.ndarray, topo: SkeletonTopology,
             root_relative: bool = True) -> EvalReport:
    """Full metric suite; root-centers both sets first unless disabled."""
    preds, gts = _as_batch(preds), _as_batch(gts)
    if root_relative:
        preds = root_center(preds, topo)
        gts = root_center(gts, topo)
    be = bone_error(preds, gts, topo)
    bs = bone_std(preds, topo)
    sym = symmetry(preds, topo)
    return EvalReport(
        mpjpe=mpjpe(preds, gts),
        pa_mpjpe=pa_mpjpe(preds, gts),
        per_joint_error=per_joint_error(preds, gts),
        bone_error=be,
        bone_error_mean=float(be.mean()),
        bone_std=bs,
        bone_std_mean=float(bs.mean()),
        symmetry=sym,
        symmetry_mean=float(sym.mean()),
        sample_count=len(preds),
    )


def report_table(report: EvalReport, topo: SkeletonTopology) -> str:
    """Fixed-column text table: joint error plus bone metrics per bone row."""
    lines = []
    lines.append(f"samples: {report.sample_count}")
    lines.append(f"{'':24s}{'JointErr':>10s}{'BoneErr':>10s}{'BoneStd':>10s}")
    bone_of_child = {child: i for i, (child, _) in enumerate(topo.bones)}
    for j, name in enumerate(topo.joint_names):
        row = f"{name:24s}{report.per_joint_error[j]:10.2f}"
        if j in bone_of_child:
            i = bone_of_child[j]
            row += f"{report.bone_error[i]:10.2f}{report.bone_std[i]:10.2f}"
        lines.append(row)
    lines.append(f"{'Avg.':24s}{report.mpjpe:10.2f}"
                 f"{report.bone_error_mean:10.2f}{report.bone_std_mean:10.2f}")
    lines.append("")
    lines.append(f"{'MPJPE':24s}{report.mpjpe:10.2f}")
    lines.append(f"{'PA-MPJPE':24s}{report.pa_mpjpe:10.2f}")
    lines.append("")
    header = "".join(f"{n:>10s}" for n in LIMB_PAIR_NAMES[:len(report.symmetry)])
    lines.append(f"{'Symmetry':24s}{header}{'Avg.':>10s}")
    values = "".join(f"{v:10.2f}" for v in report.symmetry)
    lines.append(f"{'':24s}{values}{report.symmetry_mean:10.2f}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SplitSpec:
    """Train/test partition: random by sample id, or by viewpoint bucket.

    View mode buckets samples by the yaw angle (rotation about the
    canonical up axis) of their generating view rotation, splitting the
    full turn into ``n_buckets`` equal sectors; training uses
    ``train_buckets`` (default: every bucket except ``test_bucket``).
    """

    mode: str = "random"
    train_fraction: float = 0.8
    seed: int = 0
    n_buckets: int = 4
    test_bucket: int = 3
    train_buckets: tuple[int, ...] | None = None

    def split(self, scenes, count: int) -> tuple[np.ndarray, np.ndarray]:
        if self.mode == "random":
            rng = np.random.default_rng(self.seed)
            perm = rng.permutation(count)
            n_train = int(round(self.train_fraction * count))
            return np.sort(perm[:n_train]), np.sort(perm[n_train:])
        if self.mode != "view":
            raise ValueError(f"unknown split mode {self.mode!r}")
        train_buckets = self.train_buckets
        if train_buckets is None:
            train_buckets = tuple(b for b in range(self.n_buckets) if b != self.test_bucket)
        if self.test_bucket in train_buckets:
            raise ValueError("overlapping splits: test bucket also used for training")
        buckets = np.array([view_bucket(s, self.n_buckets) for s in scenes])
        train_idx = np.flatnonzero(np.isin(buckets, train_buckets))
        test_idx = np.flatnonzero(buckets == self.test_bucket)
        if len(train_idx) == 0 or len(test_idx) == 0:
            raise ValueError("view split produced an empty partition")
        return train_idx, test_idx


def view_bucket(scene, n_buckets: int) -> int:
    """Sector index of the scene's yaw angle in [-pi, pi)."""
    yaw = euler_xyz(scene.view_rotation.rotation)[2]
    width = 2.0 * np.pi / n_buckets
    return min(int((yaw + np.pi) / width), n_buckets - 1)


def run_protocol(dataset, split_spec: SplitSpec, model,
                 topo: SkeletonTopology, root_relative: bool = True,
                 ) -> tuple[EvalReport, np.ndarray, np.ndarray]:
    """Split, optionally fit, predict on the held-out samples, evaluate.

    ``dataset`` is a (poses2d, poses3d, scenes) triple. ``model`` needs
    ``predict(poses2d) -> poses3d``; if it also has ``fit``, it is
    trained on the training partition first. Test samples are passed in
    ascending index order. Returns the report plus both index arrays.
    """
    poses2d, poses3d, scenes = dataset
    train_idx, test_idx = split_spec.split(scenes, len(poses2d))
    if np.intersect1d(train_idx, test_idx).size:
        raise ValueError("overlapping splits")
    if hasattr(model, "fit"):
        model.fit(poses2d[train_idx], poses3d[train_idx])
    preds = model.predict(poses2d[test_idx])
    report = evaluate(preds, poses3d[test_idx], topo, root_relative=root_relative)
    return report, train_idx, test_idx
