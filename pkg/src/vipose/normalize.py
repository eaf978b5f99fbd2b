"""Per-coordinate standardization of 2D inputs and 3D targets.

Statistics are computed on the training split only; evaluation code
asserts it is using the training statistics by comparing hashes.
Coordinates with zero spread pass through unscaled.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NormStats:
    mean2d: np.ndarray  # (2J,)
    std2d: np.ndarray
    mean3d: np.ndarray  # (3J,)
    std3d: np.ndarray

    def hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.mean2d, self.std2d, self.mean3d, self.std3d):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        return [("mean2d", self.mean2d), ("std2d", self.std2d),
                ("mean3d", self.mean3d), ("std3d", self.std3d)]


def _flatten(poses: np.ndarray) -> np.ndarray:
    poses = np.asarray(poses, dtype=np.float64)
    return poses.reshape(poses.shape[0], -1)


def compute_stats(poses2d: np.ndarray, poses3d: np.ndarray) -> NormStats:
    """Per-coordinate mean/std over the training samples."""
    flat2, flat3 = _flatten(poses2d), _flatten(poses3d)

    def safe_std(flat: np.ndarray) -> np.ndarray:
        std = flat.std(axis=0)
        return np.where(std > 0.0, std, 1.0)

    return NormStats(mean2d=flat2.mean(axis=0), std2d=safe_std(flat2),
                     mean3d=flat3.mean(axis=0), std3d=safe_std(flat3))


def normalize_2d(poses: np.ndarray, stats: NormStats) -> np.ndarray:
    """(N, J, 2) -> standardized (N, 2J) feature rows."""
    return (_flatten(poses) - stats.mean2d) / stats.std2d


def denormalize_2d(flat: np.ndarray, stats: NormStats) -> np.ndarray:
    un = flat * stats.std2d + stats.mean2d
    return un.reshape(un.shape[0], -1, 2)


def normalize_3d(poses: np.ndarray, stats: NormStats) -> np.ndarray:
    return (_flatten(poses) - stats.mean3d) / stats.std3d


def denormalize_3d(flat: np.ndarray, stats: NormStats) -> np.ndarray:
    un = flat * stats.std3d + stats.mean3d
    return un.reshape(un.shape[0], -1, 3)
