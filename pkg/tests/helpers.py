"""Independent oracles shared by the test suite.

Everything here deliberately avoids the library's own code paths: the
Procrustes oracle searches a rotation grid (scipy for axis-angle only),
the gradient oracle uses central finite differences, and the metric
oracles are literal double loops.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial.transform import Rotation

from vipose import nn


# -- Procrustes grid-search oracle -----------------------------------------

def _residual_for_rotation(rot: np.ndarray, xc: np.ndarray, yc: np.ndarray,
                           norm_x2: float) -> float:
    rx = xc @ rot.T
    scale = float(np.sum(yc * rx)) / norm_x2
    diff = scale * rx - yc
    return float(np.sum(diff * diff))


def grid_search_procrustes(estimate: np.ndarray, reference: np.ndarray,
                           ) -> tuple[float, np.ndarray, float]:
    """Brute-force similarity alignment over an axis-angle rotation grid.

    Returns (sum of squared residuals, best rotation, best scale). The
    grid refines down to 0.001 rad steps around the running optimum.
    """
    xc = estimate - estimate.mean(axis=0)
    yc = reference - reference.mean(axis=0)
    norm_x2 = float(np.sum(xc * xc))

    best = (np.inf, None)
    coarse = np.arange(-np.pi, np.pi, 0.25)
    for a in coarse:
        for b in coarse:
            for c in coarse:
                vec = np.array([a, b, c])
                if np.linalg.norm(vec) > np.pi + 0.25:
                    continue
                rot = Rotation.from_rotvec(vec).as_matrix()
                res = _residual_for_rotation(rot, xc, yc, norm_x2)
                if res < best[0]:
                    best = (res, vec)

    vec = best[1]
    for step in (0.1, 0.02, 0.005, 0.001):
        improved = True
        while improved:
            improved = False
            for da in (-step, 0.0, step):
                for db in (-step, 0.0, step):
                    for dc in (-step, 0.0, step):
                        cand = vec + np.array([da, db, dc])
                        rot = Rotation.from_rotvec(cand).as_matrix()
                        res = _residual_for_rotation(rot, xc, yc, norm_x2)
                        if res < best[0] - 1e-15:
                            best = (res, cand)
                            improved = True
            vec = best[1]

    rot = Rotation.from_rotvec(best[1]).as_matrix()
    rx = xc @ rot.T
    scale = float(np.sum(yc * rx)) / norm_x2
    return best[0], rot, scale


# -- finite-difference gradient oracle --------------------------------------

def fd_gradient_check(net: nn.Layer, in_dim: int, *, batch: int = 6,
                      n_params: int = 100, step: float = 1e-4,
                      seed: int = 0, rng_seed: int = 1234,
                      rel_tol: float = 1e-5) -> float:
    """Compare analytic parameter gradients against central differences.

    The loss is a fixed random linear functional of the train-mode
    output; dropout randomness is frozen by re-seeding the generator for
    every evaluation. Returns the worst relative error over the sampled
    parameters and asserts it is below ``rel_tol``.
    """
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(batch, in_dim))

    def fresh_rng():
        return np.random.default_rng(rng_seed)

    out = net.forward(x, nn.TRAIN, fresh_rng())
    projection = rng.normal(size=out.shape)

    def loss() -> float:
        return float(np.sum(net.forward(x, nn.TRAIN, fresh_rng()) * projection))

    net.zero_grads()
    net.forward(x, nn.TRAIN, fresh_rng())
    net.backward(projection)

    params = [a for _, a in net.params()]
    grads = [a for _, a in net.grads()]
    flat_sizes = [p.size for p in params]
    total = int(np.sum(flat_sizes))
    picks = rng.choice(total, size=min(n_params, total), replace=False)

    worst = 0.0
    for pick in picks:
        pi, offset = 0, int(pick)
        while offset >= flat_sizes[pi]:
            offset -= flat_sizes[pi]
            pi += 1
        flat = params[pi].reshape(-1)
        orig = flat[offset]
        flat[offset] = orig + step
        up = loss()
        flat[offset] = orig - step
        down = loss()
        flat[offset] = orig
        fd = (up - down) / (2.0 * step)
        an = grads[pi].reshape(-1)[offset]
        err = abs(fd - an)
        if err > 1e-8:
            rel = err / max(1e-8, abs(fd) + abs(an))
            worst = max(worst, rel)
    assert worst < rel_tol, f"worst relative gradient error {worst:g}"
    return worst


# -- naive metric oracles ----------------------------------------------------

def naive_mpjpe(preds, gts) -> float:
    total, count = 0.0, 0
    for n in range(len(preds)):
        for j in range(preds.shape[1]):
            d = 0.0
            for k in range(3):
                d += (preds[n, j, k] - gts[n, j, k]) ** 2
            total += math.sqrt(d)
            count += 1
    return total / count


def naive_bone_error(preds, gts, bones) -> list[float]:
    out = []
    for child, parent in bones:
        total = 0.0
        for n in range(len(preds)):
            d = 0.0
            for k in range(3):
                pb = preds[n, child, k] - preds[n, parent, k]
                gb = gts[n, child, k] - gts[n, parent, k]
                d += (pb - gb) ** 2
            total += math.sqrt(d)
        out.append(total / len(preds))
    return out


def naive_bone_std(preds, bones) -> list[float]:
    out = []
    for child, parent in bones:
        lengths = []
        for n in range(len(preds)):
            d = 0.0
            for k in range(3):
                d += (preds[n, child, k] - preds[n, parent, k]) ** 2
            lengths.append(math.sqrt(d))
        mean = sum(lengths) / len(lengths)
        var = sum((v - mean) ** 2 for v in lengths) / len(lengths)
        out.append(math.sqrt(var))
    return out


def naive_symmetry(preds, limb_pairs) -> list[float]:
    out = []
    for (lc, lp), (rc, rp) in limb_pairs:
        total = 0.0
        for n in range(len(preds)):
            dl = math.sqrt(sum((preds[n, lc, k] - preds[n, lp, k]) ** 2 for k in range(3)))
            dr = math.sqrt(sum((preds[n, rc, k] - preds[n, rp, k]) ** 2 for k in range(3)))
            total += abs(dl - dr)
        out.append(total / len(preds))
    return out


def naive_pose_l2(pred, target) -> float:
    total, count = 0.0, 0
    for n in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            d = 0.0
            for k in range(3):
                d += (pred[n, j, k] - target[n, j, k]) ** 2
            total += d
            count += 1
    return total / count


# -- misc ---------------------------------------------------------------------

def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_nondegenerate_pose(rng: np.random.Generator, topo) -> np.ndarray:
    """Random joint cloud, resampled until the body plane is well-defined."""
    from vipose.geometry import global_frame

    while True:
        pose = rng.normal(scale=300.0, size=(topo.joint_count, 3))
        if not global_frame(pose, topo).degenerate:
            return pose
