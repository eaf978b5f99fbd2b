"""Pose estimation pipeline: base lifting network, canonical-view
hierarchical correction with inverse transforms, and the plausibility
discriminator.

The forward path follows the block diagram: base network lifts 2D to an
initial 3D pose, the whole body is transformed to the canonical view and
refined, each of the five parts is transformed to its local canonical
frame and refined, and the inverse transforms reassemble the body and
return it to the original view.

Transforms are computed from network outputs but treated as constants by
the backward pass: differentiating through the cross products and
normalizations of frame construction is unstable near degeneracy, so
gradients flow only through the (linear) application of each transform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .errors import DataError, NumericError
from .geometry import (
    CanonicalFrame,
    RigidTransform,
    apply_batch,
    global_frame,
    global_frames_batch,
    part_frames_batch,
)
from .normalize import NormStats, denormalize_3d, normalize_2d
from .skeleton import SkeletonTopology, topology_from_dict, _topology_to_dict

# Seed-stream keys, fixed so that constructing optional components never
# perturbs the streams of the others.
STREAM_DATA = 0
STREAM_BASE = 1
STREAM_GLOBAL = 2
STREAM_PARTS = 3          # part k uses STREAM_PARTS + k
STREAM_DISC = 8
STREAM_DROPOUT = 9


def rng_stream(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key,)))


@dataclass(frozen=True)
class SchemeSpec:
    """Which pipeline pieces are active for one ablation scheme."""

    name: str
    global_refiner: bool
    part_refiners: bool
    view_transforms: bool
    discriminator: str  # "none" | "original" | "canonical"


SCHEMES = {
    s.name: s for s in (
        SchemeSpec("B", False, False, False, "none"),
        SchemeSpec("B+HC", True, True, False, "none"),
        SchemeSpec("B+VI-GC", True, False, True, "none"),
        SchemeSpec("B+VI-LC", False, True, True, "none"),
        SchemeSpec("B+VI-HC", True, True, True, "none"),
        SchemeSpec("B+VI-HC-D", True, True, True, "original"),
        SchemeSpec("B+VI-HC-VID", True, True, True, "canonical"),
    )
}


def get_scheme(name: str) -> SchemeSpec:
    if name not in SCHEMES:
        raise DataError(f"unknown scheme {name!r}; choose from {sorted(SCHEMES)}")
    return SCHEMES[name]


@dataclass(frozen=True)
class ModelConfig:
    base_width: int = 1024
    base_blocks: int = 2
    refiner_hidden: tuple[int, int] = (400, 800)
    disc_hidden: tuple[int, ...] = (256, 128, 64)
    dropout: float = 0.5
    input_scale: float = 1e-3  # mm -> network units for refiner/discriminator inputs
    correction_scale: float = 100.0  # mm of correction per unit of refiner output

    def to_dict(self) -> dict:
        return {
            "base_width": self.base_width,
            "base_blocks": self.base_blocks,
            "refiner_hidden": list(self.refiner_hidden),
            "disc_hidden": list(self.disc_hidden),
            "dropout": self.dropout,
            "input_scale": self.input_scale,
            "correction_scale": self.correction_scale,
        }

    @staticmethod
    def from_dict(data: dict) -> "ModelConfig":
        return ModelConfig(
            base_width=int(data["base_width"]),
            base_blocks=int(data["base_blocks"]),
            refiner_hidden=tuple(data["refiner_hidden"]),
            disc_hidden=tuple(data["disc_hidden"]),
            dropout=float(data["dropout"]),
            input_scale=float(data["input_scale"]),
            correction_scale=float(data["correction_scale"]),
        )


def make_base_net(joint_count: int, config: ModelConfig,
                  rng: np.random.Generator) -> nn.Sequential:
    """2J -> residual blocks at base_width -> 3J."""
    w = config.base_width
    layers: list[nn.Layer] = [
        nn.Dense(2 * joint_count, w, rng), nn.BatchNorm(w), nn.ReLU(),
        nn.Dropout(config.dropout),
    ]
    layers += [nn.ResidualBlock(w, rng, config.dropout) for _ in range(config.base_blocks)]
    layers.append(nn.Dense(w, 3 * joint_count, rng))
    return nn.Sequential(layers)


def make_refiner(dim: int, config: ModelConfig, rng: np.random.Generator) -> nn.Sequential:
    """Correction network; the zero-initialized output layer makes a fresh
    refiner the identity, so untrained refiners pass poses through."""
    h1, h2 = config.refiner_hidden
    return nn.Sequential([
        nn.Dense(dim, h1, rng), nn.BatchNorm(h1), nn.ReLU(), nn.Dropout(config.dropout),
        nn.Dense(h1, h2, rng), nn.BatchNorm(h2), nn.ReLU(), nn.Dropout(config.dropout),
        nn.Dense(h2, dim, rng, zero_init=True),
    ])


def make_discriminator(joint_count: int, config: ModelConfig,
                       rng: np.random.Generator) -> nn.Sequential:
    layers: list[nn.Layer] = []
    prev = 3 * joint_count
    for width in config.disc_hidden:
        layers += [nn.Dense(prev, width, rng), nn.ReLU()]
        prev = width
    layers += [nn.Dense(prev, 1, rng), nn.Sigmoid()]
    return nn.Sequential(layers)


@dataclass
class ForwardState:
    """Every intermediate of one batched pipeline pass, for loss/backward."""

    initial: np.ndarray            # (N, J, 3) original view, mm
    rot_g: np.ndarray              # (N, 3, 3)
    t_g: np.ndarray                # (N, 3)
    degenerate_g: np.ndarray       # (N,) bool
    canonical_initial: np.ndarray  # (N, J, 3)
    stage1: np.ndarray             # (N, J, 3) after global refiner
    part_rots: list[np.ndarray]
    part_ts: list[np.ndarray]
    part_degenerate: list[np.ndarray]
    part_locals: list[np.ndarray]          # refined local coords per part
    canonical_refined: np.ndarray  # (N, J, 3) reassembled, pre-inverse
    final: np.ndarray              # (N, J, 3) original view


@dataclass
class PipelineOutput:
    """Single-pose estimation result with the transforms that produced it."""

    initial: np.ndarray
    canonical_refined: np.ndarray
    final: np.ndarray
    global_transform: RigidTransform
    part_transforms: list[RigidTransform]
    degenerate_global: bool
    degenerate_parts: list[bool]


class Pipeline:
    """Trained or trainable network bundle for one ablation scheme."""

    def __init__(self, topo: SkeletonTopology, scheme: SchemeSpec,
                 config: ModelConfig, stats: NormStats, seed: int):
        self.topo = topo
        self.scheme = scheme
        self.config = config
        self.stats = stats
        self.seed = seed
        j = topo.joint_count
        self.base = make_base_net(j, config, rng_stream(seed, STREAM_BASE))
        self.global_refiner = (
            make_refiner(3 * j, config, rng_stream(seed, STREAM_GLOBAL))
            if scheme.global_refiner else None)
        self.part_refiners = (
            [make_refiner(3 * len(p.joints), config, rng_stream(seed, STREAM_PARTS + k))
             for k, p in enumerate(topo.parts)]
            if scheme.part_refiners else None)
        self.discriminator = (
            make_discriminator(j, config, rng_stream(seed, STREAM_DISC))
            if scheme.discriminator != "none" else None)
        self.dropout_rng = rng_stream(seed, STREAM_DROPOUT)

    # -- transforms ------------------------------------------------------

    def global_transforms(self, poses: np.ndarray,
                          ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Canonicalizing transforms, or root-centering only for no-view schemes."""
        if self.scheme.view_transforms:
            return global_frames_batch(poses, self.topo)
        n = len(poses)
        rot = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
        t = 0.5 * (poses[:, self.topo.root_pair[0]] + poses[:, self.topo.root_pair[1]])
        return rot, t, np.zeros(n, dtype=bool)

    def part_transforms(self, poses: np.ndarray, k: int,
                        ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        part = self.topo.parts[k]
        if self.scheme.view_transforms:
            return part_frames_batch(poses, part)
        n = len(poses)
        rot = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
        return rot, poses[:, part.origin_joint].copy(), np.zeros(n, dtype=bool)

    # -- forward ---------------------------------------------------------

    def forward_batch(self, poses2d: np.ndarray, mode: str = nn.EVAL,
                      transforms: ForwardState | None = None) -> ForwardState:
        """Run the full pipeline on a (N, J, 2) batch.

        When ``transforms`` holds a previous state, its rigid transforms
        are reused instead of recomputed; this freezes the (stop-gradient)
        transforms, which finite-difference checks need.
        """
        rng = self.dropout_rng if mode == nn.TRAIN else None
        scale = self.config.input_scale
        x2n = normalize_2d(poses2d, self.stats)
        y0 = self.base.forward(x2n, mode, rng)
        initial = denormalize_3d(y0, self.stats)
        n = len(initial)

        if transforms is None:
            rot_g, t_g, deg_g = self.global_transforms(initial)
        else:
            rot_g, t_g, deg_g = transforms.rot_g, transforms.t_g, transforms.degenerate_g
        c0 = apply_batch(rot_g, t_g, initial)

        gain = self.config.correction_scale
        if self.global_refiner is not None:
            corr = self.global_refiner.forward(c0.reshape(n, -1) * scale, mode, rng)
            stage1 = c0 + corr.reshape(c0.shape) * gain
        else:
            stage1 = c0

        part_rots, part_ts, part_deg, part_locals = [], [], [], []
        c2 = stage1.copy()
        if self.part_refiners is not None:
            for k, part in enumerate(self.topo.parts):
                if transforms is None:
                    rot_k, t_k, deg_k = self.part_transforms(stage1, k)
                else:
                    rot_k = transforms.part_rots[k]
                    t_k = transforms.part_ts[k]
                    deg_k = transforms.part_degenerate[k]
                joints = list(part.joints)
                local = apply_batch(rot_k, t_k, stage1[:, joints])
                corr = self.part_refiners[k].forward(
                    local.reshape(n, -1) * scale, mode, rng)
                refined = local + corr.reshape(local.shape) * gain
                rot_inv = rot_k.transpose(0, 2, 1)
                t_inv = -np.einsum("nij,nj->ni", rot_k, t_k)
                c2[:, joints] = apply_batch(rot_inv, t_inv, refined)
                part_rots.append(rot_k)
                part_ts.append(t_k)
                part_deg.append(deg_k)
                part_locals.append(refined)

        final = apply_batch(rot_g.transpose(0, 2, 1),
                            -np.einsum("nij,nj->ni", rot_g, t_g), c2)
        if not np.isfinite(final).all():
            raise NumericError("non-finite activations in pipeline forward pass")
        return ForwardState(
            initial=initial, rot_g=rot_g, t_g=t_g, degenerate_g=deg_g,
            canonical_initial=c0, stage1=stage1,
            part_rots=part_rots, part_ts=part_ts, part_degenerate=part_deg,
            part_locals=part_locals, canonical_refined=c2, final=final)

    # -- backward --------------------------------------------------------

    def backward_batch(self, state: ForwardState,
                       d_stage1: np.ndarray | None = None,
                       d_part_locals: list[np.ndarray] | None = None,
                       d_canonical: np.ndarray | None = None,
                       d_final: np.ndarray | None = None) -> None:
        """Accumulate generator parameter gradients for a train-mode pass.

        Gradient sources: the global-stage loss (on ``stage1``), the
        part-stage losses (on each part's refined local coordinates), and
        adversarial feedback on the reassembled canonical pose or on the
        final original-view pose. Transforms are constants here.
        """
        scale = self.config.input_scale
        gain = self.config.correction_scale
        n = len(state.initial)
        j = self.topo.joint_count
        d_c2 = np.zeros((n, j, 3))
        if d_canonical is not None:
            d_c2 += d_canonical
        if d_final is not None:
            # final = R_g^T (c2 - t_inv)  =>  d_c2 = R_g d_final
            d_c2 += np.einsum("nij,nkj->nki", state.rot_g, d_final)

        d_c1 = np.zeros((n, j, 3))
        if self.part_refiners is not None:
            in_part = np.zeros(j, dtype=bool)
            for part in self.topo.parts:
                in_part[list(part.joints)] = True
            d_c1[:, ~in_part] = d_c2[:, ~in_part]
            for k, part in enumerate(self.topo.parts):
                joints = list(part.joints)
                rot_k = state.part_rots[k]
                # c2[joints] = R_k^T (refined - t_inv)  =>  d_refined = R_k d_c2
                d_refined = np.einsum("nij,nkj->nki", rot_k, d_c2[:, joints])
                if d_part_locals is not None:
                    d_refined = d_refined + d_part_locals[k]
                d_w = self.part_refiners[k].backward(d_refined.reshape(n, -1) * gain)
                d_local = d_refined + d_w.reshape(d_refined.shape) * scale
                # local = R_k (c1[joints] - t_k)  =>  d_c1 = R_k^T d_local
                d_c1[:, joints] += np.einsum("nji,nkj->nki", rot_k, d_local)
        else:
            d_c1 += d_c2

        if d_stage1 is not None:
            d_c1 = d_c1 + d_stage1

        if self.global_refiner is not None:
            d_w = self.global_refiner.backward(d_c1.reshape(n, -1) * gain)
            d_c0 = d_c1 + d_w.reshape(d_c1.shape) * scale
        else:
            d_c0 = d_c1

        d_initial = np.einsum("nji,nkj->nki", state.rot_g, d_c0)
        d_y0 = d_initial.reshape(n, -1) * self.stats.std3d
        self.base.backward(d_y0)

    # -- parameter plumbing ----------------------------------------------

    def generator_nets(self) -> list[tuple[str, nn.Layer]]:
        nets: list[tuple[str, nn.Layer]] = [("base", self.base)]
        if self.global_refiner is not None:
            nets.append(("global", self.global_refiner))
        if self.part_refiners is not None:
            nets += [(f"part_{k}", net) for k, net in enumerate(self.part_refiners)]
        return nets

    def generator_params(self) -> list[np.ndarray]:
        return [a for _, net in self.generator_nets() for _, a in net.params()]

    def generator_grads(self) -> list[np.ndarray]:
        return [a for _, net in self.generator_nets() for _, a in net.grads()]

    def zero_generator_grads(self) -> None:
        for _, net in self.generator_nets():
            net.zero_grads()

    # -- inference -------------------------------------------------------

    def predict(self, poses2d: np.ndarray) -> np.ndarray:
        """Eval-mode final poses for a (N, J, 2) batch."""
        return self.forward_batch(np.asarray(poses2d, dtype=np.float64)).final

    def estimate(self, pose2d: np.ndarray) -> PipelineOutput:
        """Full single-pose output with transforms and degeneracy flags."""
        state = self.forward_batch(np.asarray(pose2d, dtype=np.float64)[None])
        part_transforms = [
            RigidTransform(rotation=state.part_rots[k][0], translation=state.part_ts[k][0])
            for k in range(len(state.part_rots))]
        return PipelineOutput(
            initial=state.initial[0],
            canonical_refined=state.canonical_refined[0],
            final=state.final[0],
            global_transform=RigidTransform(rotation=state.rot_g[0],
                                            translation=state.t_g[0]),
            part_transforms=part_transforms,
            degenerate_global=bool(state.degenerate_g[0]),
            degenerate_parts=[bool(d[0]) for d in state.part_degenerate],
        )

    # -- persistence -----------------------------------------------------

    def component_nets(self) -> list[tuple[str, nn.Layer]]:
        nets = self.generator_nets()
        if self.discriminator is not None:
            nets.append(("disc", self.discriminator))
        return nets

    def save(self, out_dir) -> Path:
        """Write one checkpoint per component plus the pipeline manifest."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        topo_hash = self.topo.hash()
        components = {}
        for name, net in self.component_nets():
            fname = f"{name}.ckpt"
            nn.save_checkpoint(out_dir / fname, nn.network_state(net), topo_hash)
            components[name] = fname
        nn.save_checkpoint(out_dir / "stats.ckpt", self.stats.arrays(), topo_hash)
        manifest = {
            "format": 1,
            "scheme": self.scheme.name,
            "model_config": self.config.to_dict(),
            "seed": self.seed,
            "topology": _topology_to_dict(self.topo),
            "topology_hash": topo_hash,
            "stats_hash": self.stats.hash(),
            "components": components,
            "stats_file": "stats.ckpt",
        }
        path = out_dir / "pipeline.json"
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    @staticmethod
    def load(manifest_path) -> "Pipeline":
        manifest_path = Path(manifest_path)
        if manifest_path.is_dir():
            manifest_path = manifest_path / "pipeline.json"
        if not manifest_path.exists():
            raise DataError(f"missing pipeline manifest: {manifest_path}")
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        topo = topology_from_dict(manifest["topology"])
        topo_hash = topo.hash()
        if topo_hash != manifest["topology_hash"]:
            raise DataError("topology hash mismatch in pipeline manifest")
        base_dir = manifest_path.parent
        stats_arrays, stats_hash_src = nn.load_checkpoint(base_dir / manifest["stats_file"])
        if stats_hash_src != topo_hash:
            raise DataError("stats checkpoint bound to a different topology")
        stats = NormStats(mean2d=stats_arrays["mean2d"], std2d=stats_arrays["std2d"],
                          mean3d=stats_arrays["mean3d"], std3d=stats_arrays["std3d"])
        if stats.hash() != manifest["stats_hash"]:
            raise DataError("normalization statistics hash mismatch")
        pipe = Pipeline(topo, get_scheme(manifest["scheme"]),
                        ModelConfig.from_dict(manifest["model_config"]), stats,
                        seed=int(manifest["seed"]))
        for name, net in pipe.component_nets():
            fname = manifest["components"].get(name)
            if fname is None or not (base_dir / fname).exists():
                raise DataError(f"missing checkpoint for component {name!r}")
            arrays, ck_hash = nn.load_checkpoint(base_dir / fname)
            if ck_hash != topo_hash:
                raise DataError(f"checkpoint {fname} bound to a different topology")
            nn.load_network_state(net, arrays)
        return pipe


def discriminate(pose_canonical: np.ndarray, disc: nn.Layer,
                 topo: SkeletonTopology, input_scale: float = 1e-3) -> float:
    """Plausibility score in (0, 1) for a pose already in the canonical view.

    In debug runs (the default; disabled by ``python -O``) the pose is
    checked to actually be canonical: recomputed frame within 1e-3 of
    (n = +X, v = +Z, origin = 0).
    """
    pose = np.asarray(pose_canonical, dtype=np.float64)
    if __debug__:
        frame = global_frame(pose, topo)
        assert _is_canonical(frame), "discriminator input is not in the canonical view"
    score = disc.forward(pose.reshape(1, -1) * input_scale)
    return float(score[0, 0])


def _is_canonical(frame: CanonicalFrame, tol: float = 1e-3) -> bool:
    if frame.degenerate:
        return False
    return (np.abs(frame.normal - np.array([1.0, 0.0, 0.0])).max() < tol
            and np.abs(frame.axis - np.array([0.0, 0.0, 1.0])).max() < tol
            and np.abs(frame.origin).max() < tol)
