"""Losses and the training loop: pose supervision on both correction
stages, binary cross-entropy adversarial terms, and alternating
discriminator/generator updates.

Stage supervision frames: targets are ground-truth poses transformed by
frames computed from the ground truth, while predictions ride their own
estimate-derived frames. With the adversarial weight at zero the
adversarial path is skipped entirely, so training is identical to a
build without the discriminator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import NumericError
from .geometry import apply_batch
from .metrics import mpjpe, root_center
from .model import (
    STREAM_DATA,
    ModelConfig,
    Pipeline,
    get_scheme,
    rng_stream,
)
from .normalize import compute_stats, normalize_2d, normalize_3d
from .skeleton import SkeletonTopology

BCE_CLAMP = 1e-7


@dataclass(frozen=True)
class LossReport:
    """Loss components for one step or epoch; total = l2 + lambda * adv."""

    l2_pose: float        # mm^2
    generator_adv: float  # nats
    discriminator: float  # nats
    total: float
    lambda_: float

    @staticmethod
    def build(l2_pose: float, generator_adv: float, discriminator: float,
              lambda_: float) -> "LossReport":
        return LossReport(l2_pose=l2_pose, generator_adv=generator_adv,
                          discriminator=discriminator,
                          total=l2_pose + lambda_ * generator_adv, lambda_=lambda_)


@dataclass(frozen=True)
class TrainConfig:
    lambda_: float = 0.001
    lr_gen: float = 1e-3
    lr_disc: float = 1e-4
    batch_size: int = 64
    pretrain_epochs: int = 50
    epochs: int = 50
    seed: int = 0
    disc_steps: int = 1
    gen_steps: int = 1
    # step decay applied to the learning rates at these fractions of each
    # phase (e.g. (0.6, 0.85) -> two decays within the phase)
    lr_decay: float = 1.0
    lr_decay_at: tuple[float, ...] = ()
    pretrain_decay_at: tuple[float, ...] = ()
    # base-network learning-rate multiplier during the joint phase; < 1
    # fine-tunes a converged base gently while refiners learn at full rate
    joint_base_lr_scale: float = 1.0

    def validate(self) -> None:
        if self.lambda_ < 0:
            raise ValueError("adversarial weight must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2 (batch normalization)")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr decay factor must be in (0, 1]")
        if self.joint_base_lr_scale < 0:
            raise ValueError("base lr scale must be >= 0")

    def _decayed(self, lr: float, epoch: int, total: int,
                 marks: tuple[float, ...]) -> float:
        passed = sum(1 for frac in marks if epoch > frac * total)
        return lr * self.lr_decay ** passed

    def pretrain_lr(self, epoch: int) -> float:
        return self._decayed(self.lr_gen, epoch, self.pretrain_epochs,
                             self.pretrain_decay_at)

    def joint_lr(self, epoch: int) -> tuple[float, float]:
        """Generator/discriminator learning rates for one joint epoch."""
        return (self._decayed(self.lr_gen, epoch, self.epochs, self.lr_decay_at),
                self._decayed(self.lr_disc, epoch, self.epochs, self.lr_decay_at))

    def to_dict(self) -> dict:
        return {
            "lambda": self.lambda_, "lr_gen": self.lr_gen, "lr_disc": self.lr_disc,
            "batch_size": self.batch_size, "pretrain_epochs": self.pretrain_epochs,
            "epochs": self.epochs, "seed": self.seed,
            "disc_steps": self.disc_steps, "gen_steps": self.gen_steps,
            "lr_decay": self.lr_decay, "lr_decay_at": list(self.lr_decay_at),
            "pretrain_decay_at": list(self.pretrain_decay_at),
            "joint_base_lr_scale": self.joint_base_lr_scale,
        }

    @staticmethod
    def from_dict(data: dict) -> "TrainConfig":
        known = {
            "lambda": "lambda_", "lr_gen": "lr_gen", "lr_disc": "lr_disc",
            "batch_size": "batch_size", "pretrain_epochs": "pretrain_epochs",
            "epochs": "epochs", "seed": "seed",
            "disc_steps": "disc_steps", "gen_steps": "gen_steps",
            "lr_decay": "lr_decay", "lr_decay_at": "lr_decay_at",
            "pretrain_decay_at": "pretrain_decay_at",
            "joint_base_lr_scale": "joint_base_lr_scale",
        }
        tuple_keys = {"lr_decay_at", "pretrain_decay_at"}
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                raise ValueError(f"unknown training config key {key!r}")
            kwargs[known[key]] = tuple(value) if key in tuple_keys else value
        return TrainConfig(**kwargs)


def bce_loss(scores: np.ndarray, target: float) -> float:
    """Mean binary cross entropy against a constant 0/1 target, clamped."""
    p = np.clip(np.asarray(scores, dtype=np.float64).ravel(),
                BCE_CLAMP, 1.0 - BCE_CLAMP)
    if target == 1.0:
        return float(-np.log(p).mean())
    if target == 0.0:
        return float(-np.log1p(-p).mean())
    return float(-(target * np.log(p) + (1.0 - target) * np.log1p(-p)).mean())


def bce_grad(scores: np.ndarray, target: float) -> np.ndarray:
    """d(mean BCE)/d(scores), through the same clamp as the loss."""
    scores = np.asarray(scores, dtype=np.float64)
    p = np.clip(scores, BCE_CLAMP, 1.0 - BCE_CLAMP)
    grad = (-target / p + (1.0 - target) / (1.0 - p)) / scores.size
    return grad.reshape(scores.shape)


def pose_loss(stage_pairs: list[tuple[np.ndarray, np.ndarray]],
              ) -> tuple[float, list[float]]:
    """Mean of stage means of squared per-joint error (mm^2).

    Each pair is (prediction, target) with shape (N, K, 3); the stage
    mean averages squared joint distances over samples and joints.
    """
    if not stage_pairs:
        raise ValueError("pose loss needs at least one stage")
    stage_values = []
    for pred, target in stage_pairs:
        if pred.shape != target.shape:
            raise ValueError(f"stage shape mismatch: {pred.shape} vs {target.shape}")
        diff = pred - target
        stage_values.append(float(np.sum(diff * diff, axis=-1).mean()))
    return float(np.mean(stage_values)), stage_values


def generator_loss(disc: nn.Layer, fake_canonical: np.ndarray,
                   input_scale: float = 1e-3) -> float:
    """Mean BCE of discriminator scores on generated canonical poses vs 1."""
    flat = np.asarray(fake_canonical, dtype=np.float64).reshape(len(fake_canonical), -1)
    return bce_loss(disc.forward(flat * input_scale), 1.0)


def discriminator_loss(disc: nn.Layer, real_canonical: np.ndarray,
                       fake_canonical: np.ndarray,
                       input_scale: float = 1e-3) -> float:
    """BCE(real -> 1) + BCE(fake -> 0), each a batch mean."""
    real = np.asarray(real_canonical, dtype=np.float64).reshape(len(real_canonical), -1)
    fake = np.asarray(fake_canonical, dtype=np.float64).reshape(len(fake_canonical), -1)
    return bce_loss(disc.forward(real * input_scale), 1.0) \
        + bce_loss(disc.forward(fake * input_scale), 0.0)


@dataclass
class EpochLog:
    epoch: int
    phase: str            # "pretrain" | "joint"
    l2_pose: float
    generator_adv: float
    discriminator: float
    total: float
    eval_mpjpe: float | None


class Trainer:
    """Owns one pipeline's optimization: pretraining then joint training."""

    def __init__(self, pipeline: Pipeline, config: TrainConfig,
                 train2d: np.ndarray, train3d: np.ndarray,
                 eval2d: np.ndarray | None = None,
                 eval3d: np.ndarray | None = None):
        config.validate()
        self.pipeline = pipeline
        self.config = config
        self.train2d = np.asarray(train2d, dtype=np.float64)
        self.train3d = np.asarray(train3d, dtype=np.float64)
        self.eval2d = eval2d
        self.eval3d = eval3d
        self.data_rng = rng_stream(config.seed, STREAM_DATA)
        self.pretrain_adam = nn.AdamState()
        self.joint_base_adam = nn.AdamState()
        self.joint_refiner_adam = nn.AdamState()
        self.disc_adam = nn.AdamState()
        self.history: list[EpochLog] = []
        self._prepare_targets()

    def _prepare_targets(self) -> None:
        pipe = self.pipeline
        gt = self.train3d
        self.target3n = normalize_3d(gt, pipe.stats)
        if pipe.scheme.discriminator == "original":
            self.disc_real = root_center(gt, pipe.topo)
        else:
            # Real samples for the discriminator: ground truth under its
            # own consistent view (ground-truth-derived global frames).
            rot_g, t_g, _ = pipe.global_transforms(gt)
            self.disc_real = apply_batch(rot_g, t_g, gt)

    def _stage_targets(self, state, gt_batch: np.ndarray,
                       ) -> tuple[np.ndarray, list[np.ndarray]]:
        """Ground truth carried into the estimate's stage frames.

        Because the frames are rigid, matching the canonical-view stage
        output to ground truth transformed by the *estimate's* frames is
        exactly matching the stage output in the original view; targets
        built from ground-truth frames instead would make a rigid
        orientation error of the estimate invisible to the loss.
        """
        pipe = self.pipeline
        stage1_target = apply_batch(state.rot_g, state.t_g, gt_batch)
        part_targets = []
        if pipe.scheme.part_refiners:
            for k, part in enumerate(pipe.topo.parts):
                part_targets.append(apply_batch(
                    state.part_rots[k], state.part_ts[k],
                    stage1_target[:, list(part.joints)]))
        return stage1_target, part_targets

    @property
    def use_adversarial(self) -> bool:
        return (self.pipeline.discriminator is not None
                and self.config.lambda_ > 0.0)

    def _batches(self, count: int):
        order = self.data_rng.permutation(count)
        bs = self.config.batch_size
        for start in range(0, count - 1, bs):
            batch = order[start:start + bs]
            if len(batch) >= 2:  # batchnorm needs at least 2 rows
                yield batch

    def pretrain_epoch(self, epoch: int) -> EpochLog:
        """One epoch of L2-only training of the base network."""
        pipe = self.pipeline
        lr = self.config.pretrain_lr(epoch)
        losses = []
        for batch in self._batches(len(self.train2d)):
            x2n = normalize_2d(self.train2d[batch], pipe.stats)
            y0 = pipe.base.forward(x2n, nn.TRAIN, pipe.dropout_rng)
            diff = y0 - self.target3n[batch]
            loss = float((diff * diff).mean())
            if not np.isfinite(loss):
                raise NumericError(f"non-finite pretraining loss at epoch {epoch}")
            pipe.base.zero_grads()
            pipe.base.backward(2.0 * diff / diff.size)
            base_params = [a for _, a in pipe.base.params()]
            base_grads = [a for _, a in pipe.base.grads()]
            nn.adam_step(base_params, base_grads, self.pretrain_adam, lr)
            losses.append(loss)
        log = EpochLog(epoch=epoch, phase="pretrain", l2_pose=float(np.mean(losses)),
                       generator_adv=0.0, discriminator=0.0,
                       total=float(np.mean(losses)), eval_mpjpe=self._eval())
        self.history.append(log)
        return log

    def joint_epoch(self, epoch: int) -> LossReport:
        """Alternating updates: discriminator step(s) then generator step(s)."""
        pipe = self.pipeline
        cfg = self.config
        scale = pipe.config.input_scale
        lr_gen, lr_disc = cfg.joint_lr(epoch)
        l2_vals, adv_vals, disc_vals = [], [], []

        for batch in self._batches(len(self.train2d)):
            state = pipe.forward_batch(self.train2d[batch], nn.TRAIN)
            n = len(batch)

            disc_val = 0.0
            if self.use_adversarial:
                disc = pipe.discriminator
                fake = state.canonical_refined if pipe.scheme.discriminator == "canonical" \
                    else root_center(state.final, pipe.topo)
                fake_flat = fake.reshape(n, -1) * scale
                real_flat = self.disc_real[batch].reshape(n, -1) * scale
                for _ in range(cfg.disc_steps):
                    disc.zero_grads()
                    s_real = disc.forward(real_flat, nn.TRAIN)
                    disc.backward(bce_grad(s_real, 1.0))
                    s_fake = disc.forward(fake_flat, nn.TRAIN)
                    disc.backward(bce_grad(s_fake, 0.0))
                    disc_val = bce_loss(s_real, 1.0) + bce_loss(s_fake, 0.0)
                    params = [a for _, a in disc.params()]
                    grads = [a for _, a in disc.grads()]
                    nn.adam_step(params, grads, self.disc_adam, lr_disc)

            # Generator step: stage losses plus (optionally) adversarial push.
            # All part-local coordinates pool into one stage-2 term.
            stage1_target, part_targets = self._stage_targets(state, self.train3d[batch])
            stage_pairs = [(state.stage1, stage1_target)]
            if pipe.scheme.part_refiners:
                stage2_pred = np.concatenate(state.part_locals, axis=1)
                stage2_tgt = np.concatenate(part_targets, axis=1)
                stage_pairs.append((stage2_pred, stage2_tgt))
            l2_val, _ = pose_loss(stage_pairs)
            n_stages = len(stage_pairs)

            d_stage1 = (2.0 / (n_stages * state.stage1[..., 0].size)) \
                * (state.stage1 - stage1_target)
            d_parts = None
            if pipe.scheme.part_refiners:
                d_stage2 = (2.0 / (n_stages * stage2_pred[..., 0].size)) \
                    * (stage2_pred - stage2_tgt)
                d_parts = []
                offset = 0
                for part in pipe.topo.parts:
                    width = len(part.joints)
                    d_parts.append(d_stage2[:, offset:offset + width])
                    offset += width

            adv_val = 0.0
            d_canonical = None
            d_final = None
            if self.use_adversarial:
                disc = pipe.discriminator
                fake = state.canonical_refined if pipe.scheme.discriminator == "canonical" \
                    else root_center(state.final, pipe.topo)
                fake_flat = fake.reshape(n, -1) * scale
                scores = disc.forward(fake_flat, nn.TRAIN)
                adv_val = bce_loss(scores, 1.0)
                d_input = disc.backward(bce_grad(scores, 1.0))
                d_pose = cfg.lambda_ * scale * d_input.reshape(n, -1, 3)
                if pipe.scheme.discriminator == "canonical":
                    d_canonical = d_pose
                else:
                    # Root-centering shift is treated as constant per sample.
                    d_final = d_pose

            if not np.isfinite(l2_val) or not np.isfinite(adv_val):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}: l2={l2_val} adv={adv_val}")

            for _ in range(cfg.gen_steps):
                pipe.zero_generator_grads()
                pipe.backward_batch(state, d_stage1=d_stage1, d_part_locals=d_parts,
                                    d_canonical=d_canonical, d_final=d_final)
                if cfg.joint_base_lr_scale > 0:
                    nn.adam_step([a for _, a in pipe.base.params()],
                                 [a for _, a in pipe.base.grads()],
                                 self.joint_base_adam,
                                 lr_gen * cfg.joint_base_lr_scale)
                refiner_params = [a for name, net in pipe.generator_nets()
                                  if name != "base" for _, a in net.params()]
                if refiner_params:
                    refiner_grads = [a for name, net in pipe.generator_nets()
                                     if name != "base" for _, a in net.grads()]
                    nn.adam_step(refiner_params, refiner_grads,
                                 self.joint_refiner_adam, lr_gen)

            l2_vals.append(l2_val)
            adv_vals.append(adv_val)
            disc_vals.append(disc_val)

        report = LossReport.build(float(np.mean(l2_vals)), float(np.mean(adv_vals)),
                                  float(np.mean(disc_vals)), cfg.lambda_)
        self.history.append(EpochLog(
            epoch=epoch, phase="joint", l2_pose=report.l2_pose,
            generator_adv=report.generator_adv, discriminator=report.discriminator,
            total=report.total, eval_mpjpe=self._eval()))
        return report

    def _eval(self) -> float | None:
        if self.eval2d is None or self.eval3d is None:
            return None
        preds = self.pipeline.predict(self.eval2d)
        return mpjpe(root_center(preds, self.pipeline.topo),
                     root_center(self.eval3d, self.pipeline.topo))

    def train(self) -> list[EpochLog]:
        """Pretrain the base, then run the joint phase; returns the log."""
        for epoch in range(1, self.config.pretrain_epochs + 1):
            self.pretrain_epoch(epoch)
        for epoch in range(1, self.config.epochs + 1):
            self.joint_epoch(epoch)
        return self.history


def train_scheme(scheme_name: str, train2d: np.ndarray, train3d: np.ndarray,
                 config: TrainConfig, model_config: ModelConfig,
                 topo: SkeletonTopology,
                 eval2d: np.ndarray | None = None,
                 eval3d: np.ndarray | None = None,
                 ) -> tuple[Pipeline, list[EpochLog]]:
    """Build, pretrain and jointly train one scheme from scratch."""
    stats = compute_stats(train2d, train3d)
    pipeline = Pipeline(topo, get_scheme(scheme_name), model_config, stats,
                        seed=config.seed)
    trainer = Trainer(pipeline, config, train2d, train3d, eval2d, eval3d)
    trainer.train()
    return pipeline, trainer.history
