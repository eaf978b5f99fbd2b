"""Command line interface: synth, transform, train, eval, ablate.

Every run writes a manifest (atomically, before and after the work) so
results are auditable and reproducible: outputs are pure functions of
(config, seed, inputs). Diagnostics go to stderr, data to files.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError, NumericError, UsageError
from .geometry import apply, apply_batch, global_frames_batch, invert
from .metrics import evaluate, report_table
from .model import ModelConfig, Pipeline, SCHEMES, rng_stream
from .poseio import (
    read_poses,
    read_transforms,
    write_poses,
    write_scenes,
    write_transforms,
)
from .report import save_ablation_figure, save_eval_figures, save_training_curves
from .skeleton import default_topology, load_topology
from .synthetic import generate_synthetic, stack_samples
from .train import TrainConfig, train_scheme

CONFIG_DIR_ENV = "VIPOSE_CONFIG_DIR"
STREAM_VAL_SPLIT = 20

ABLATION_LADDER = ("B", "B+HC", "B+VI-GC", "B+VI-LC", "B+VI-HC",
                   "B+VI-HC-D", "B+VI-HC-VID")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are exit 1
        raise UsageError(message)


def _write_json_atomic(path: Path, payload: dict) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _args_dict(args) -> dict:
    out = {}
    for key, value in vars(args).items():
        if key == "func":
            continue
        out[key] = value if isinstance(value, (int, float, bool, str, type(None))) \
            else str(value)
    return out


class RunManifest:
    """Audit record for one command, written before and after the run."""

    def __init__(self, out_dir: Path, command: str, args: dict, config: dict,
                 seed: int | None, inputs: dict):
        self.path = out_dir / "manifest.json"
        self.started = time.time()
        config_blob = json.dumps(config, sort_keys=True)
        self.payload = {
            "command": command,
            "args": args,
            "config": config,
            "config_hash": hashlib.sha256(config_blob.encode()).hexdigest(),
            "seed": seed,
            "inputs": inputs,
            "outputs": [],
            "version": __version__,
            "status": "running",
            "timing_seconds": None,
        }
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json_atomic(self.path, self.payload)

    def finish(self, outputs: list[Path]) -> None:
        self.payload["outputs"] = sorted(str(p) for p in outputs)
        self.payload["status"] = "complete"
        self.payload["timing_seconds"] = time.time() - self.started
        _write_json_atomic(self.path, self.payload)


def _load_config_file(name: str | None) -> dict:
    if name is None:
        return {}
    path = Path(name)
    if not path.exists() and not path.is_absolute():
        config_dir = os.environ.get(CONFIG_DIR_ENV)
        if config_dir and (Path(config_dir) / name).exists():
            path = Path(config_dir) / name
    if not path.exists():
        raise DataError(f"config file not found: {name}")
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid config: {exc}") from exc


def _resolve_train_config(args, file_cfg: dict) -> TrainConfig:
    """Precedence: explicit flags > config file > defaults."""
    merged = TrainConfig().to_dict()
    merged.update(file_cfg.get("train", {}))
    for flag, key in (("lambda_", "lambda"), ("lr_gen", "lr_gen"),
                      ("lr_disc", "lr_disc"), ("batch_size", "batch_size"),
                      ("epochs", "epochs"), ("pretrain_epochs", "pretrain_epochs"),
                      ("seed", "seed")):
        value = getattr(args, flag, None)
        if value is not None:
            merged[key] = value
    try:
        config = TrainConfig.from_dict(merged)
        config.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return config


def _resolve_model_config(file_cfg: dict) -> ModelConfig:
    merged = ModelConfig().to_dict()
    merged.update(file_cfg.get("model", {}))
    try:
        return ModelConfig.from_dict(merged)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad model config: {exc}") from exc


def _load_topo(args):
    if getattr(args, "topology", None):
        return load_topology(args.topology)
    return default_topology()


def _read_3d(path, topo):
    ids, poses = read_poses(path, topo)
    if poses.shape[-1] != 3:
        raise DataError(f"{path}: expected 3D poses")
    return ids, poses


def _read_2d(path, topo):
    ids, poses = read_poses(path, topo)
    if poses.shape[-1] != 2:
        raise DataError(f"{path}: expected 2D poses")
    return ids, poses


# -- synth ----------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.count <= 0:
        raise UsageError("--count must be positive")
    if args.sigma < 0:
        raise UsageError("--sigma must be non-negative")
    out_dir = Path(args.out)
    manifest = RunManifest(out_dir, "synth", _args_dict(args),
                           config={"count": args.count, "spread": args.spread,
                                   "sigma": args.sigma, "focal": args.focal},
                           seed=args.seed, inputs={})
    samples = generate_synthetic(args.seed, args.count, args.spread, args.sigma,
                                 camera_focal=args.focal)
    poses2d, poses3d, scenes = stack_samples(samples)
    paths = [out_dir / "poses_2d.csv", out_dir / "poses_3d.csv", out_dir / "scenes.csv"]
    write_poses(paths[0], poses2d)
    write_poses(paths[1], poses3d)
    write_scenes(paths[2], scenes)
    manifest.finish(paths)
    print(f"wrote {args.count} samples under {out_dir}", file=sys.stderr)
    return 0


# -- transform ------------------------------------------------------------

def cmd_transform(args) -> int:
    topo = _load_topo(args)
    out_dir = Path(args.out)
    manifest = RunManifest(out_dir, "transform", _args_dict(args),
                           config={"invert": bool(args.invert)}, seed=None,
                           inputs={"poses": str(args.input)})
    ids, poses = _read_3d(args.input, topo)
    outputs: list[Path] = []
    if args.invert:
        if not args.sidecar:
            raise UsageError("--invert needs --sidecar with the forward transforms")
        side_ids, transforms = read_transforms(args.sidecar)
        if len(side_ids) != len(ids) or not np.array_equal(side_ids, ids):
            raise DataError("sidecar frame ids do not match the pose file")
        restored = np.stack([apply(invert(t), pose)
                             for t, pose in zip(transforms, poses)])
        out_path = out_dir / "restored_3d.csv"
        write_poses(out_path, restored, ids)
        outputs.append(out_path)
    else:
        rot, trans, degenerate = global_frames_batch(poses, topo)
        canonical = apply_batch(rot, trans, poses)
        out_path = out_dir / "canonical_3d.csv"
        side_path = out_dir / "transforms.csv"
        write_poses(out_path, canonical, ids)
        write_transforms(side_path, rot, trans, ids)
        outputs += [out_path, side_path]
        count = int(degenerate.sum())
        if count:
            print(f"degenerate frames: {count} (identity transform substituted)",
                  file=sys.stderr)
    manifest.finish(outputs)
    return 0


# -- train ------------------------------------------------------------------

def _history_rows(history) -> list[str]:
    rows = ["epoch,phase,l2_pose,generator_adv,discriminator,total,eval_mpjpe"]
    for h in history:
        ev = f"{h.eval_mpjpe:.17g}" if h.eval_mpjpe is not None else ""
        rows.append(f"{h.epoch},{h.phase},{h.l2_pose:.17g},{h.generator_adv:.17g},"
                    f"{h.discriminator:.17g},{h.total:.17g},{ev}")
    return rows


def cmd_train(args) -> int:
    file_cfg = _load_config_file(args.config)
    train_cfg = _resolve_train_config(args, file_cfg)
    model_cfg = _resolve_model_config(file_cfg)
    topo = _load_topo(args)
    if args.scheme not in SCHEMES:
        raise UsageError(f"unknown scheme {args.scheme!r}; choose from {sorted(SCHEMES)}")
    out_dir = Path(args.out)
    manifest = RunManifest(
        out_dir, "train", _args_dict(args),
        config={"train": train_cfg.to_dict(), "model": model_cfg.to_dict(),
                "scheme": args.scheme, "val_fraction": args.val_frac},
        seed=train_cfg.seed,
        inputs={"poses_2d": str(args.data_2d), "poses_3d": str(args.data_3d)})

    ids2, poses2d = _read_2d(args.data_2d, topo)
    ids3, poses3d = _read_3d(args.data_3d, topo)
    if not np.array_equal(ids2, ids3):
        raise DataError("2D and 3D pose files carry different frame ids")

    eval2d = eval3d = None
    if args.val_frac > 0:
        rng = rng_stream(train_cfg.seed, STREAM_VAL_SPLIT)
        perm = rng.permutation(len(poses2d))
        n_val = max(2, int(round(args.val_frac * len(poses2d))))
        val_idx, train_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
        eval2d, eval3d = poses2d[val_idx], poses3d[val_idx]
        poses2d, poses3d = poses2d[train_idx], poses3d[train_idx]

    pipeline, history = train_scheme(args.scheme, poses2d, poses3d, train_cfg,
                                     model_cfg, topo, eval2d, eval3d)
    outputs = [pipeline.save(out_dir / "model")]
    losses_path = out_dir / "losses.csv"
    losses_path.write_text("\n".join(_history_rows(history)) + "\n")
    outputs.append(losses_path)
    outputs.append(save_training_curves(history, out_dir / "training_curves.png"))
    manifest.finish(outputs)
    joint = [h for h in history if h.phase == "joint"]
    if joint:
        print(f"final joint epoch: l2={joint[-1].l2_pose:.3f} "
              f"adv={joint[-1].generator_adv:.4f}", file=sys.stderr)
    return 0


# -- eval -------------------------------------------------------------------

def _report_csv_rows(report, topo) -> list[str]:
    rows = ["metric,name,value_mm"]
    rows.append(f"mpjpe,,{report.mpjpe:.17g}")
    rows.append(f"pa_mpjpe,,{report.pa_mpjpe:.17g}")
    for j, name in enumerate(topo.joint_names):
        rows.append(f"joint,{name},{report.per_joint_error[j]:.17g}")
    for i, (child, _) in enumerate(topo.bones):
        rows.append(f"bone,{topo.joint_names[child]},{report.bone_error[i]:.17g}")
        rows.append(f"bone_std,{topo.joint_names[child]},{report.bone_std[i]:.17g}")
    rows.append(f"bone_error_mean,,{report.bone_error_mean:.17g}")
    rows.append(f"bone_std_mean,,{report.bone_std_mean:.17g}")
    from .metrics import LIMB_PAIR_NAMES
    for i, value in enumerate(report.symmetry):
        rows.append(f"symmetry,{LIMB_PAIR_NAMES[i]},{value:.17g}")
    rows.append(f"symmetry_mean,,{report.symmetry_mean:.17g}")
    rows.append(f"sample_count,,{report.sample_count}")
    return rows


def cmd_eval(args) -> int:
    if (args.pred is None) == (args.model is None):
        raise UsageError("provide exactly one of --pred or --model")
    if args.model is not None and args.input_2d is None:
        raise UsageError("--model needs --input-2d")
    out_dir = Path(args.out)
    inputs = {"gt": str(args.gt)}
    if args.pred:
        inputs["pred"] = str(args.pred)
    else:
        inputs.update({"model": str(args.model), "input_2d": str(args.input_2d)})
    manifest = RunManifest(out_dir, "eval", _args_dict(args),
                           config={"root_relative": not args.no_root_center},
                           seed=None, inputs=inputs)

    if args.model is not None:
        pipeline = Pipeline.load(args.model)
        topo = pipeline.topo
        gt_ids, gts = _read_3d(args.gt, topo)
        in_ids, poses2d = _read_2d(args.input_2d, topo)
        if not np.array_equal(gt_ids, in_ids):
            raise DataError("2D input and ground-truth frame ids differ")
        preds = pipeline.predict(poses2d)
    else:
        topo = _load_topo(args)
        gt_ids, gts = _read_3d(args.gt, topo)
        pred_ids, preds = _read_3d(args.pred, topo)
        if not np.array_equal(gt_ids, pred_ids):
            raise DataError("prediction and ground-truth frame ids differ")

    report = evaluate(preds, gts, topo, root_relative=not args.no_root_center)
    outputs = []
    json_path = out_dir / "report.json"
    _write_json_atomic(json_path, report.to_dict())
    outputs.append(json_path)
    txt_path = out_dir / "report.txt"
    txt_path.write_text(report_table(report, topo))
    outputs.append(txt_path)
    csv_path = out_dir / "report.csv"
    csv_path.write_text("\n".join(_report_csv_rows(report, topo)) + "\n")
    outputs.append(csv_path)
    outputs += save_eval_figures(report, topo, out_dir)
    manifest.finish(outputs)
    print(f"MPJPE {report.mpjpe:.2f} mm  PA-MPJPE {report.pa_mpjpe:.2f} mm",
          file=sys.stderr)
    return 0


# -- ablate -------------------------------------------------------------------

def cmd_ablate(args) -> int:
    file_cfg = _load_config_file(args.config)
    train_cfg = _resolve_train_config(args, file_cfg)
    model_cfg = _resolve_model_config(file_cfg)
    topo = _load_topo(args)
    schemes = ABLATION_LADDER if args.schemes is None else tuple(args.schemes.split(","))
    for scheme in schemes:
        if scheme not in SCHEMES:
            raise UsageError(f"unknown scheme {scheme!r}")
    out_dir = Path(args.out)
    manifest = RunManifest(
        out_dir, "ablate", _args_dict(args),
        config={"train": train_cfg.to_dict(), "model": model_cfg.to_dict(),
                "schemes": list(schemes)},
        seed=train_cfg.seed,
        inputs={"train_2d": str(args.data_2d), "train_3d": str(args.data_3d),
                "test_2d": str(args.test_2d), "test_3d": str(args.test_3d)})

    ids2, train2d = _read_2d(args.data_2d, topo)
    ids3, train3d = _read_3d(args.data_3d, topo)
    if not np.array_equal(ids2, ids3):
        raise DataError("training 2D and 3D pose files carry different frame ids")
    tids2, test2d = _read_2d(args.test_2d, topo)
    tids3, test3d = _read_3d(args.test_3d, topo)
    if not np.array_equal(tids2, tids3):
        raise DataError("test 2D and 3D pose files carry different frame ids")

    rows = []
    outputs = []
    for scheme in schemes:
        pipeline, history = train_scheme(scheme, train2d, train3d, train_cfg,
                                         model_cfg, topo)
        report = evaluate(pipeline.predict(test2d), test3d, topo)
        rows.append((scheme, report.mpjpe, report.pa_mpjpe))
        print(f"{scheme:16s} MPJPE {report.mpjpe:8.2f}  PA {report.pa_mpjpe:8.2f}",
              file=sys.stderr)
        if args.save_models:
            outputs.append(pipeline.save(out_dir / "schemes" / scheme.replace("+", "_")))

    base_mpjpe = dict((name, mpjpe_) for name, mpjpe_, _ in rows).get(schemes[0])
    csv_rows = ["scheme,mpjpe,pa_mpjpe,delta"]
    txt_rows = [f"{'Method':18s}{'MPJPE':>10s}{'PA':>10s}{'Delta':>10s}"]
    for name, mpjpe_, pa in rows:
        delta = mpjpe_ - base_mpjpe
        csv_rows.append(f"{name},{mpjpe_:.17g},{pa:.17g},{delta:.17g}")
        txt_rows.append(f"{name:18s}{mpjpe_:10.2f}{pa:10.2f}{delta:10.2f}")
    csv_path = out_dir / "ablation.csv"
    csv_path.write_text("\n".join(csv_rows) + "\n")
    txt_path = out_dir / "ablation.txt"
    txt_path.write_text("\n".join(txt_rows) + "\n")
    fig_path = save_ablation_figure([(n, m) for n, m, _ in rows],
                                    out_dir / "ablation.png")
    outputs += [csv_path, txt_path, fig_path]
    manifest.finish(outputs)
    return 0


# -- wiring -------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="vipose",
                     description="View-consistent 3D pose refinement toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic multi-view pose data")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--spread", type=float, default=np.pi,
                   help="max view angle per axis (radians)")
    p.add_argument("--sigma", type=float, default=0.0, help="3D joint noise (mm)")
    p.add_argument("--focal", type=float, default=1e-3,
                   help="orthographic projection scale")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("transform", help="canonicalize 3D poses (or invert)")
    p.add_argument("--input", required=True, help="3D pose file")
    p.add_argument("--topology", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--invert", action="store_true")
    p.add_argument("--sidecar", default=None, help="transform sidecar for --invert")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("train", help="train one scheme")
    p.add_argument("--data-2d", required=True)
    p.add_argument("--data-3d", required=True)
    p.add_argument("--scheme", default="B+VI-HC-VID")
    p.add_argument("--topology", default=None)
    p.add_argument("--config", default=None,
                   help=f"JSON config (searched in ${CONFIG_DIR_ENV} too)")
    p.add_argument("--lambda", dest="lambda_", type=float, default=None)
    p.add_argument("--lr-gen", type=float, default=None)
    p.add_argument("--lr-disc", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--pretrain-epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--val-frac", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate predictions or a trained model")
    p.add_argument("--gt", required=True, help="ground-truth 3D pose file")
    p.add_argument("--pred", default=None, help="predicted 3D pose file")
    p.add_argument("--model", default=None, help="pipeline manifest or run dir")
    p.add_argument("--input-2d", default=None, help="2D pose file for --model")
    p.add_argument("--topology", default=None)
    p.add_argument("--no-root-center", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and compare the scheme ladder")
    p.add_argument("--data-2d", required=True)
    p.add_argument("--data-3d", required=True)
    p.add_argument("--test-2d", required=True)
    p.add_argument("--test-3d", required=True)
    p.add_argument("--topology", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--lambda", dest="lambda_", type=float, default=None)
    p.add_argument("--lr-gen", type=float, default=None)
    p.add_argument("--lr-disc", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--pretrain-epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--schemes", default=None, help="comma-separated subset")
    p.add_argument("--save-models", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
