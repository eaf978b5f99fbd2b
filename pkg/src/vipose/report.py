"""Figure rendering for the CLI report paths.

Every figure lands next to the delimited output it illustrates; all
rendering is headless (Agg backend).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .metrics import LIMB_PAIR_NAMES, EvalReport
from .skeleton import SkeletonTopology


def save_training_curves(history, path) -> Path:
    """Loss and held-out MPJPE curves over pretraining + joint epochs."""
    path = Path(path)
    epochs = range(1, len(history) + 1)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))

    axes[0].plot(list(epochs), [h.l2_pose for h in history], label="pose L2")
    adv = [h.generator_adv for h in history]
    if any(v != 0.0 for v in adv):
        twin = axes[0].twinx()
        twin.plot(list(epochs), adv, color="tab:orange", label="generator adv")
        twin.plot(list(epochs), [h.discriminator for h in history],
                  color="tab:green", label="discriminator")
        twin.set_ylabel("adversarial loss (nats)")
        twin.legend(loc="upper right", fontsize=8)
    boundary = sum(1 for h in history if h.phase == "pretrain")
    if 0 < boundary < len(history):
        axes[0].axvline(boundary + 0.5, color="gray", linestyle=":", linewidth=1)
    axes[0].set_xlabel("epoch")
    axes[0].set_ylabel("pose L2")
    axes[0].set_yscale("log")
    axes[0].legend(loc="upper left", fontsize=8)
    axes[0].set_title("training losses")

    evals = [(e, h.eval_mpjpe) for e, h in zip(epochs, history) if h.eval_mpjpe is not None]
    if evals:
        axes[1].plot([e for e, _ in evals], [v for _, v in evals], color="tab:red")
    axes[1].set_xlabel("epoch")
    axes[1].set_ylabel("held-out MPJPE (mm)")
    axes[1].set_title("evaluation error")

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_eval_figures(report: EvalReport, topo: SkeletonTopology, out_dir) -> list[Path]:
    """Per-joint error bars plus per-bone error/spread bars."""
    out_dir = Path(out_dir)
    paths = []

    fig, ax = plt.subplots(figsize=(9, 4))
    ax.bar(range(topo.joint_count), report.per_joint_error, color="tab:blue")
    ax.set_xticks(range(topo.joint_count))
    ax.set_xticklabels(topo.joint_names, rotation=60, ha="right", fontsize=7)
    ax.axhline(report.mpjpe, color="tab:red", linestyle="--", linewidth=1,
               label=f"MPJPE {report.mpjpe:.1f} mm")
    ax.set_ylabel("joint error (mm)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    p = out_dir / "per_joint_error.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)

    bone_labels = [f"{topo.joint_names[c]}" for c, _ in topo.bones]
    fig, axes = plt.subplots(1, 2, figsize=(12, 4))
    axes[0].bar(range(len(topo.bones)), report.bone_error, color="tab:purple")
    axes[0].set_title(f"bone error (mean {report.bone_error_mean:.1f} mm)")
    axes[1].bar(range(len(topo.bones)), report.bone_std, color="tab:cyan")
    axes[1].set_title(f"bone length std (mean {report.bone_std_mean:.1f} mm)")
    for ax in axes:
        ax.set_xticks(range(len(topo.bones)))
        ax.set_xticklabels(bone_labels, rotation=60, ha="right", fontsize=7)
        ax.set_ylabel("mm")
    fig.tight_layout()
    p = out_dir / "bone_metrics.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    names = list(LIMB_PAIR_NAMES[:len(report.symmetry)]) + ["Avg."]
    values = list(report.symmetry) + [report.symmetry_mean]
    ax.bar(range(len(values)), values, color="tab:olive")
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels(names, fontsize=8)
    ax.set_ylabel("left/right length diff (mm)")
    fig.tight_layout()
    p = out_dir / "symmetry.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)
    return paths


def save_ablation_figure(rows: list[tuple[str, float]], path) -> Path:
    """Scheme-ladder MPJPE comparison bars."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 4))
    names = [name for name, _ in rows]
    values = [value for _, value in rows]
    bars = ax.bar(range(len(rows)), values, color="tab:blue")
    if rows:
        best = min(range(len(rows)), key=lambda i: values[i])
        bars[best].set_color("tab:red")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("test MPJPE (mm)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
