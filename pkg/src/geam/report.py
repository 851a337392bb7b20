"""Figure rendering for run artifacts.

Figures are written as PNG files next to the delimited outputs so a run
directory is self-contained: score progress over the generation budget, the
vocabulary growth trajectory, and the training curves that produced them.
"""

from __future__ import annotations

import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from geam.records import GenerationRecord

_PROVENANCE_COLORS = {"prefill": "0.65", "sac": "tab:blue", "ga": "tab:orange"}


def plot_progress(records: Sequence[GenerationRecord], path: str) -> None:
    """Per-record scores and the running best, colored by provenance."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for provenance, color in _PROVENANCE_COLORS.items():
        xs = [r.ordinal for r in records if r.provenance == provenance]
        ys = [r.y for r in records if r.provenance == provenance]
        if xs:
            ax.scatter(xs, ys, s=8, color=color, label=provenance, alpha=0.6)
    best = 0.0
    running = []
    for r in records:
        best = max(best, r.y)
        running.append(best)
    ax.plot(
        [r.ordinal for r in records], running, color="black", lw=1.2,
        label="running best",
    )
    ax.set_xlabel("record ordinal")
    ax.set_ylabel("score")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_vocab_trajectory(
    trajectory: Sequence[tuple[int, int]], path: str
) -> None:
    fig, ax = plt.subplots(figsize=(7, 3))
    if trajectory:
        cycles = [c for c, _ in trajectory]
        sizes = [s for _, s in trajectory]
        ax.step(cycles, sizes, where="post", color="tab:green")
    ax.set_xlabel("cycle")
    ax.set_ylabel("vocabulary size")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_loss_curves(
    fgib_history: Sequence[dict[str, float]],
    sac_losses: Sequence[dict[str, float]],
    path: str,
) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
    if fgib_history:
        axes[0].plot([h["loss"] for h in fgib_history], marker="o", ms=3)
    axes[0].set_title("fragment scorer loss / epoch", fontsize=9)
    axes[0].set_xlabel("epoch")
    if sac_losses:
        axes[1].plot(
            [d["critic_loss"] for d in sac_losses], label="critic", lw=0.9
        )
        axes[1].plot(
            [d["policy_loss"] for d in sac_losses], label="policy", lw=0.9
        )
        axes[1].legend(fontsize=8)
    axes[1].set_title("actor-critic losses / update", fontsize=9)
    axes[1].set_xlabel("update")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_run_figures(result, out_dir: str) -> list[str]:
    """Render every figure for a finished run; returns the written paths."""
    figures_dir = os.path.join(out_dir, "figures")
    os.makedirs(figures_dir, exist_ok=True)
    paths = []

    progress = os.path.join(figures_dir, "progress.png")
    plot_progress(result.records, progress)
    paths.append(progress)

    vocab = os.path.join(figures_dir, "vocabulary.png")
    plot_vocab_trajectory(result.report.vocab_trajectory, vocab)
    paths.append(vocab)

    losses = os.path.join(figures_dir, "training.png")
    plot_loss_curves(result.fgib_history, result.sac_losses, losses)
    paths.append(losses)
    return paths


def render_metrics_figures(
    records: Sequence[GenerationRecord], trajectory, out_dir: str
) -> list[str]:
    """Figures for a replayed record log (no training curves available)."""
    os.makedirs(out_dir, exist_ok=True)
    progress = os.path.join(out_dir, "progress.png")
    plot_progress(records, progress)
    vocab = os.path.join(out_dir, "vocabulary.png")
    plot_vocab_trajectory(trajectory, vocab)
    return [progress, vocab]
