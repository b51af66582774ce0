"""Report figures rendered next to the delimited outputs."""
from __future__ import annotations

import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_loss_curve(steps: Sequence[int], losses: Sequence[float], path: str | os.PathLike,
                    title: str = "Masked-MSE training loss") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, losses, lw=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("masked MSE")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep_curve(ratios: Sequence[float], final_losses: Sequence[float],
                     path: str | os.PathLike, strategy: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ratios, final_losses, "o-")
    ax.set_xlabel("overall masking ratio")
    ax.set_ylabel("final masked MSE")
    title = "Masking-ratio sweep"
    if strategy:
        title += f" ({strategy})"
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_occlusion_scores(image_ids: Sequence[str], precisions: Sequence[float],
                          recalls: Sequence[float], path: str | os.PathLike) -> None:
    fig, ax = plt.subplots(figsize=(max(6, 0.35 * len(image_ids)), 4))
    x = range(len(image_ids))
    ax.bar([i - 0.2 for i in x], precisions, width=0.4, label="precision")
    ax.bar([i + 0.2 for i in x], recalls, width=0.4, label="recall")
    ax.set_xticks(list(x))
    ax.set_xticklabels(image_ids, rotation=90, fontsize=7)
    ax.set_ylim(0, 1.05)
    ax.legend()
    ax.set_title("Occlusion precision / recall")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
