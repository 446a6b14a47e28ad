"""Figure rendering for the report paths.

Every command that writes delimited output also renders a matplotlib
figure next to it. All rendering targets files (Agg backend); nothing
opens a window.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 150


def save_loss_curve(epoch_losses, path, validation_hits1=None) -> None:
    """Training loss per epoch, optionally with validation Hits@1 overlaid."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    epochs = np.arange(1, len(epoch_losses) + 1)
    ax.plot(epochs, epoch_losses, marker="o", markersize=3, label="mean train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    if validation_hits1:
        ax2 = ax.twinx()
        ax2.plot(epochs, validation_hits1, color="tab:green", alpha=0.7, label="valid hits@1")
        ax2.set_ylabel("valid hits@1")
        ax2.set_ylim(0, 1)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_hits_bar(hits: dict, path, title: str = "") -> None:
    """Bar chart of hits@N values."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    levels = sorted(hits)
    values = [hits[n] for n in levels]
    bars = ax.bar([f"@{n}" for n in levels], values, color="tab:blue", width=0.6)
    ax.bar_label(bars, fmt="%.3f", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("hits fraction")
    if title:
        ax.set_title(title)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_grid_results(results, path) -> None:
    """Validation Hits@1 per grid point, colored by embedding size."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    done = [r for r in results if r.error is None]
    if done:
        xs = [r.index for r in done]
        ys = [r.validation_hits1 for r in done]
        dims = [r.hyper.embedding_dim for r in done]
        sc = ax.scatter(xs, ys, c=dims, cmap="viridis", s=18)
        fig.colorbar(sc, ax=ax, label="embedding dim")
        best = max(done, key=lambda r: (r.validation_hits1, -r.index))
        ax.annotate(
            f"best {best.validation_hits1:.3f}",
            (best.index, best.validation_hits1),
            textcoords="offset points",
            xytext=(5, 5),
            fontsize=8,
        )
    failed = [r for r in results if r.error is not None]
    for r in failed:
        ax.axvline(r.index, color="tab:red", alpha=0.2)
    ax.set_xlabel("grid point")
    ax.set_ylabel("valid hits@1")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_dataset_stats(relation_counts, labels_per_pair, path, max_relations: int = 30) -> None:
    """Relation frequencies and the labels-per-pair histogram, side by side."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))

    counts = np.asarray(relation_counts)
    order = np.argsort(-counts)[:max_relations]
    ax1.bar(np.arange(len(order)), counts[order], color="tab:blue")
    ax1.set_xlabel(f"relation (top {len(order)} by frequency)")
    ax1.set_ylabel("train triples")
    ax1.grid(axis="y", alpha=0.3)

    per_pair = np.asarray(labels_per_pair)
    ax2.hist(per_pair, bins=np.arange(0.5, per_pair.max() + 1.5), color="tab:orange")
    ax2.set_yscale("log")
    ax2.set_xlabel("relations per entity pair")
    ax2.set_ylabel("pairs")
    ax2.grid(axis="y", alpha=0.3)

    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
