"""Matplotlib renderings written next to the delimited metrics output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .mapping import SemanticMap, postprocess_navigable
from .world import LARGE_CLASS_INDEX, NAVIGABLE_CHANNEL, Scene


def save_summary_figure(rows: list[dict], path: str | Path) -> None:
    """Grouped bars of success rate / goal condition (plus coverage efficiency
    when the arms ran exploration) per ablation arm."""
    labels = [r["arm"] for r in rows]
    sr = [float(r["success_rate"]) for r in rows]
    gc = [float(r["goal_condition"]) for r in rows]
    ce = [float(r["coverage_efficiency"]) for r in rows]
    x = np.arange(len(labels))
    width = 0.27
    fig, ax = plt.subplots(figsize=(max(6, 1.6 * len(labels)), 4))
    ax.bar(x - width, sr, width, label="success rate")
    ax.bar(x, gc, width, label="goal condition")
    if any(v > 0 for v in ce):
        ax.bar(x + width, ce, width, label="coverage efficiency")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel("fraction")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_map_figure(semantic: SemanticMap, path: str | Path,
                    scene: Scene | None = None) -> None:
    """Navigable estimate next to the max object confidence per cell."""
    nav = semantic.channel(NAVIGABLE_CHANNEL)
    objects = semantic.grid[:, :, :NAVIGABLE_CHANNEL].max(axis=2)
    fig, axes = plt.subplots(1, 3 if scene is not None else 2, figsize=(11, 4))
    axes[0].imshow(nav, vmin=0, vmax=1, cmap="viridis")
    axes[0].set_title("navigable confidence")
    axes[1].imshow(objects, vmin=0, vmax=1, cmap="magma")
    axes[1].set_title("object confidence (max)")
    if scene is not None:
        axes[2].imshow(scene.navigable, cmap="gray")
        axes[2].set_title("ground truth navigable")
    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_map_text(semantic: SemanticMap) -> str:
    """Compact text view: navigable estimate with object argmax overlays."""
    nav = postprocess_navigable(semantic)
    G = semantic.grid_size
    rows = [["." if nav[y, x] else " " for x in range(G)] for y in range(G)]
    for cls, ch in LARGE_CLASS_INDEX.items():
        channel = semantic.channel(ch)
        if float(channel.max()) >= 0.5:
            flat = int(np.argmax(channel))
            y, x = divmod(flat, G)
            rows[y][x] = cls[0].upper()
    return "\n".join("".join(r) for r in rows)
