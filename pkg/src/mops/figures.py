"""Figure writers for the evaluation report path.

Renders the projected corpus (scatter plus hull outline) and the density
histogram to PNG files next to the delimited report. The PNG date chunk is
suppressed so reruns produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .diversity import GridSpec, Hull

__all__ = ["save_projection_figure", "save_density_figure"]

_SAVE_KW = {"dpi": 150, "metadata": {"Date": None}}


def save_projection_figure(points: np.ndarray, hull: Hull, path: str | Path, title: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 5))
    pts = np.asarray(points, dtype=float)
    ax.scatter(pts[:, 0], pts[:, 1], s=14, color="#33658a", alpha=0.75, linewidths=0)
    if not hull.degenerate:
        ring = np.vstack([hull.vertices, hull.vertices[:1]])
        ax.plot(ring[:, 0], ring[:, 1], color="#f26419", linewidth=1.4)
        ax.fill(ring[:, 0], ring[:, 1], color="#f26419", alpha=0.08)
    ax.set_title(title)
    ax.set_xlabel("t-SNE x")
    ax.set_ylabel("t-SNE y")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_density_figure(
    counts: np.ndarray, mask: np.ndarray, grid: GridSpec, path: str | Path, title: str
) -> None:
    fig, ax = plt.subplots(figsize=(6, 5))
    shown = np.where(mask, counts.astype(float), np.nan)
    cmap = plt.get_cmap("viridis").copy()
    cmap.set_bad("#dddddd")
    # counts are indexed [x_bin, y_bin]; imshow wants rows = y
    image = ax.imshow(
        shown.T,
        origin="lower",
        extent=(grid.xmin, grid.xmax, grid.ymin, grid.ymax),
        cmap=cmap,
        aspect="auto",
    )
    fig.colorbar(image, ax=ax, label="premises per bin")
    ax.set_title(title)
    ax.set_xlabel("t-SNE x")
    ax.set_ylabel("t-SNE y")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
