"""Per-window trajectory plots: observation, ground truth, sampled fans."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import Window
from .model import PredictionSet


def _safe_name(window_id: str) -> str:
    return window_id.replace(":", "_").replace("/", "_")


def plot_window(window: Window, pred: PredictionSet | None, out_dir, dpi: int = 120) -> str:
    fig, ax = plt.subplots(figsize=(5, 5))
    obs = np.vstack([window.obs])
    gt = np.vstack([window.obs[-1:], window.fut])
    if pred is not None:
        for s in range(pred.n_samples):
            track = np.vstack([window.obs[-1:], pred.samples[s]])
            ax.plot(track[:, 0], track[:, 1], color="0.6", lw=0.8, alpha=0.7, zorder=1)
    ax.plot(obs[:, 0], obs[:, 1], "b.-", lw=1.6, label="observed", zorder=3)
    ax.plot(gt[:, 0], gt[:, 1], "g--", lw=1.6, label="ground truth", zorder=2)
    for nbrs in window.neighbors[: window.t_obs]:
        for nb in nbrs:
            ax.plot(nb.pos[0], nb.pos[1], "r.", ms=3, alpha=0.4, zorder=0)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(window.window_id, fontsize=9)
    ax.legend(loc="best", fontsize=7)
    path = os.path.join(out_dir, f"{_safe_name(window.window_id)}.png")
    fig.savefig(path, dpi=dpi, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_windows(windows, predictions: dict[str, PredictionSet], out_dir, limit=None) -> list[str]:
    """One image per window, deterministic filenames; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for window in sorted(windows, key=lambda w: w.window_id):
        if limit is not None and len(paths) >= limit:
            break
        paths.append(plot_window(window, predictions.get(window.window_id), out_dir))
    return paths
