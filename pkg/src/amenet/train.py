"""Seeded training loop for the CVAE predictor."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from .data import Window
from .model import AMENet, MapCache, ModelConfig, cvae_loss, window_features


class TrainingDiverged(RuntimeError):
    """Raised when the loss stops being finite; carries the last state."""


@dataclass
class TrainResult:
    model: AMENet
    cfg: ModelConfig
    history: list[dict]  # one entry per epoch: epoch, recon, kl, loss
    steps: int

    def history_lines(self) -> str:
        lines = ["# epoch recon kl loss"]
        for row in self.history:
            lines.append(f"{row['epoch']} {row['recon']!r} {row['kl']!r} {row['loss']!r}")
        return "\n".join(lines) + "\n"


def _positions_from_offsets(offsets: torch.Tensor, anchors: torch.Tensor) -> torch.Tensor:
    return anchors[:, None, :] + torch.cumsum(offsets, dim=1)


def train(
    windows: Sequence[Window],
    cfg: ModelConfig,
    seed: int = 0,
    epochs: int | None = None,
    max_steps: int | None = None,
    cache: MapCache | None = None,
) -> TrainResult:
    """Optimize a fresh model on the given windows.

    Deterministic for fixed (windows, cfg, seed, epochs/max_steps): data
    shuffling and latent noise come from dedicated seeded generators.  One
    of `epochs` or `max_steps` must be given; with both, whichever limit
    is hit first ends training.
    """
    if not windows:
        raise ValueError("training needs at least one window")
    if epochs is None and max_steps is None:
        raise ValueError("give epochs, max_steps, or both")
    for w in windows:
        if w.t_obs != cfg.t_obs or w.t_pred != cfg.t_pred:
            raise ValueError(
                f"window {w.window_id} spans {w.t_obs}+{w.t_pred}, "
                f"config wants {cfg.t_obs}+{cfg.t_pred}"
            )

    model = AMENet(cfg, seed=seed)
    feats = window_features(windows, cfg, cache=cache)
    if cfg.loss_on == "positions":
        anchors = torch.as_tensor(
            np.stack([w.obs[-1] for w in windows]), dtype=feats["fut_off"].dtype
        )
        gt_positions = _positions_from_offsets(feats["fut_off"], anchors)

    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    shuffle_rng = np.random.default_rng(seed)
    eps_gen = torch.Generator().manual_seed((seed * 2654435761 + 1) % (2**63 - 1))

    n = len(windows)
    batch = min(cfg.batch_size, n)
    steps_per_epoch = math.ceil(n / batch)
    if epochs is None:
        epochs = math.ceil(max_steps / steps_per_epoch)

    history: list[dict] = []
    step = 0
    model.train()
    for epoch in range(epochs):
        order = shuffle_rng.permutation(n)
        recon_sum = kl_sum = loss_sum = 0.0
        seen = 0
        for lo in range(0, n, batch):
            idx = torch.as_tensor(order[lo : lo + batch])
            sub = {k: v[idx] for k, v in feats.items()}
            eps = torch.randn(len(idx), cfg.z_dim, generator=eps_gen)
            pred, dist = model.training_forward(sub, eps)
            if cfg.loss_on == "positions":
                pred_cmp = _positions_from_offsets(pred, anchors[idx])
                gt_cmp = gt_positions[idx]
            else:
                pred_cmp, gt_cmp = pred, sub["fut_off"]
            loss, recon, kl = cvae_loss(pred_cmp, gt_cmp, dist, cfg.beta, parts=True)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} step {step} "
                    f"(recon={recon.item()!r}, kl={kl.item()!r})"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            k = len(idx)
            recon_sum += recon.item() * k
            kl_sum += kl.item() * k
            loss_sum += loss.item() * k
            seen += k
            step += 1
            if max_steps is not None and step >= max_steps:
                break
        history.append(
            {
                "epoch": epoch,
                "recon": recon_sum / seen,
                "kl": kl_sum / seen,
                "loss": loss_sum / seen,
            }
        )
        if max_steps is not None and step >= max_steps:
            break
    model.eval()
    return TrainResult(model=model, cfg=cfg, history=history, steps=step)
