"""The multi-path trajectory predictor and its ablation variants.

Architecture: two structurally identical track encoders (one for the
observed steps, one for the future steps, the latter used only while
training) each run a motion branch (temporal conv + FC + LSTM over
position offsets) and, depending on the variant, an interaction branch
(per-step grid features + optional self-attention + LSTM over time).  The
two encoder outputs parameterize a diagonal-Gaussian latent; a sample of
it, concatenated with the observation encoding as the condition, drives an
LSTM decoder that emits future position offsets step by step.

Variants:

=========  ===========  =========  ==================
name       interaction  attention  future-side grids
=========  ===========  =========  ==================
ENet       none         -          -
OENet      occupancy    off        yes
AOENet     occupancy    on         yes
MENet      dynamic      off        yes
ACVAE      dynamic      on         no
AMENet     dynamic      on         yes
=========  ===========  =========  ==================
"""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .blocks import (
    AttentionConfig,
    MapConvPool,
    MultiHeadSelfAttention,
    SeqLSTM,
    TemporalConv1d,
    deterministic_init,
)
from .data import ObservationView, Window
from .maps import MapConfig, map_sequence, occupancy_sequence

VARIANT_FLAGS = {
    # name: (interaction, attention_on, y_maps)
    "ENet": ("none", False, False),
    "OENet": ("occupancy", False, True),
    "AOENet": ("occupancy", True, True),
    "MENet": ("dynamic", False, True),
    "ACVAE": ("dynamic", True, False),
    "AMENet": ("dynamic", True, True),
}


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "AMENet"
    interaction: str = "dynamic"  # none | occupancy | dynamic
    attention_on: bool = True
    y_maps: bool = True
    z_dim: int = 2
    hidden: int = 32
    fusion_dim: int = 64
    t_obs: int = 8
    t_pred: int = 12
    beta: float = 0.75
    lr: float = 0.001
    batch_size: int = 64
    conv1d_filters: int = 16
    conv1d_kernel: int = 3
    conv2d_filters: int = 16
    conv2d_kernel: int = 3
    pool: int = 2
    attn_d_q: int = 4
    attn_d_v: int = 4
    attn_heads: int = 2
    map_extent_m: float = 32.0
    map_cell_m: float = 1.0
    map_position_layer: str = "binary"
    loss_on: str = "offsets"  # or "positions"

    def __post_init__(self):
        if self.variant not in VARIANT_FLAGS:
            raise ValueError(f"unknown variant {self.variant!r}")
        expected = VARIANT_FLAGS[self.variant]
        if (self.interaction, self.attention_on, self.y_maps) != expected:
            raise ValueError(
                f"flags {self.interaction, self.attention_on, self.y_maps} do not "
                f"match variant {self.variant} (expected {expected})"
            )
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.z_dim < 1:
            raise ValueError("z_dim must be >= 1")
        if self.t_obs < 2 or self.t_pred < 1:
            raise ValueError("need t_obs >= 2 and t_pred >= 1")
        if self.loss_on not in ("offsets", "positions"):
            raise ValueError("loss_on must be 'offsets' or 'positions'")

    @property
    def map_channels(self) -> int:
        return {"none": 0, "occupancy": 1, "dynamic": 3}[self.interaction]

    def map_config(self) -> MapConfig:
        return MapConfig(
            extent_m=self.map_extent_m,
            cell_m=self.map_cell_m,
            position_layer=self.map_position_layer,
        )

    def attention_config(self, model_dim: int) -> AttentionConfig:
        return AttentionConfig(
            model_dim=model_dim,
            d_q=self.attn_d_q,
            d_k=self.attn_d_q,
            d_v=self.attn_d_v,
            heads=self.attn_heads,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "ModelConfig":
        return cls(**values)


def make_variant(name: str, **overrides) -> ModelConfig:
    """ModelConfig preset for one of the six variants; extra keyword
    arguments override any non-flag field."""
    if name not in VARIANT_FLAGS:
        raise ValueError(f"unknown variant {name!r}; choose from {sorted(VARIANT_FLAGS)}")
    interaction, attention_on, y_maps = VARIANT_FLAGS[name]
    for key in ("variant", "interaction", "attention_on", "y_maps"):
        if key in overrides:
            raise ValueError(f"{key} is fixed by the variant name")
    return ModelConfig(
        variant=name,
        interaction=interaction,
        attention_on=attention_on,
        y_maps=y_maps,
        **overrides,
    )


@dataclass(frozen=True)
class LatentDist:
    """Diagonal Gaussian over the latent: mean and log-variance, each of
    shape (..., z_dim)."""

    mu: torch.Tensor
    log_var: torch.Tensor

    def __post_init__(self):
        if self.mu.shape != self.log_var.shape:
            raise ValueError("mu and log_var must share a shape")


def reparameterize(dist: LatentDist, eps: torch.Tensor) -> torch.Tensor:
    """z = mu + exp(log_var / 2) * eps, elementwise."""
    return dist.mu + torch.exp(0.5 * dist.log_var) * eps


def kl_to_standard_normal(dist: LatentDist) -> torch.Tensor:
    """Closed-form KL(N(mu, sigma^2) || N(0, I)) summed over latent dims:
    -1/2 * sum(1 + log sigma^2 - mu^2 - sigma^2)."""
    return -0.5 * (1.0 + dist.log_var - dist.mu**2 - dist.log_var.exp()).sum(dim=-1)


def cvae_loss(pred, gt, dist: LatentDist, beta: float, parts: bool = False):
    """beta-weighted reconstruction plus (1 - beta)-weighted KL.

    Reconstruction is the squared error summed over prediction steps and
    coordinates (averaged over a leading batch dim when present); summing
    rather than averaging keeps the two terms on comparable scales so the
    published beta range behaves as intended.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {gt.shape}")
    se = ((pred - gt) ** 2).sum(dim=(-1, -2))
    recon = se.mean()
    kl = kl_to_standard_normal(dist).mean()
    total = beta * recon + (1.0 - beta) * kl
    if parts:
        return total, recon, kl
    return total


@dataclass(frozen=True)
class PredictionSet:
    """N sampled futures for one window, plus the latent draw behind each."""

    window_id: str
    target: str
    samples: np.ndarray  # (N, T', 2) absolute positions
    z: np.ndarray  # (N, z_dim)
    scores: np.ndarray | None = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 3 or samples.shape[2] != 2 or samples.shape[0] < 1:
            raise ValueError(f"samples must be (N, T', 2), got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("non-finite prediction")
        object.__setattr__(self, "samples", samples)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


class TrackEncoder(nn.Module):
    """Two-branch sequence encoder producing a fixed-size vector.

    Motion branch: offsets -> TemporalConv1d -> ReLU -> FC -> ReLU -> LSTM.
    Interaction branch (optional): per-step grids -> conv features ->
    optional self-attention over time -> LSTM.  Last hidden states are
    concatenated and fused by a linear layer.
    """

    def __init__(self, cfg: ModelConfig, use_maps: bool):
        super().__init__()
        self.use_maps = use_maps
        self.motion_conv = TemporalConv1d(2, cfg.conv1d_filters, cfg.conv1d_kernel)
        self.motion_fc = nn.Linear(cfg.conv1d_filters, cfg.conv1d_filters)
        self.motion_lstm = SeqLSTM(cfg.conv1d_filters, cfg.hidden)
        fused_in = cfg.hidden
        if use_maps:
            self.map_conv = MapConvPool(
                cfg.map_channels, cfg.conv2d_filters, cfg.conv2d_kernel, cfg.pool
            )
            grid = cfg.map_config()
            feat_dim = self.map_conv.feature_dim(grid.width, grid.height)
            if cfg.attention_on:
                self.attention = MultiHeadSelfAttention(cfg.attention_config(feat_dim))
                lstm_in = self.attention.cfg.output_dim
            else:
                self.attention = None
                lstm_in = feat_dim
            self.map_lstm = SeqLSTM(lstm_in, cfg.hidden)
            fused_in += cfg.hidden
        self.fuse = nn.Linear(fused_in, cfg.fusion_dim)

    def forward(self, offsets: torch.Tensor, maps: torch.Tensor | None = None) -> torch.Tensor:
        h = torch.relu(self.motion_conv(offsets))
        h = torch.relu(self.motion_fc(h))
        _, motion_h = self.motion_lstm(h)
        if not self.use_maps:
            return self.fuse(motion_h)
        if maps is None:
            raise ValueError("this encoder needs a (B, L, C, W, H) map tensor")
        feat = self.map_conv(maps)
        if self.attention is not None:
            feat = self.attention(feat)
        _, map_h = self.map_lstm(feat)
        return self.fuse(torch.cat([motion_h, map_h], dim=-1))


class LatentHead(nn.Module):
    """Two stacked FC+ReLU layers over the concatenated encoder outputs,
    then parallel FC heads for the mean and the log-variance."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.fc1 = nn.Linear(2 * cfg.fusion_dim, cfg.fusion_dim)
        self.fc2 = nn.Linear(cfg.fusion_dim, cfg.fusion_dim)
        self.mu = nn.Linear(cfg.fusion_dim, cfg.z_dim)
        self.log_var = nn.Linear(cfg.fusion_dim, cfg.z_dim)

    def forward(self, phi_x: torch.Tensor, phi_y: torch.Tensor) -> LatentDist:
        h = torch.relu(self.fc1(torch.cat([phi_x, phi_y], dim=-1)))
        h = torch.relu(self.fc2(h))
        return LatentDist(self.mu(h), self.log_var(h))


class Decoder(nn.Module):
    """LSTM that receives [phi_x || z] as a constant per-step input (with a
    learned initial state) and emits one offset pair per future step."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.lstm = nn.LSTM(cfg.fusion_dim + cfg.z_dim, cfg.hidden, batch_first=True)
        self.h0 = nn.Parameter(torch.zeros(1, 1, cfg.hidden))
        self.c0 = nn.Parameter(torch.zeros(1, 1, cfg.hidden))
        self.head = nn.Linear(cfg.hidden, 2)

    def forward(self, phi_x: torch.Tensor, z: torch.Tensor, t_pred: int) -> torch.Tensor:
        cond = torch.cat([phi_x, z], dim=-1)
        squeeze = cond.dim() == 1
        if squeeze:
            cond = cond.unsqueeze(0)
        batch = cond.shape[0]
        steps = cond.unsqueeze(1).expand(batch, t_pred, cond.shape[-1])
        state = (
            self.h0.expand(1, batch, self.h0.shape[-1]).contiguous(),
            self.c0.expand(1, batch, self.c0.shape[-1]).contiguous(),
        )
        hidden, _ = self.lstm(steps, state)
        out = self.head(hidden)
        return out.squeeze(0) if squeeze else out


class AMENet(nn.Module):
    """Full model; ablation variants differ only in configuration."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        with deterministic_init(seed):
            use_maps = cfg.interaction != "none"
            self.x_encoder = TrackEncoder(cfg, use_maps=use_maps)
            self.y_encoder = TrackEncoder(cfg, use_maps=use_maps and cfg.y_maps)
            self.latent = LatentHead(cfg)
            self.decoder = Decoder(cfg)

    def encode_x(self, obs_offsets, obs_maps=None) -> torch.Tensor:
        return self.x_encoder(obs_offsets, obs_maps)

    def encode_y(self, fut_offsets, fut_maps=None) -> torch.Tensor:
        return self.y_encoder(fut_offsets, fut_maps)

    def latent_head(self, phi_x, phi_y) -> LatentDist:
        return self.latent(phi_x, phi_y)

    def decode(self, phi_x, z) -> torch.Tensor:
        return self.decoder(phi_x, z, self.cfg.t_pred)

    def training_forward(self, feats: dict, eps: torch.Tensor):
        """(predicted offsets, latent distribution) for a feature batch."""
        phi_x = self.encode_x(feats["obs_off"], feats.get("obs_maps"))
        phi_y = self.encode_y(feats["fut_off"], feats.get("fut_maps"))
        dist = self.latent_head(phi_x, phi_y)
        z = reparameterize(dist, eps)
        return self.decode(phi_x, z), dist


class MapCache:
    """Per-window cache of interaction grids, shared across variants so
    repeated runs consume byte-identical inputs."""

    def __init__(self, map_cfg: MapConfig):
        self.map_cfg = map_cfg
        self._store: dict[tuple[str, str, str], np.ndarray] = {}

    def get(self, window, kind: str, span: str) -> np.ndarray:
        key = (window.window_id, kind, span)
        if key not in self._store:
            if kind == "dynamic":
                seq = map_sequence(window, span, self.map_cfg)  # (L, W, H, 3)
                arr = np.moveaxis(seq, -1, 1)  # (L, 3, W, H)
            elif kind == "occupancy":
                seq = occupancy_sequence(window, span, self.map_cfg)
                arr = seq[:, None, :, :]  # (L, 1, W, H)
            else:
                raise ValueError(f"unknown map kind {kind!r}")
            arr.flags.writeable = False
            self._store[key] = arr
        return self._store[key]


def window_features(
    windows: Sequence[Window],
    cfg: ModelConfig,
    cache: MapCache | None = None,
    dtype: torch.dtype = torch.float32,
) -> dict:
    """Stack training tensors for a list of windows.

    Keys: obs_off (B, T-1, 2), fut_off (B, T', 2), and, for interaction
    variants, obs_maps / fut_maps (B, L, C, W, H); fut_maps is present only
    when the variant feeds grids to the future-side encoder.
    """
    if cache is None and cfg.interaction != "none":
        cache = MapCache(cfg.map_config())
    obs_off = np.stack([np.diff(w.obs, axis=0) for w in windows])
    fut_off = np.stack([w.future_offsets() for w in windows])
    feats = {
        "obs_off": torch.as_tensor(obs_off, dtype=dtype),
        "fut_off": torch.as_tensor(fut_off, dtype=dtype),
    }
    if cfg.interaction != "none":
        kind = cfg.interaction
        obs_maps = np.stack([cache.get(w, kind, "obs") for w in windows])
        feats["obs_maps"] = torch.as_tensor(obs_maps, dtype=dtype)
        if cfg.y_maps:
            fut_maps = np.stack([cache.get(w, kind, "fut") for w in windows])
            feats["fut_maps"] = torch.as_tensor(fut_maps, dtype=dtype)
    return feats


def observation_features(
    view: ObservationView,
    cfg: ModelConfig,
    cache: MapCache | None = None,
    dtype: torch.dtype = torch.float32,
) -> dict:
    """Inference-side features for one observation view (never touches
    future frames)."""
    feats = {
        "obs_off": torch.as_tensor(np.diff(view.obs, axis=0), dtype=dtype).unsqueeze(0)
    }
    if cfg.interaction != "none":
        map_cfg = cache.map_cfg if cache is not None else cfg.map_config()
        if cache is not None:
            arr = np.array(cache.get(view, cfg.interaction, "obs"))
        elif cfg.interaction == "dynamic":
            arr = np.moveaxis(map_sequence(view, "obs", map_cfg), -1, 1)
        else:
            arr = occupancy_sequence(view, "obs", map_cfg)[:, None, :, :]
        feats["obs_maps"] = torch.as_tensor(arr, dtype=dtype).unsqueeze(0)
    return feats


def window_seed(base_seed: int, window_id: str) -> int:
    """Stable per-window sampling seed, independent of evaluation order."""
    return (int(base_seed) * 0x9E3779B1 + zlib.crc32(window_id.encode())) % (2**63 - 1)


def save_model(path, model: AMENet, extra: dict | None = None) -> None:
    """Checkpoint the parameters together with the full model config."""
    from .checkpoint import save_checkpoint

    config = {"model": model.cfg.to_dict()}
    if extra:
        config.update(extra)
    save_checkpoint(path, dict(model.state_dict()), config)


def load_model(path) -> tuple[AMENet, dict]:
    """Rebuild a model from a checkpoint; returns (model, config dict)."""
    from .checkpoint import load_checkpoint

    params, config = load_checkpoint(path)
    cfg = ModelConfig.from_dict(config["model"])
    model = AMENet(cfg, seed=0)
    state = {k: torch.as_tensor(v) for k, v in params.items()}
    model.load_state_dict(state)
    model.eval()
    return model, config


def sample_predictions(
    model: AMENet,
    view: ObservationView,
    n_samples: int,
    seed: int = 0,
    eps: torch.Tensor | None = None,
    cache: MapCache | None = None,
) -> PredictionSet:
    """Decode `n_samples` futures for one observation view, drawing the
    latent from the standard-normal prior (or from the supplied `eps`)."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if isinstance(view, Window):
        raise TypeError("pass window.observation(), not the full window")
    cfg = model.cfg
    dtype = next(model.parameters()).dtype
    feats = observation_features(view, cfg, cache=cache, dtype=dtype)
    if eps is None:
        gen = torch.Generator().manual_seed(window_seed(seed, view.window_id))
        eps = torch.randn(n_samples, cfg.z_dim, generator=gen, dtype=dtype)
    else:
        eps = eps.to(dtype)
        if eps.shape != (n_samples, cfg.z_dim):
            raise ValueError(f"eps must be ({n_samples}, {cfg.z_dim}), got {tuple(eps.shape)}")
    was_training = model.training
    model.eval()
    with torch.no_grad():
        phi_x = model.encode_x(feats["obs_off"], feats.get("obs_maps"))
        phi = phi_x.expand(n_samples, -1)
        offsets = model.decode(phi, eps)
    if was_training:
        model.train()
    steps = offsets.double().cpu().numpy()
    positions = view.last_pos[None, None, :] + np.cumsum(steps, axis=1)
    return PredictionSet(
        window_id=view.window_id,
        target=view.target,
        samples=positions,
        z=eps.double().cpu().numpy(),
    )
