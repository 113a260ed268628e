"""Differentiable building blocks with explicit shape contracts.

All blocks accept an optional leading batch dimension; the documented
shapes are for the unbatched case.  Forward math runs in the dtype of the
module parameters (float32 by default); attention is the exception and
always accumulates internally in float64 before rounding back to the
input dtype, which keeps self-attention exactly permutation-equivariant
in single precision.

Analytic gradients come from autograd; :func:`grad_check` verifies them
against central finite differences in double precision.
"""

from __future__ import annotations

import contextlib
import copy
import math
from dataclasses import dataclass

import torch
from torch import nn


@contextlib.contextmanager
def deterministic_init(seed: int):
    """Fork the torch RNG so parameter initialization depends only on
    `seed`, leaving the global stream untouched."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield


def _uniform_param(*shape, fan_in: int) -> nn.Parameter:
    bound = math.sqrt(1.0 / fan_in)
    weight = torch.empty(*shape)
    nn.init.uniform_(weight, -bound, bound)
    return nn.Parameter(weight)


@dataclass(frozen=True)
class AttentionConfig:
    """Dimensions of the self-attention stage.

    `model_dim` is the width of the per-step feature the attention reads;
    query/key width d_q (= d_k) and value width d_v are split evenly over
    the heads, so both must be divisible by `heads`.
    """

    model_dim: int
    d_q: int = 4
    d_k: int = 4
    d_v: int = 4
    heads: int = 2
    out_dim: int | None = None

    def __post_init__(self):
        if self.d_q != self.d_k:
            raise ValueError(f"d_q must equal d_k, got {self.d_q} != {self.d_k}")
        if self.heads < 1:
            raise ValueError("heads must be >= 1")
        if self.d_q % self.heads or self.d_v % self.heads:
            raise ValueError(
                f"d_q ({self.d_q}) and d_v ({self.d_v}) must be divisible by heads ({self.heads})"
            )
        if self.model_dim < 1:
            raise ValueError("model_dim must be >= 1")

    @property
    def head_dim_qk(self) -> int:
        return self.d_q // self.heads

    @property
    def head_dim_v(self) -> int:
        return self.d_v // self.heads

    @property
    def output_dim(self) -> int:
        return self.model_dim if self.out_dim is None else self.out_dim


def scaled_dot_product_attention(q, k, v, return_weights: bool = False):
    """softmax(q kᵀ / sqrt(d_k)) v over the last two axes.

    q: (..., L, d_q), k: (..., L, d_k), v: (..., L, d_v) with d_q = d_k.
    Every output row is a convex combination of rows of v.
    """
    if q.shape[-1] != k.shape[-1]:
        raise ValueError(f"d_q ({q.shape[-1]}) must equal d_k ({k.shape[-1]})")
    if q.shape[:-2] != k.shape[:-2] or k.shape[:-1] != v.shape[:-1]:
        raise ValueError(f"incompatible attention shapes {q.shape}/{k.shape}/{v.shape}")
    dtype = q.dtype
    q64, k64, v64 = q.double(), k.double(), v.double()
    logits = q64 @ k64.transpose(-2, -1) / math.sqrt(k.shape[-1])
    weights = torch.softmax(logits, dim=-1)
    out = (weights @ v64).to(dtype)
    if return_weights:
        return out, weights.to(dtype)
    return out


class MultiHeadSelfAttention(nn.Module):
    """Self-attention over a sequence of per-step features.

    Each head projects the input with its own query/key/value matrices of
    shape (model_dim, d/heads); head outputs are concatenated and mixed by
    an output matrix back to `output_dim`.  No positional encoding, so the
    block is permutation-equivariant along the sequence axis.
    """

    def __init__(self, cfg: AttentionConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.model_dim
        self.w_q = _uniform_param(cfg.heads, d, cfg.head_dim_qk, fan_in=d)
        self.w_k = _uniform_param(cfg.heads, d, cfg.head_dim_qk, fan_in=d)
        self.w_v = _uniform_param(cfg.heads, d, cfg.head_dim_v, fan_in=d)
        self.w_o = _uniform_param(cfg.d_v, cfg.output_dim, fan_in=cfg.d_v)

    def forward(self, x, return_weights: bool = False):
        if x.shape[-1] != self.cfg.model_dim:
            raise ValueError(
                f"expected feature dim {self.cfg.model_dim}, got {x.shape[-1]}"
            )
        # (..., L, D) -> (..., h, L, d_head)
        q = torch.einsum("...ld,hdk->...hlk", x, self.w_q)
        k = torch.einsum("...ld,hdk->...hlk", x, self.w_k)
        v = torch.einsum("...ld,hdk->...hlk", x, self.w_v)
        heads, weights = scaled_dot_product_attention(q, k, v, return_weights=True)
        merged = heads.movedim(-3, -2).flatten(-2)  # (..., L, d_v)
        out = merged @ self.w_o
        if return_weights:
            return out, weights
        return out


class TemporalConv1d(nn.Module):
    """1D convolution along the time axis of an (L, C_in) sequence with
    stride 1 and same-length padding; kernel width must be odd."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3):
        super().__init__()
        if kernel % 2 == 0:
            raise ValueError(f"kernel width must be odd, got {kernel}")
        self.conv = nn.Conv1d(in_channels, out_channels, kernel, padding=kernel // 2)

    def forward(self, seq):
        if seq.shape[-1] != self.conv.in_channels:
            raise ValueError(
                f"expected {self.conv.in_channels} channels, got {seq.shape[-1]}"
            )
        squeeze = seq.dim() == 2
        if squeeze:
            seq = seq.unsqueeze(0)
        out = self.conv(seq.transpose(-1, -2)).transpose(-1, -2)
        return out.squeeze(0) if squeeze else out


class MapConvPool(nn.Module):
    """Conv2D + ReLU + max-pool + flatten: turns one (C, W, H) grid into a
    non-negative feature vector."""

    def __init__(self, in_channels: int, filters: int = 16, kernel: int = 3, pool: int = 2):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, filters, kernel)
        self.pool = nn.MaxPool2d(pool, stride=pool)

    def forward(self, grid):
        if grid.shape[-3] != self.conv.in_channels:
            raise ValueError(
                f"expected {self.conv.in_channels} channels, got {grid.shape[-3]}"
            )
        squeeze = grid.dim() == 3
        if squeeze:
            grid = grid.unsqueeze(0)
        lead = grid.shape[:-3]
        flat = grid.reshape(-1, *grid.shape[-3:])
        feat = self.pool(torch.relu(self.conv(flat)))
        feat = feat.reshape(*lead, -1)
        return feat.squeeze(0) if squeeze else feat

    def feature_dim(self, width: int, height: int) -> int:
        k = self.conv.kernel_size[0]
        p = self.pool.kernel_size
        w = (width - k + 1) // p
        h = (height - k + 1) // p
        if w < 1 or h < 1:
            raise ValueError(f"grid {width}x{height} too small for kernel {k} + pool {p}")
        return self.conv.out_channels * w * h


class SeqLSTM(nn.Module):
    """Single-layer LSTM over an (L, D_in) sequence; returns all hidden
    states (L, H) and the last one (H,).  Hidden entries lie in (-1, 1)."""

    def __init__(self, in_dim: int, hidden: int):
        super().__init__()
        self.lstm = nn.LSTM(in_dim, hidden, batch_first=True)

    def forward(self, seq, state=None):
        squeeze = seq.dim() == 2
        if squeeze:
            seq = seq.unsqueeze(0)
        hiddens, (h_n, _) = self.lstm(seq, state)
        if squeeze:
            return hiddens.squeeze(0), h_n[-1].squeeze(0)
        return hiddens, h_n[-1]


def grad_check(block: nn.Module, inputs=(), eps: float = 1e-5, seed: int = 0) -> float:
    """Max relative error between autograd parameter gradients and central
    finite differences of a random scalar head, in double precision.

    Non-finite analytic gradients are reported as an infinite error.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if isinstance(inputs, torch.Tensor):
        inputs = (inputs,)
    block = copy.deepcopy(block).double()
    inputs = tuple(t.detach().double() for t in inputs)

    gen = torch.Generator().manual_seed(seed)
    probe: dict[str, torch.Tensor] = {}

    def head() -> torch.Tensor:
        out = block(*inputs)
        if isinstance(out, tuple):
            out = out[0]
        if "r" not in probe:
            probe["r"] = torch.randn(out.shape, generator=gen, dtype=torch.float64)
        return (out * probe["r"]).sum()

    params = [p for p in block.parameters() if p.requires_grad]
    analytic = torch.autograd.grad(head(), params, allow_unused=True)

    max_err = 0.0
    with torch.no_grad():
        for p, g in zip(params, analytic):
            g = torch.zeros_like(p) if g is None else g
            if not torch.isfinite(g).all():
                return math.inf
            flat, gflat = p.view(-1), g.reshape(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                f_plus = head().item()
                flat[i] = orig - eps
                f_minus = head().item()
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2.0 * eps)
                ana = gflat[i].item()
                err = abs(numeric - ana) / max(abs(numeric), abs(ana), 1e-6)
                max_err = max(max_err, err)
    return max_err
