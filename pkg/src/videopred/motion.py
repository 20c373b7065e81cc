"""Stochastic motion branch: posterior recurrence over motion features, the
learned local prior, initial-state inference, a shared temporal transformer
for the per-sequence global trend, and the residual state update."""
from __future__ import annotations

import torch
import torch.nn as nn
from torch import Tensor

from .gaussians import GaussianHead, GaussianParams
from .transformer import TransformerBlock, sinusoidal_positions


class TemporalSummaryTransformer(nn.Module):
    """Pools a variable-length feature sequence into one diagonal Gaussian.

    One parameter set serves both the prior (conditioning prefix) and the
    posterior (full sequence); input length is the only difference. Sinusoidal
    positions keep the module length-agnostic while making it order-sensitive.
    """

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        width: int = 64,
        depth: int = 2,
        heads: int = 4,
        hidden: int = 128,
        pool: str = "token",
    ):
        super().__init__()
        if pool not in ("token", "mean"):
            raise ValueError(f"pool must be 'token' or 'mean', got {pool!r}")
        self.pool = pool
        self.width = width
        self.proj = nn.Linear(in_dim, width)
        if pool == "token":
            self.summary_token = nn.Parameter(torch.zeros(1, 1, width))
            nn.init.trunc_normal_(self.summary_token, std=0.02)
        self.blocks = nn.ModuleList(TransformerBlock(width, heads) for _ in range(depth))
        self.norm = nn.LayerNorm(width)
        self.head = GaussianHead(width, out_dim, hidden)

    def forward(self, h: Tensor) -> GaussianParams:
        """[B, L, in_dim] (L >= 1) -> Gaussian over the summary, [B, out_dim]."""
        if h.dim() != 3 or h.shape[1] < 1:
            raise ValueError(f"expected a non-empty [B, L, d] sequence, got {tuple(h.shape)}")
        x = self.proj(h)
        x = x + sinusoidal_positions(x.shape[1], self.width, dtype=x.dtype, device=x.device)
        if self.pool == "token":
            token = self.summary_token.to(x.dtype).expand(x.shape[0], -1, -1)
            x = torch.cat([token, x], dim=1)
        for block in self.blocks:
            x = block(x)
        x = self.norm(x)
        pooled = x[:, 0] if self.pool == "token" else x.mean(dim=1)
        return self.head(pooled)


def residual_mlp(in_dim: int, out_dim: int, hidden: int) -> nn.Sequential:
    """Two-hidden-layer MLP with a zero-initialized final layer, so the
    residual update starts as the identity."""
    net = nn.Sequential(
        nn.Linear(in_dim, hidden),
        nn.ReLU(inplace=True),
        nn.Linear(hidden, hidden),
        nn.ReLU(inplace=True),
        nn.Linear(hidden, out_dim),
    )
    nn.init.zeros_(net[-1].weight)
    nn.init.zeros_(net[-1].bias)
    return net


class MotionDynamics(nn.Module):
    """All learned pieces of the stochastic branch.

    `use_global=False` is the ablation that drops the per-sequence trend
    variable: the residual update then conditions on (y, z) only and the
    temporal transformer is not constructed.
    """

    def __init__(
        self,
        d_h: int,
        d_y: int,
        d_z: int,
        d_g: int,
        rnn_width: int = 128,
        hidden: int = 128,
        tt_width: int = 64,
        tt_depth: int = 2,
        tt_heads: int = 4,
        pool: str = "token",
        use_global: bool = True,
    ):
        super().__init__()
        self.d_y, self.d_z, self.d_g = d_y, d_z, d_g
        self.use_global = use_global

        self.recurrence = nn.LSTM(d_h, rnn_width, batch_first=True)
        self.posterior_head = GaussianHead(rnn_width, d_z, hidden)
        self.prior_head = GaussianHead(d_y, d_z, hidden)
        self.initial_head = GaussianHead(2 * d_h, d_y, hidden)
        if use_global:
            self.global_transformer = TemporalSummaryTransformer(
                d_h, d_g, tt_width, tt_depth, tt_heads, hidden, pool
            )
        step_in = d_y + d_z + (d_g if use_global else 0)
        self.transition = residual_mlp(step_in, d_y, hidden)

    def posterior_recurrence(self, h: Tensor, state=None) -> tuple[Tensor, tuple]:
        """Causal LSTM pass over motion features [B, T, d_h] -> [B, T, rnn_width].

        Returns the trace and the final (h, c) state so rollout can keep
        extending it frame by frame."""
        if h.dim() != 3 or h.shape[1] < 1:
            raise ValueError(f"expected a non-empty [B, T, d_h] sequence, got {tuple(h.shape)}")
        return self.recurrence(h, state)

    def local_posterior(self, g_t: Tensor) -> GaussianParams:
        """q(z_t | x_{1:t}) from the recurrent output at step t."""
        return self.posterior_head(g_t)

    def local_prior(self, y_prev: Tensor) -> GaussianParams:
        """p(z_t | y_{t-1}) from the previous motion state."""
        return self.prior_head(y_prev)

    def initial_posterior(self, h1: Tensor, h2: Tensor) -> GaussianParams:
        """q(y_1 | x_{1:2}) from the first two motion features."""
        return self.initial_head(torch.cat([h1, h2], dim=-1))

    def global_dynamics(self, h: Tensor) -> GaussianParams:
        """Gaussian over the per-sequence trend; pass the full sequence for the
        posterior or just the conditioning prefix for the prior."""
        if not self.use_global:
            raise RuntimeError("global dynamics disabled in this mode")
        return self.global_transformer(h)

    def step(self, y: Tensor, z: Tensor, z1: Tensor | None = None) -> Tensor:
        """Residual update y + MLP([y, z, z1]); z1 is forbidden in the ablated
        mode and required otherwise."""
        if self.use_global:
            if z1 is None:
                raise ValueError("motion step requires the global trend in full mode")
            inp = torch.cat([y, z, z1], dim=-1)
        else:
            if z1 is not None:
                raise ValueError("motion step takes no global trend in no_z1 mode")
            inp = torch.cat([y, z], dim=-1)
        return y + self.transition(inp)
