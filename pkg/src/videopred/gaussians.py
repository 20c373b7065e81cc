"""Diagonal Gaussians: the parameter container, the MLP head producing them,
and reparameterized sampling."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

# Lower bound on predicted scales; keeps KL denominators bounded below.
SCALE_FLOOR = 1e-4


@dataclass
class GaussianParams:
    """Mean and strictly positive per-dimension scale of a diagonal Gaussian.

    Leading dimensions are batch/time; the last dimension is the event."""

    mean: Tensor
    scale: Tensor

    def __post_init__(self):
        if self.mean.shape != self.scale.shape:
            raise ValueError(
                f"mean shape {tuple(self.mean.shape)} != scale shape {tuple(self.scale.shape)}"
            )

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    def detach(self) -> "GaussianParams":
        return GaussianParams(self.mean.detach(), self.scale.detach())


def standard_normal(like: Tensor) -> GaussianParams:
    """N(0, I) with the shape/dtype/device of `like`. Fixed, never learned."""
    return GaussianParams(torch.zeros_like(like), torch.ones_like(like))


def sample_gaussian(p: GaussianParams, noise: Tensor) -> Tensor:
    """Reparameterized draw: mean + scale * noise.

    Differentiable in both parameters; `noise` is a standard-normal tensor of
    the event shape."""
    if noise.shape != p.mean.shape:
        raise ValueError(
            f"noise shape {tuple(noise.shape)} != parameter shape {tuple(p.mean.shape)}"
        )
    return p.mean + p.scale * noise


class GaussianHead(nn.Module):
    """Two-layer MLP emitting a diagonal Gaussian.

    scale = softplus(raw) + SCALE_FLOOR, so scales are strictly positive."""

    def __init__(self, in_dim: int, out_dim: int, hidden: int = 128):
        super().__init__()
        self.out_dim = out_dim
        self.net = nn.Sequential(
            nn.Linear(in_dim, hidden),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, 2 * out_dim),
        )

    def forward(self, x: Tensor) -> GaussianParams:
        raw = self.net(x)
        mean, raw_scale = raw.split(self.out_dim, dim=-1)
        return GaussianParams(mean, F.softplus(raw_scale) + SCALE_FLOOR)
