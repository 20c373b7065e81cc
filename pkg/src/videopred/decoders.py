"""Frame decoding from [appearance, motion] states, optical-flow decoding
from recurrent outputs, and differentiable bilinear warping.

The flow path exists only as a training-time supervision signal; generation
never touches it."""
from __future__ import annotations

import torch
import torch.nn as nn
from torch import Tensor

from .encoders import conv_block_count, encoder_channel_ladder


class ConvDecoder(nn.Module):
    """Transposed-conv mirror of the motion encoder."""

    def __init__(
        self,
        image_size: int,
        out_channels: int,
        in_dim: int,
        base_channels: int = 32,
        sigmoid_output: bool = True,
        zero_init_head: bool = False,
    ):
        super().__init__()
        self.image_size = image_size
        self.out_channels = out_channels
        self.in_dim = in_dim
        self.sigmoid_output = sigmoid_output

        n_blocks = conv_block_count(image_size)
        ladder = encoder_channel_ladder(base_channels, n_blocks)
        path = list(reversed(ladder)) + [ladder[0]]
        self.start_spatial = image_size // 2 ** n_blocks
        self.proj = nn.Linear(in_dim, path[0] * self.start_spatial ** 2)
        layers: list[nn.Module] = []
        for in_ch, out_ch in zip(path[:-1], path[1:]):
            layers += [
                nn.ConvTranspose2d(in_ch, out_ch, 4, stride=2, padding=1),
                nn.GroupNorm(1, out_ch),
                nn.LeakyReLU(0.2, inplace=True),
            ]
        self.deconv = nn.Sequential(*layers)
        self.head = nn.Conv2d(path[-1], out_channels, 3, padding=1)
        self._start_channels = path[0]
        if zero_init_head:
            nn.init.zeros_(self.head.weight)
            nn.init.zeros_(self.head.bias)

    def forward(self, latent: Tensor) -> Tensor:
        """[..., in_dim] -> [..., out_channels, H, W]."""
        if latent.shape[-1] != self.in_dim:
            raise ValueError(f"expected input dim {self.in_dim}, got {latent.shape[-1]}")
        lead = latent.shape[:-1]
        x = self.proj(latent.reshape(-1, self.in_dim))
        x = x.reshape(-1, self._start_channels, self.start_spatial, self.start_spatial)
        x = self.head(self.deconv(x))
        if self.sigmoid_output:
            x = torch.sigmoid(x)
        return x.reshape(*lead, self.out_channels, self.image_size, self.image_size)


class FrameDecoder(ConvDecoder):
    """Joint decoder: concatenates appearance and motion states, emits a frame
    in [0, 1] through a final sigmoid."""

    def __init__(self, image_size: int, channels: int, d_w: int, d_y: int,
                 base_channels: int = 32):
        super().__init__(image_size, channels, d_w + d_y, base_channels,
                         sigmoid_output=True)
        self.d_w, self.d_y = d_w, d_y

    def forward(self, w: Tensor, y: Tensor) -> Tensor:  # type: ignore[override]
        if w.shape[-1] != self.d_w or y.shape[-1] != self.d_y:
            raise ValueError(
                f"expected dims ({self.d_w}, {self.d_y}), got ({w.shape[-1]}, {y.shape[-1]})"
            )
        return super().forward(torch.cat([w, y], dim=-1))


class FlowDecoder(ConvDecoder):
    """Same architecture family as the frame decoder, but two unbounded output
    channels (dx, dy) and no sigmoid.

    `zero_init_head=True` makes the initial flow identically zero; the default
    keeps standard init because bilinear warping has a derivative kink at
    exactly-integer displacements, where gradients are one-sided."""

    def __init__(self, image_size: int, in_dim: int, base_channels: int = 32,
                 zero_init_head: bool = False):
        super().__init__(image_size, 2, in_dim, base_channels,
                         sigmoid_output=False, zero_init_head=zero_init_head)


def warp(flow: Tensor, frame: Tensor) -> Tensor:
    """Backward bilinear warp.

    Output pixel (i, j) samples `frame` at (i + dy, j + dx) where flow channel
    0 is dx and channel 1 is dy, in pixel units. Out-of-bounds coordinates are
    clamped (border replication). Differentiable in both arguments; zero flow
    reproduces the frame bit-exactly.

    flow: [..., 2, H, W]; frame: [..., C, H, W] with identical leading dims.
    """
    if flow.shape[-3] != 2:
        raise ValueError(f"flow must have 2 channels, got {flow.shape[-3]}")
    if flow.shape[-2:] != frame.shape[-2:] or flow.shape[:-3] != frame.shape[:-3]:
        raise ValueError(
            f"flow shape {tuple(flow.shape)} incompatible with frame {tuple(frame.shape)}"
        )
    lead = frame.shape[:-3]
    c, h, w = frame.shape[-3:]
    f = flow.reshape(-1, 2, h, w)
    x = frame.reshape(-1, c, h, w)
    b = x.shape[0]

    base_y = torch.arange(h, dtype=f.dtype, device=f.device).view(1, h, 1)
    base_x = torch.arange(w, dtype=f.dtype, device=f.device).view(1, 1, w)
    sy = (base_y + f[:, 1]).clamp(0, h - 1)
    sx = (base_x + f[:, 0]).clamp(0, w - 1)

    y0 = sy.floor()
    x0 = sx.floor()
    wy = (sy - y0).unsqueeze(1)
    wx = (sx - x0).unsqueeze(1)
    y0l = y0.long()
    x0l = x0.long()
    y1l = (y0l + 1).clamp(max=h - 1)
    x1l = (x0l + 1).clamp(max=w - 1)

    flat = x.reshape(b, c, h * w)

    def gather(iy: Tensor, ix: Tensor) -> Tensor:
        idx = (iy * w + ix).reshape(b, 1, h * w).expand(-1, c, -1)
        return flat.gather(2, idx).reshape(b, c, h, w)

    out = (
        (1 - wy) * (1 - wx) * gather(y0l, x0l)
        + (1 - wy) * wx * gather(y0l, x1l)
        + wy * (1 - wx) * gather(y1l, x0l)
        + wy * wx * gather(y1l, x1l)
    )
    return out.reshape(*lead, c, h, w)


def flow_supervision_loss(x_warped: Tensor, x_true: Tensor) -> Tensor:
    """Sum over time of Euclidean norms of flattened pixel differences.

    Accepts [T, C, H, W] or [B, T, C, H, W]; batched input returns the
    per-sequence mean."""
    if x_warped.shape != x_true.shape:
        raise ValueError(
            f"shape mismatch: {tuple(x_warped.shape)} vs {tuple(x_true.shape)}"
        )
    diff = (x_warped - x_true).flatten(start_dim=-3)
    per_step = torch.linalg.vector_norm(diff, dim=-1)
    total = per_step.sum(dim=-1)
    return total.mean() if total.dim() else total
