"""Frame encoders: a strided convolutional net for motion features and a
patch transformer with a learnable appearance token for appearance features.

Both are pure per-frame maps; no temporal mixing happens here."""
from __future__ import annotations

import math

import torch
import torch.nn as nn
from torch import Tensor

from .transformer import TransformerBlock


def conv_block_count(image_size: int) -> int:
    """Number of stride-2 stages: 4 for 32/64 px, fewer for tiny test images."""
    return max(1, min(4, int(math.log2(image_size)) - 1))


def encoder_channel_ladder(base: int, n_blocks: int) -> list[int]:
    return [base * min(2 ** i, 4) for i in range(n_blocks)]


def _flatten_frames(frames: Tensor, channels: int, image_size: int) -> tuple[Tensor, tuple]:
    """Collapse arbitrary leading dims down to one frame-batch dimension."""
    if frames.shape[-3:] != (channels, image_size, image_size):
        raise ValueError(
            f"expected frames [..., {channels}, {image_size}, {image_size}], "
            f"got {tuple(frames.shape)}"
        )
    lead = frames.shape[:-3]
    return frames.reshape(-1, channels, image_size, image_size), lead


class MotionEncoder(nn.Module):
    """DCGAN-style strided conv stack ending in a linear projection to d_h."""

    def __init__(self, image_size: int, channels: int, d_h: int, base_channels: int = 32):
        super().__init__()
        self.image_size = image_size
        self.channels = channels
        self.d_h = d_h

        n_blocks = conv_block_count(image_size)
        ladder = encoder_channel_ladder(base_channels, n_blocks)
        layers: list[nn.Module] = []
        in_ch = channels
        for out_ch in ladder:
            layers += [
                nn.Conv2d(in_ch, out_ch, 4, stride=2, padding=1),
                nn.GroupNorm(1, out_ch),
                nn.LeakyReLU(0.2, inplace=True),
            ]
            in_ch = out_ch
        self.conv = nn.Sequential(*layers)
        spatial = image_size // 2 ** n_blocks
        self.proj = nn.Linear(in_ch * spatial * spatial, d_h)

    def forward(self, frames: Tensor) -> Tensor:
        """[..., C, H, W] -> [..., d_h], applied independently per frame."""
        flat, lead = _flatten_frames(frames, self.channels, self.image_size)
        h = self.conv(flat)
        h = self.proj(h.flatten(1))
        return h.reshape(*lead, self.d_h)


class AppearanceEncoder(nn.Module):
    """Patch transformer whose prepended learnable token output is the
    per-frame appearance feature."""

    def __init__(
        self,
        image_size: int,
        channels: int,
        d_w: int,
        patch_size: int = 8,
        depth: int = 2,
        heads: int = 4,
    ):
        super().__init__()
        if image_size % patch_size != 0:
            raise ValueError(
                f"image_size {image_size} not divisible by patch_size {patch_size}"
            )
        self.image_size = image_size
        self.channels = channels
        self.patch_size = patch_size
        self.d_w = d_w
        self.n_patches = (image_size // patch_size) ** 2

        self.patch_embed = nn.Linear(channels * patch_size * patch_size, d_w)
        self.appearance_token = nn.Parameter(torch.zeros(1, 1, d_w))
        self.pos_embed = nn.Parameter(torch.zeros(1, self.n_patches + 1, d_w))
        nn.init.trunc_normal_(self.appearance_token, std=0.02)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        self.blocks = nn.ModuleList(TransformerBlock(d_w, heads) for _ in range(depth))
        self.norm = nn.LayerNorm(d_w)

    @property
    def n_tokens(self) -> int:
        return self.n_patches + 1

    def _patchify(self, frames: Tensor) -> Tensor:
        n, c, hh, ww = frames.shape
        p = self.patch_size
        x = frames.reshape(n, c, hh // p, p, ww // p, p)
        x = x.permute(0, 2, 4, 1, 3, 5).reshape(n, self.n_patches, c * p * p)
        return x

    def forward(self, frames: Tensor) -> Tensor:
        """[..., C, H, W] -> [..., d_w]: the appearance-token output position."""
        flat, lead = _flatten_frames(frames, self.channels, self.image_size)
        x = self.patch_embed(self._patchify(flat))
        token = self.appearance_token.to(x.dtype).expand(x.shape[0], -1, -1)
        x = torch.cat([token, x], dim=1) + self.pos_embed.to(x.dtype)
        for block in self.blocks:
            x = block(x)
        feature = self.norm(x)[:, 0]
        return feature.reshape(*lead, self.d_w)
