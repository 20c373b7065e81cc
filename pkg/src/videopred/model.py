"""The complete predictor: encoders, both latent branches and the decoders,
with the training-time forward pass (posterior-driven) and the test-time
rollout (prior-driven beyond the conditioning window)."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
from torch import Tensor

from .appearance import AppearanceDynamics
from .config import RunConfig
from .decoders import FlowDecoder, FrameDecoder, warp
from .encoders import AppearanceEncoder, MotionEncoder
from .gaussians import GaussianParams, sample_gaussian
from .motion import MotionDynamics


@dataclass
class LatentBundle:
    """Every latent produced for one batch, kept exactly as sampled so the
    chains can be replayed step by step."""

    g: Tensor                        # [B, T, rnn_width] recurrent trace
    q_y1: GaussianParams             # posterior over the initial motion state
    y: Tensor                        # [B, T, d_y] motion chain
    z_local: Tensor                  # [B, T-1, d_z] sampled local dynamics (t = 2..T)
    q_z: GaussianParams              # stacked posteriors over z_t
    p_z: GaussianParams              # stacked learned priors over z_t
    w: Tensor                        # [B, T, d_w] appearance chain
    z1: Tensor | None = None         # [B, d_g] sampled global trend
    q_z1: GaussianParams | None = None
    p_z1: GaussianParams | None = None
    zw_teacher: Tensor | None = None  # [B, T-1, d_zw] recurrent transitions
    zw_pred: Tensor | None = None     # [B, T-1, d_zw] predictor outputs


def _randn_like_params(p: GaussianParams, generator: torch.Generator | None) -> Tensor:
    return torch.randn(
        p.mean.shape, generator=generator, dtype=p.mean.dtype, device=p.mean.device
    )


class VideoPredictionModel(nn.Module):
    """Motion/appearance decomposed state-space video predictor.

    Modes: "full"; "no_w" replaces the appearance chain with a constant
    content vector encoded from the first frame; "no_z1" removes the global
    trend variable from the motion updates and the objective.
    """

    def __init__(self, cfg: RunConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.use_global = cfg.mode != "no_z1"
        self.use_appearance_dynamics = cfg.mode != "no_w"

        self.motion_encoder = MotionEncoder(
            cfg.image_size, cfg.channels, cfg.d_h, cfg.base_channels
        )
        self.appearance_encoder = AppearanceEncoder(
            cfg.image_size, cfg.channels, cfg.d_w, cfg.patch_size,
            cfg.vit_depth, cfg.vit_heads,
        )
        self.motion = MotionDynamics(
            cfg.d_h, cfg.d_y, cfg.d_z, cfg.d_g, cfg.rnn_width, cfg.hidden_width,
            cfg.tt_width, cfg.tt_depth, cfg.tt_heads, cfg.pool,
            use_global=self.use_global,
        )
        self.appearance = (
            AppearanceDynamics(cfg.d_w, cfg.d_zw, cfg.rnn_width, cfg.hidden_width)
            if self.use_appearance_dynamics else None
        )
        self.frame_decoder = FrameDecoder(
            cfg.image_size, cfg.channels, cfg.d_w, cfg.d_y, cfg.base_channels
        )
        self.flow_decoder = FlowDecoder(cfg.image_size, cfg.rnn_width, cfg.base_channels)

    # -- training ---------------------------------------------------------

    def training_forward(
        self, x: Tensor, generator: torch.Generator | None = None
    ) -> tuple[LatentBundle, Tensor, Tensor]:
        """Posterior-driven pass over full sequences [B, T, C, H, W].

        Noise draw order (relied on by replay tests): y1, then the global
        trend when enabled, then one local dynamic per step t = 2..T.
        Returns (bundle, decoded frames, flow-warped frames x~_{2:T})."""
        if x.dim() != 5:
            raise ValueError(f"expected [B, T, C, H, W], got {tuple(x.shape)}")
        b, t = x.shape[:2]
        if t < self.cfg.k + 1:
            raise ValueError(f"need at least k+1={self.cfg.k + 1} frames, got {t}")

        h_m = self.motion_encoder(x)
        g, _ = self.motion.posterior_recurrence(h_m)

        q_y1 = self.motion.initial_posterior(h_m[:, 0], h_m[:, 1])
        y1 = sample_gaussian(q_y1, _randn_like_params(q_y1, generator))

        z1 = q_z1 = p_z1 = None
        if self.use_global:
            q_z1 = self.motion.global_dynamics(h_m)
            p_z1 = self.motion.global_dynamics(h_m[:, : self.cfg.k])
            z1 = sample_gaussian(q_z1, _randn_like_params(q_z1, generator))

        ys = [y1]
        zs, q_means, q_scales, p_means, p_scales = [], [], [], [], []
        for step in range(1, t):
            q_zt = self.motion.local_posterior(g[:, step])
            p_zt = self.motion.local_prior(ys[-1])
            z_t = sample_gaussian(q_zt, _randn_like_params(q_zt, generator))
            ys.append(self.motion.step(ys[-1], z_t, z1))
            zs.append(z_t)
            q_means.append(q_zt.mean); q_scales.append(q_zt.scale)
            p_means.append(p_zt.mean); p_scales.append(p_zt.scale)
        y = torch.stack(ys, dim=1)
        z_local = torch.stack(zs, dim=1)
        q_z = GaussianParams(torch.stack(q_means, 1), torch.stack(q_scales, 1))
        p_z = GaussianParams(torch.stack(p_means, 1), torch.stack(p_scales, 1))

        zw_teacher = zw_pred = None
        if self.use_appearance_dynamics:
            h_w = self.appearance_encoder(x)
            zw_teacher, _ = self.appearance.infer_transitions(h_w)
            ws = [h_w[:, 0]]
            for step in range(t - 1):
                ws.append(self.appearance.step(ws[-1], zw_teacher[:, step]))
            w = torch.stack(ws, dim=1)
            zw_pred = self.appearance.predict_transition(w[:, :-1])
            w_decode = w if self.cfg.decode_from_recurrent_chain else h_w
        else:
            w1 = self.appearance_encoder(x[:, 0])
            w = w1.unsqueeze(1).expand(b, t, self.cfg.d_w)
            w_decode = w

        x_hat = self.frame_decoder(w_decode, y)
        flows = self.flow_decoder(g[:, 1:])
        x_warped = warp(flows, x[:, :-1])

        bundle = LatentBundle(
            g=g, q_y1=q_y1, y=y, z_local=z_local, q_z=q_z, p_z=p_z, w=w,
            z1=z1, q_z1=q_z1, p_z1=p_z1, zw_teacher=zw_teacher, zw_pred=zw_pred,
        )
        return bundle, x_hat, x_warped

    # -- generation -------------------------------------------------------

    def rollout(
        self,
        cond: Tensor,
        horizon: int,
        generator: torch.Generator | None = None,
        with_states: bool = False,
    ):
        """Prior-driven prediction of `horizon` frames after the conditioning
        window [B, k, C, H, W].

        The global trend is sampled from its conditioning-frame prior; local
        dynamics use the posterior while frames are observed (configurable)
        and the learned prior beyond. The flow decoder is never invoked."""
        if cond.dim() != 5:
            raise ValueError(f"expected [B, k, C, H, W], got {tuple(cond.shape)}")
        b, k = cond.shape[:2]
        if k < 2:
            raise ValueError(f"need k >= 2 conditioning frames, got {k}")
        if horizon <= 0:
            raise ValueError(f"horizon must be positive, got {horizon}")

        h_m = self.motion_encoder(cond)
        g, _ = self.motion.posterior_recurrence(h_m)

        q_y1 = self.motion.initial_posterior(h_m[:, 0], h_m[:, 1])
        y = sample_gaussian(q_y1, _randn_like_params(q_y1, generator))

        z1 = None
        if self.use_global:
            p_z1 = self.motion.global_dynamics(h_m)
            z1 = sample_gaussian(p_z1, _randn_like_params(p_z1, generator))

        for step in range(1, k):
            if self.cfg.posterior_in_conditioning:
                params = self.motion.local_posterior(g[:, step])
            else:
                params = self.motion.local_prior(y)
            z = sample_gaussian(params, _randn_like_params(params, generator))
            y = self.motion.step(y, z, z1)

        if self.use_appearance_dynamics:
            h_w = self.appearance_encoder(cond)
            w = h_w[:, 0]
            zw_teacher, _ = self.appearance.infer_transitions(h_w)
            for step in range(k - 1):
                w = self.appearance.step(w, zw_teacher[:, step])
        else:
            w = self.appearance_encoder(cond[:, 0])

        frames, y_states, w_states = [], [], []
        for _ in range(horizon):
            p_zt = self.motion.local_prior(y)
            z = sample_gaussian(p_zt, _randn_like_params(p_zt, generator))
            y = self.motion.step(y, z, z1)
            if self.use_appearance_dynamics:
                w = self.appearance.step(w, self.appearance.predict_transition(w))
            frames.append(self.frame_decoder(w, y))
            y_states.append(y)
            w_states.append(w)
        out = torch.stack(frames, dim=1)
        if with_states:
            return out, torch.stack(y_states, 1), torch.stack(w_states, 1)
        return out

    def decode_states(self, w: Tensor, y: Tensor, only: str | None = None) -> Tensor:
        """Decode latent states; `only="w"` zeroes the motion input and
        `only="y"` zeroes the appearance input (separate-branch inspection)."""
        if only == "w":
            y = torch.zeros_like(y)
        elif only == "y":
            w = torch.zeros_like(w)
        elif only is not None:
            raise ValueError(f"only must be 'w', 'y' or None, got {only!r}")
        return self.frame_decoder(w, y)
