"""Training objective: Gaussian reconstruction NLL, the three KL terms, and
the two auxiliary L2 losses, combined into one weighted total."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import torch
from torch import Tensor

from .appearance import transition_supervision_loss
from .decoders import flow_supervision_loss
from .gaussians import GaussianParams, standard_normal

if TYPE_CHECKING:
    from .config import RunConfig
    from .model import LatentBundle


class NonFiniteLossError(RuntimeError):
    """A loss component became non-finite; the message names the term."""


def gaussian_kl(q: GaussianParams, p: GaussianParams) -> Tensor:
    """Closed-form KL(q || p) for diagonal Gaussians, summed over the event
    (last) dimension. Leading dimensions are preserved."""
    if q.mean.shape != p.mean.shape:
        raise ValueError(
            f"dimension mismatch: q {tuple(q.mean.shape)} vs p {tuple(p.mean.shape)}"
        )
    if (q.scale <= 0).any() or (p.scale <= 0).any():
        raise ValueError("scales must be strictly positive")
    var_ratio = (q.scale / p.scale) ** 2
    term = torch.log(p.scale / q.scale) + (var_ratio + ((q.mean - p.mean) / p.scale) ** 2) / 2 - 0.5
    return term.sum(dim=-1)


def kl_standard_normal(q: GaussianParams) -> Tensor:
    """KL against the fixed N(0, I) prior of the initial motion state."""
    return gaussian_kl(q, standard_normal(q.mean))


def reconstruction_nll(x_hat: Tensor, x: Tensor, sigma_obs: float = 1.0) -> Tensor:
    """Negative log density of x under N(x_hat, sigma_obs^2 I), totalled over
    every element: sum of (x_hat - x)^2 / (2 sigma^2) + ln sigma + ln(2 pi)/2."""
    if x_hat.shape != x.shape:
        raise ValueError(f"shape mismatch: {tuple(x_hat.shape)} vs {tuple(x.shape)}")
    if sigma_obs <= 0:
        raise ValueError(f"sigma_obs must be positive, got {sigma_obs}")
    const = math.log(sigma_obs) + 0.5 * math.log(2 * math.pi)
    return ((x_hat - x) ** 2 / (2 * sigma_obs ** 2) + const).sum()


@dataclass
class LossBreakdown:
    """Per-sequence batch averages of every objective component.

    Fields are scalar tensors so the total stays differentiable; terms absent
    in an ablation mode are None and excluded from serialized records."""

    recon_nll: Tensor
    kl_y1: Tensor
    kl_z_local: Tensor
    kl_z1: Tensor | None
    flow_l2: Tensor
    appearance_l2: Tensor | None
    total: Tensor

    def to_dict(self) -> dict[str, float]:
        out = {}
        for name in ("recon_nll", "kl_y1", "kl_z_local", "kl_z1", "flow_l2",
                     "appearance_l2", "total"):
            value = getattr(self, name)
            if value is not None:
                out[name] = float(value.detach())
        return out

    def detached(self) -> "LossBreakdown":
        """Graph-free copy for logging once the backward pass is done."""
        def d(v):
            return None if v is None else v.detach()
        return LossBreakdown(
            d(self.recon_nll), d(self.kl_y1), d(self.kl_z_local), d(self.kl_z1),
            d(self.flow_l2), d(self.appearance_l2), d(self.total),
        )


def _require_finite(name: str, value: Tensor) -> Tensor:
    if not torch.isfinite(value).all():
        raise NonFiniteLossError(f"loss component {name!r} is non-finite ({float(value)})")
    return value


def assemble_loss(
    bundle: "LatentBundle",
    x: Tensor,
    x_hat: Tensor,
    x_warped: Tensor,
    cfg: "RunConfig",
    kl_scale: float = 1.0,
) -> LossBreakdown:
    """Combine the reconstruction NLL, KL terms and auxiliary L2 losses into
    the weighted training total.

    kl_scale is the warmup multiplier hook; 1.0 is the plain bound."""
    batch = x.shape[0]

    recon = _require_finite(
        "recon_nll", reconstruction_nll(x_hat, x, cfg.sigma_obs) / batch
    )
    kl_y1 = _require_finite("kl_y1", kl_standard_normal(bundle.q_y1).mean())
    # KL of every local dynamic, summed over t = 2..T, then batch-averaged.
    kl_z = _require_finite(
        "kl_z_local", gaussian_kl(bundle.q_z, bundle.p_z).sum(dim=-1).mean()
    )
    flow = _require_finite("flow_l2", flow_supervision_loss(x_warped, x[:, 1:]))

    total = (
        recon
        + kl_scale * (cfg.beta_y1 * kl_y1 + cfg.beta_z * kl_z)
        + cfg.lambda_flow * flow
    )

    kl_z1 = None
    if bundle.q_z1 is not None:
        kl_z1 = _require_finite(
            "kl_z1", gaussian_kl(bundle.q_z1, bundle.p_z1).mean()
        )
        total = total + kl_scale * cfg.beta_z1 * kl_z1

    app = None
    if bundle.zw_pred is not None:
        app = _require_finite(
            "appearance_l2",
            transition_supervision_loss(bundle.zw_pred, bundle.zw_teacher),
        )
        total = total + cfg.lambda_app * app

    return LossBreakdown(recon, kl_y1, kl_z, kl_z1, flow, app, _require_finite("total", total))
