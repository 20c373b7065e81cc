"""PSNR/SSIM metrics and the multi-sample stochastic evaluation protocol with
per-timestep aggregation."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import Tensor

PSNR_CAP_DB = 100.0


def psnr(x: Tensor, x_hat: Tensor) -> float:
    """Peak signal-to-noise ratio in dB with peak 1.0; zero MSE returns the
    100 dB cap so aggregation stays finite."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    mse = float(((x - x_hat) ** 2).mean())
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(size: int, sigma: float, dtype, device) -> Tensor:
    coords = torch.arange(size, dtype=dtype, device=device) - (size - 1) / 2.0
    g = torch.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    g = g / g.sum()
    return g.outer(g)


def ssim(x: Tensor, x_hat: Tensor, window_size: int = 11, sigma: float = 1.5) -> float:
    """Windowed SSIM: Gaussian 11x11 window (sigma 1.5), C1=0.01^2, C2=0.03^2
    on peak 1.0, averaged over window positions and channels. Accepts [H, W]
    or [C, H, W]."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    if x.dim() == 2:
        x, x_hat = x.unsqueeze(0), x_hat.unsqueeze(0)
    if x.dim() != 3:
        raise ValueError(f"expected [H, W] or [C, H, W], got {tuple(x.shape)}")
    h, w = x.shape[-2:]
    if h < window_size or w < window_size:
        raise ValueError(f"image {h}x{w} smaller than the {window_size}px window")

    dtype = x.dtype if x.dtype.is_floating_point else torch.float32
    a = x.to(dtype).unsqueeze(1)      # [C, 1, H, W]
    b = x_hat.to(dtype).unsqueeze(1)
    win = _gaussian_window(window_size, sigma, dtype, x.device).reshape(1, 1, window_size, window_size)

    mu_a = F.conv2d(a, win)
    mu_b = F.conv2d(b, win)
    var_a = F.conv2d(a * a, win) - mu_a ** 2
    var_b = F.conv2d(b * b, win) - mu_b ** 2
    cov = F.conv2d(a * b, win) - mu_a * mu_b

    c1 = 0.01 ** 2
    c2 = 0.03 ** 2
    score = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    )
    return float(score.mean())


def copy_last_frame_baseline(cond: Tensor, horizon: int) -> Tensor:
    """Repeat the last conditioning frame `horizon` times. cond is
    [k, C, H, W] or [B, k, C, H, W]."""
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if cond.dim() not in (4, 5):
        raise ValueError(f"expected [k, C, H, W] or [B, k, C, H, W], got {tuple(cond.shape)}")
    last = cond[..., -1:, :, :, :] if cond.dim() == 5 else cond[-1:]
    reps = [1] * cond.dim()
    reps[-4] = horizon
    return last.repeat(*reps)


@dataclass
class MetricReport:
    aggregation: str                  # "mean" | "best"
    n_samples: int
    k: int
    horizon: int
    n_sequences: int
    psnr_per_timestep: list[float]
    ssim_per_timestep: list[float]
    psnr_mean: float
    psnr_ci95: float
    ssim_mean: float
    ssim_ci95: float
    per_sequence_psnr: list[float] = field(default_factory=list)
    per_sequence_ssim: list[float] = field(default_factory=list)
    lpips: None = None                # perceptual metric not implemented; recorded as absent
    notes: str = "confidence intervals are normal-approximation 95% over per-sequence means"

    def to_dict(self) -> dict:
        return {
            "aggregation": self.aggregation,
            "n_samples": self.n_samples,
            "k": self.k,
            "horizon": self.horizon,
            "n_sequences": self.n_sequences,
            "psnr_per_timestep": self.psnr_per_timestep,
            "ssim_per_timestep": self.ssim_per_timestep,
            "psnr_mean": self.psnr_mean,
            "psnr_ci95": self.psnr_ci95,
            "ssim_mean": self.ssim_mean,
            "ssim_ci95": self.ssim_ci95,
            "per_sequence_psnr": self.per_sequence_psnr,
            "per_sequence_ssim": self.per_sequence_ssim,
            "lpips": self.lpips,
            "notes": self.notes,
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path

    def save_curves(self, path: str | Path) -> Path:
        """Per-timestep curves as plain tab-separated text."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["timestep\tpsnr\tssim"]
        for t, (p, s) in enumerate(zip(self.psnr_per_timestep, self.ssim_per_timestep), 1):
            lines.append(f"{t}\t{p:.6f}\t{s:.6f}")
        path.write_text("\n".join(lines) + "\n")
        return path


def _ci95(values: Tensor) -> float:
    n = values.numel()
    if n < 2:
        return 0.0
    return float(1.96 * values.std(unbiased=True) / math.sqrt(n))


def _aggregate(psnr_curves: Tensor, ssim_curves: Tensor, aggregation: str,
               n_samples: int, k: int, horizon: int) -> MetricReport:
    """psnr_curves/ssim_curves: [N_sequences, horizon] after per-sample
    aggregation."""
    seq_psnr = psnr_curves.mean(dim=1)
    seq_ssim = ssim_curves.mean(dim=1)
    return MetricReport(
        aggregation=aggregation,
        n_samples=n_samples,
        k=k,
        horizon=horizon,
        n_sequences=psnr_curves.shape[0],
        psnr_per_timestep=psnr_curves.mean(dim=0).tolist(),
        ssim_per_timestep=ssim_curves.mean(dim=0).tolist(),
        psnr_mean=float(seq_psnr.mean()),
        psnr_ci95=_ci95(seq_psnr),
        ssim_mean=float(seq_ssim.mean()),
        ssim_ci95=_ci95(seq_ssim),
        per_sequence_psnr=seq_psnr.tolist(),
        per_sequence_ssim=seq_ssim.tolist(),
    )


def evaluate(
    model,
    sequences: Tensor,
    k: int,
    horizon: int,
    n_samples: int = 5,
    aggregation: str = "mean",
    generator: torch.Generator | None = None,
) -> MetricReport:
    """Draw n_samples stochastic rollouts per sequence and aggregate.

    "mean" averages each metric over samples per timestep; "best" keeps the
    sample maximizing the sequence-mean PSNR. Dataset-level means carry 95%
    normal-approximation confidence intervals over per-sequence means."""
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if aggregation not in ("mean", "best"):
        raise ValueError(f"aggregation must be 'mean' or 'best', got {aggregation!r}")
    if sequences.dim() != 5:
        raise ValueError(f"expected [N, T, C, H, W], got {tuple(sequences.shape)}")
    if sequences.shape[1] < k + horizon:
        raise ValueError(
            f"sequences have {sequences.shape[1]} frames; need k + horizon = {k + horizon}"
        )

    n_seq = sequences.shape[0]
    psnr_out = torch.zeros(n_seq, horizon, dtype=torch.float64)
    ssim_out = torch.zeros(n_seq, horizon, dtype=torch.float64)

    model.eval()
    with torch.no_grad():
        for i in range(n_seq):
            cond = sequences[i: i + 1, :k]
            truth = sequences[i, k: k + horizon]
            sample_psnr = torch.zeros(n_samples, horizon, dtype=torch.float64)
            sample_ssim = torch.zeros(n_samples, horizon, dtype=torch.float64)
            for s in range(n_samples):
                pred = model.rollout(cond, horizon, generator)[0]
                for t in range(horizon):
                    sample_psnr[s, t] = psnr(truth[t], pred[t])
                    sample_ssim[s, t] = ssim(truth[t], pred[t])
            if aggregation == "mean":
                psnr_out[i] = sample_psnr.mean(dim=0)
                ssim_out[i] = sample_ssim.mean(dim=0)
            else:
                best = int(sample_psnr.mean(dim=1).argmax())
                psnr_out[i] = sample_psnr[best]
                ssim_out[i] = sample_ssim[best]

    return _aggregate(psnr_out, ssim_out, aggregation, n_samples, k, horizon)


def evaluate_baseline(sequences: Tensor, k: int, horizon: int) -> MetricReport:
    """Copy-last-frame reference under the same reporting format."""
    if sequences.dim() != 5:
        raise ValueError(f"expected [N, T, C, H, W], got {tuple(sequences.shape)}")
    if sequences.shape[1] < k + horizon:
        raise ValueError(
            f"sequences have {sequences.shape[1]} frames; need k + horizon = {k + horizon}"
        )
    n_seq = sequences.shape[0]
    psnr_out = torch.zeros(n_seq, horizon, dtype=torch.float64)
    ssim_out = torch.zeros(n_seq, horizon, dtype=torch.float64)
    for i in range(n_seq):
        pred = copy_last_frame_baseline(sequences[i, :k], horizon)
        truth = sequences[i, k: k + horizon]
        for t in range(horizon):
            psnr_out[i, t] = psnr(truth[t], pred[t])
            ssim_out[i, t] = ssim(truth[t], pred[t])
    return _aggregate(psnr_out, ssim_out, "mean", 1, k, horizon)
