"""Rendering helpers: frame strips, animated GIFs, flow color wheels and
metric curve plots."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image


def frame_to_array(frame: torch.Tensor) -> np.ndarray:
    """[C, H, W] in [0, 1] -> uint8 [H, W] (grayscale) or [H, W, 3]."""
    arr = frame.detach().clamp(0, 1).cpu().numpy()
    if arr.ndim == 2:
        arr = arr[None]
    arr = (arr * 255.0).round().astype(np.uint8)
    if arr.shape[0] == 1:
        return arr[0]
    return arr[:3].transpose(1, 2, 0)


def frames_to_strip(frames: torch.Tensor, pad: int = 2, pad_value: int = 128) -> np.ndarray:
    """[T, C, H, W] -> one horizontal uint8 strip with separators."""
    tiles = [frame_to_array(f) for f in frames]
    h = tiles[0].shape[0]
    sep_shape = (h, pad) if tiles[0].ndim == 2 else (h, pad, tiles[0].shape[2])
    sep = np.full(sep_shape, pad_value, dtype=np.uint8)
    row = []
    for i, tile in enumerate(tiles):
        if i:
            row.append(sep)
        row.append(tile)
    return np.concatenate(row, axis=1)


def save_strip_image(rows: list[np.ndarray], path: str | Path, pad: int = 2,
                     pad_value: int = 255) -> Path:
    """Stack per-sequence strips vertically and write a PNG."""
    width = max(r.shape[1] for r in rows)
    padded = []
    for i, row in enumerate(rows):
        if row.shape[1] < width:
            fill_shape = (row.shape[0], width - row.shape[1]) + row.shape[2:]
            row = np.concatenate([row, np.zeros(fill_shape, dtype=np.uint8)], axis=1)
        if i:
            sep = np.full((pad,) + row.shape[1:], pad_value, dtype=np.uint8)
            padded.append(sep)
        padded.append(row)
    img = np.concatenate(padded, axis=0)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img).save(path)
    return path


def save_gif(frames: torch.Tensor, path: str | Path, fps: int = 5) -> Path:
    """[T, C, H, W] -> animated GIF."""
    images = [Image.fromarray(frame_to_array(f)) for f in frames]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    images[0].save(
        path, save_all=True, append_images=images[1:],
        duration=max(1, round(1000 / fps)), loop=0,
    )
    return path


def flow_to_rgb(flow: torch.Tensor) -> np.ndarray:
    """HSV color-wheel encoding of a [2, H, W] displacement field: hue is the
    direction, value the normalized magnitude."""
    f = flow.detach().cpu().numpy()
    dx, dy = f[0], f[1]
    mag = np.hypot(dx, dy)
    angle = np.arctan2(dy, dx)  # [-pi, pi]
    hue = (angle + np.pi) / (2 * np.pi)
    value = mag / max(float(mag.max()), 1e-8)
    sat = np.ones_like(hue)

    # manual HSV -> RGB (all arrays in [0, 1])
    h6 = hue * 6.0
    i = np.floor(h6).astype(int) % 6
    fpart = h6 - np.floor(h6)
    p = value * (1 - sat)
    q = value * (1 - sat * fpart)
    t = value * (1 - sat * (1 - fpart))
    lut = [
        (value, t, p), (q, value, p), (p, value, t),
        (p, q, value), (t, p, value), (value, p, q),
    ]
    rgb = np.zeros(hue.shape + (3,), dtype=np.float64)
    for idx, (r, g, b) in enumerate(lut):
        mask = i == idx
        rgb[mask, 0] = r[mask]
        rgb[mask, 1] = g[mask]
        rgb[mask, 2] = b[mask]
    return (rgb * 255.0).round().astype(np.uint8)


def save_flow_image(flow: torch.Tensor, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(flow_to_rgb(flow)).save(path)
    return path


def plot_metric_curves(report, path: str | Path) -> Path:
    """Per-timestep PSNR and SSIM curves as one PNG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = range(1, len(report.psnr_per_timestep) + 1)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax1.plot(steps, report.psnr_per_timestep, marker="o", ms=3)
    ax1.set_xlabel("prediction step")
    ax1.set_ylabel("PSNR (dB)")
    ax2.plot(steps, report.ssim_per_timestep, marker="o", ms=3, color="tab:orange")
    ax2.set_xlabel("prediction step")
    ax2.set_ylabel("SSIM")
    title = f"{report.aggregation}-of-{report.n_samples}, {report.n_sequences} sequences"
    fig.suptitle(title)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_loss_history(records: list[dict], path: str | Path) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = [r["step"] for r in records]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(steps, [r["total"] for r in records], label="total")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
