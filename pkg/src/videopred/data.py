"""Procedural, deterministic-by-seed synthetic video datasets.

Two generators exercise the two branches of the model: bouncing glyph sprites
(stochastic motion events at wall contact) and a panning textured background
(purely deterministic shift). Sequences are [N, T, C, H, W] float32 in [0, 1].
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch


class DataError(ValueError):
    """Invalid generator parameters or dataset files."""


# 5x7 bitmap font, digits 0-9, one string row per scanline.
_DIGIT_ROWS = {
    0: ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    1: ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    2: ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    3: ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    4: ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    5: ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    6: ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    7: ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    8: ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    9: ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}


def glyph_bitmap(kind: str, size: int, digit: int = 0) -> np.ndarray:
    """A size x size float32 sprite in {0, 1}."""
    if size < 1:
        raise DataError(f"sprite size must be >= 1, got {size}")
    if kind == "square":
        return np.ones((size, size), dtype=np.float32)
    if kind == "cross":
        g = np.zeros((size, size), dtype=np.float32)
        mid = size // 2
        g[mid, :] = 1.0
        g[:, mid] = 1.0
        return g
    if kind == "digits":
        rows = _DIGIT_ROWS[digit % 10]
        base = np.array([[int(c) for c in row] for row in rows], dtype=np.float32)
        scale = max(1, size // base.shape[0])
        up = np.kron(base, np.ones((scale, scale), dtype=np.float32))
        g = np.zeros((size, size), dtype=np.float32)
        oy = max(0, (size - up.shape[0]) // 2)
        ox = max(0, (size - up.shape[1]) // 2)
        g[oy:oy + up.shape[0], ox:ox + up.shape[1]] = up[: size - oy, : size - ox]
        return g
    raise DataError(f"unknown glyph kind {kind!r}")


@dataclass
class SpriteConfig:
    num_sprites: int = 2
    sprite_size: int = 8
    speed_range: tuple[float, float] | float = (1.5, 3.0)
    bounce_noise: float = 0.3  # std-dev (radians) of direction perturbation at wall contact
    glyphs: str = "digits"     # "digits" | "square" | "cross"
    # Optional overrides for controlled scenes; (x, y) top-left and (vx, vy).
    initial_positions: list[tuple[float, float]] | None = None
    initial_velocities: list[tuple[float, float]] | None = None

    def speeds(self) -> tuple[float, float]:
        r = self.speed_range
        if isinstance(r, (int, float)):
            r = (float(r), float(r))
        lo, hi = float(r[0]), float(r[1])
        if lo < 0 or hi < lo:
            raise DataError(f"speed_range must satisfy 0 <= lo <= hi, got {r}")
        return lo, hi


@dataclass
class VideoDataset:
    """Sequences [N, T, C, H, W] in [0, 1] plus the generator metadata that
    produced them."""

    sequences: torch.Tensor
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sequences.dim() != 5:
            raise DataError(
                f"sequences must be [N, T, C, H, W], got {tuple(self.sequences.shape)}"
            )
        if self.sequences.numel():
            lo, hi = float(self.sequences.min()), float(self.sequences.max())
            if lo < 0.0 or hi > 1.0:
                raise DataError(f"pixel values must lie in [0, 1], got [{lo}, {hi}]")

    def __len__(self) -> int:
        return self.sequences.shape[0]

    @property
    def num_frames(self) -> int:
        return self.sequences.shape[1]

    @property
    def image_size(self) -> int:
        return self.sequences.shape[-1]

    def save(self, path: str | Path) -> tuple[Path, Path]:
        """Write the tensor to <stem>.npy and metadata to <stem>.json."""
        base = Path(path)
        data_path = base.with_suffix(".npy")
        meta_path = base.with_suffix(".json")
        data_path.parent.mkdir(parents=True, exist_ok=True)
        np.save(data_path, self.sequences.numpy())
        meta = dict(self.metadata)
        meta["shape"] = list(self.sequences.shape)
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return data_path, meta_path

    @classmethod
    def load(cls, path: str | Path) -> "VideoDataset":
        base = Path(path)
        data_path = base.with_suffix(".npy")
        meta_path = base.with_suffix(".json")
        if not data_path.exists():
            raise DataError(f"dataset file not found: {data_path}")
        arr = np.load(data_path)
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls(torch.from_numpy(arr), meta)


def _check_common(n: int, t: int, hw: int) -> None:
    if n <= 0 or t <= 0 or hw <= 0:
        raise DataError(f"n, t, hw must be positive, got n={n} t={t} hw={hw}")
    if t < 2:
        raise DataError(f"need at least 2 frames per sequence, got t={t}")
    if hw < 16:
        raise DataError(f"image size must be >= 16, got {hw}")


def _reflect(p: float, limit: float) -> tuple[float, bool]:
    """Fold a coordinate back into [0, limit]; True when a wall was hit."""
    bounced = False
    while p < 0 or p > limit:
        bounced = True
        p = -p if p < 0 else 2 * limit - p
    return p, bounced


def _simulate_sprite(rng: np.random.Generator, cfg: SpriteConfig, idx: int,
                     t: int, hw: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-left positions [t, 2] (x, y) for one sprite, bouncing inside the frame."""
    limit = float(hw - cfg.sprite_size)
    lo, hi = cfg.speeds()
    if cfg.initial_positions is not None:
        pos = np.array(cfg.initial_positions[idx], dtype=np.float64)
    else:
        pos = rng.uniform(0.0, limit, size=2)
    if cfg.initial_velocities is not None:
        vel = np.array(cfg.initial_velocities[idx], dtype=np.float64)
    else:
        speed = rng.uniform(lo, hi)
        angle = rng.uniform(0.0, 2.0 * math.pi)
        vel = np.array([speed * math.cos(angle), speed * math.sin(angle)])

    track = np.empty((t, 2), dtype=np.float64)
    for step in range(t):
        track[step] = pos
        nxt = pos + vel
        bounced = False
        for axis in range(2):
            coord, hit = _reflect(float(nxt[axis]), limit)
            if hit:
                vel[axis] = -vel[axis]
                bounced = True
            nxt[axis] = coord
        if bounced and cfg.bounce_noise > 0:
            # The stochastic event: perturb the post-bounce direction,
            # preserving speed.
            theta = math.atan2(vel[1], vel[0]) + rng.normal(0.0, cfg.bounce_noise)
            speed = float(np.hypot(vel[0], vel[1]))
            vel = np.array([speed * math.cos(theta), speed * math.sin(theta)])
        pos = nxt
    return track, vel


def generate_bouncing_sprites(seed: int, n: int, t: int, hw: int,
                              cfg: SpriteConfig | None = None) -> VideoDataset:
    """Glyph sprites with constant velocity, wall reflection and randomized
    post-bounce direction; overlaps blend with a per-pixel max."""
    cfg = cfg or SpriteConfig()
    _check_common(n, t, hw)
    if cfg.sprite_size >= hw:
        raise DataError(f"sprite_size {cfg.sprite_size} must be < image size {hw}")
    if cfg.num_sprites < 1:
        raise DataError("num_sprites must be >= 1")
    for name in ("initial_positions", "initial_velocities"):
        override = getattr(cfg, name)
        if override is not None and len(override) < cfg.num_sprites:
            raise DataError(f"{name} must cover all {cfg.num_sprites} sprites")
    cfg.speeds()

    frames = np.zeros((n, t, 1, hw, hw), dtype=np.float32)
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        glyphs = []
        tracks = []
        for s in range(cfg.num_sprites):
            digit = int(rng.integers(0, 10))
            glyphs.append(glyph_bitmap(cfg.glyphs, cfg.sprite_size, digit))
            track, _ = _simulate_sprite(rng, cfg, s, t, hw)
            tracks.append(track)
        for step in range(t):
            canvas = frames[i, step, 0]
            for glyph, track in zip(glyphs, tracks):
                x0 = int(round(track[step, 0]))
                y0 = int(round(track[step, 1]))
                region = canvas[y0:y0 + cfg.sprite_size, x0:x0 + cfg.sprite_size]
                np.maximum(region, glyph, out=region)

    meta = {
        "generator": "bouncing_sprites",
        "seed": seed,
        "n": n,
        "t": t,
        "hw": hw,
        "sprite": _jsonable(dataclasses.asdict(cfg)),
    }
    return VideoDataset(torch.from_numpy(frames), meta)


def _texture(rng: np.random.Generator, hw: int, components: int,
             frequencies: tuple[int, ...]) -> np.ndarray:
    """Smooth periodic texture: a few integer-frequency sinusoids, so integer
    shifts are exact cyclic rolls. The x-frequency cycles through the given
    set so every listed frequency is present."""
    yy, xx = np.mgrid[0:hw, 0:hw].astype(np.float64)
    tex = np.zeros((hw, hw), dtype=np.float64)
    for i in range(components):
        fx = int(frequencies[i % len(frequencies)])
        fy = int(rng.integers(0, 4))
        amp = rng.uniform(0.5, 1.0)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        tex += amp * np.cos(2.0 * math.pi * (fx * xx + fy * yy) / hw + phase)
    lo_v, hi_v = tex.min(), tex.max()
    tex = 0.05 + 0.9 * (tex - lo_v) / max(hi_v - lo_v, 1e-9)
    return tex.astype(np.float32)


def generate_panning_scene(seed: int, n: int, t: int, hw: int,
                           pan_velocity: int | tuple[int, int] = (1, 0),
                           texture_components: int = 2,
                           texture_frequencies: tuple[int, ...] = (2, 3)) -> VideoDataset:
    """A static per-sequence texture translated by pan_velocity (vx, vy) each
    frame, with wrap-around. Only exact integer shifts are supported."""
    _check_common(n, t, hw)
    if texture_components < 1 or not texture_frequencies:
        raise DataError("need at least one texture component and one frequency")
    if any(f <= 0 for f in texture_frequencies):
        raise DataError(f"texture frequencies must be positive, got {texture_frequencies}")
    if isinstance(pan_velocity, (int, np.integer)):
        pan_velocity = (int(pan_velocity), 0)
    vx, vy = pan_velocity
    if vx != int(vx) or vy != int(vy):
        raise DataError(f"pan_velocity must be integer-valued for exact shifts, got {pan_velocity}")
    vx, vy = int(vx), int(vy)

    frames = np.zeros((n, t, 1, hw, hw), dtype=np.float32)
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        tex = _texture(rng, hw, texture_components, tuple(texture_frequencies))
        for step in range(t):
            frames[i, step, 0] = np.roll(tex, (step * vy, step * vx), axis=(0, 1))

    meta = {
        "generator": "panning_scene",
        "seed": seed,
        "n": n,
        "t": t,
        "hw": hw,
        "pan_velocity": [vx, vy],
        "texture_components": texture_components,
        "texture_frequencies": list(texture_frequencies),
    }
    return VideoDataset(torch.from_numpy(frames), meta)


def split(dataset: VideoDataset, ratios: tuple[float, float, float]
          ) -> tuple[VideoDataset, VideoDataset, VideoDataset]:
    """Disjoint, order-preserving train/val/test partition."""
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise DataError(f"need three non-negative ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must sum to 1, got sum={sum(ratios)}")
    n = len(dataset)
    counts = [int(math.floor(r * n)) for r in ratios]
    remainders = [r * n - c for r, c in zip(ratios, counts)]
    for _ in range(n - sum(counts)):
        idx = max(range(3), key=lambda j: (remainders[j], -j))
        counts[idx] += 1
        remainders[idx] = -1.0
    for r, c in zip(ratios, counts):
        if r > 0 and c == 0:
            raise DataError(f"ratio {r} rounds to an empty split for n={n}")

    pieces = []
    start = 0
    for name, c in zip(("train", "val", "test"), counts):
        meta = dict(dataset.metadata)
        meta["split"] = {"part": name, "start": start, "count": c}
        pieces.append(VideoDataset(dataset.sequences[start:start + c], meta))
        start += c
    return tuple(pieces)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj
