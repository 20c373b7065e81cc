"""Run configuration shared by the CLI, the trainer and evaluation."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

MODES = ("full", "no_w", "no_z1")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass
class RunConfig:
    # latent dimensions
    d_y: int = 32            # motion state
    d_z: int = 16            # local motion dynamic
    d_g: int = 16            # global motion trend
    d_w: int = 64            # appearance state / patch-transformer token width
    d_zw: int = 16           # appearance transition
    d_h: int = 128           # per-frame motion feature

    # network widths
    rnn_width: int = 128     # LSTM hidden size (motion + appearance recurrences)
    hidden_width: int = 128  # MLP hidden size (heads and residual transitions)
    base_channels: int = 32  # conv encoder/decoder channel base
    vit_depth: int = 2
    vit_heads: int = 4
    tt_width: int = 64       # temporal transformer width (global trend)
    tt_depth: int = 2
    tt_heads: int = 4
    pool: str = "token"      # temporal transformer pooling: "token" | "mean"

    # image geometry
    image_size: int = 32
    channels: int = 1
    patch_size: int = 8

    # protocol
    k: int = 5               # conditioning frames
    train_horizon: int = 10
    eval_horizon: int = 20

    # loss weights / observation model
    beta_y1: float = 1.0
    beta_z: float = 1.0
    beta_z1: float = 1.0
    lambda_flow: float = 1.0
    lambda_app: float = 1.0
    sigma_obs: float = 1.0
    kl_warmup_steps: int = 0  # 0 = plain ELBO from step one

    # optimization
    lr: float = 3e-4
    batch_size: int = 16
    grad_clip: float = 100.0
    steps: int = 2000
    val_every: int = 500
    checkpoint_every: int = 1000

    # behaviour switches
    mode: str = "full"                       # "full" | "no_w" | "no_z1"
    posterior_in_conditioning: bool = True   # rollout samples q(z_t) while frames are observed
    decode_from_recurrent_chain: bool = True # training decode uses the residual w-chain

    seed: int = 0
    out_dir: str = "runs"

    @property
    def train_frames(self) -> int:
        return self.k + self.train_horizon

    def validate(self) -> None:
        positive = (
            "d_y", "d_z", "d_g", "d_w", "d_zw", "d_h", "rnn_width", "hidden_width",
            "base_channels", "vit_depth", "vit_heads", "tt_width", "tt_depth",
            "tt_heads", "image_size", "channels", "patch_size", "k",
            "train_horizon", "eval_horizon", "batch_size", "steps",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.image_size % self.patch_size != 0:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}"
            )
        if self.image_size & (self.image_size - 1):
            raise ConfigError(f"image_size must be a power of two, got {self.image_size}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.pool not in ("token", "mean"):
            raise ConfigError(f"pool must be 'token' or 'mean', got {self.pool!r}")
        if self.d_w % self.vit_heads != 0:
            raise ConfigError("d_w must be divisible by vit_heads")
        if self.tt_width % self.tt_heads != 0:
            raise ConfigError("tt_width must be divisible by tt_heads")
        if self.sigma_obs <= 0:
            raise ConfigError(f"sigma_obs must be positive, got {self.sigma_obs}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.k < 2:
            raise ConfigError("k must be >= 2 (the initial motion state needs two frames)")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        with open(path) as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(payload)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def with_overrides(self, **kwargs) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(self)}
        unknown = set(kwargs) - known
        if unknown:
            raise ConfigError(f"unknown config overrides: {sorted(unknown)}")
        return dataclasses.replace(self, **kwargs)
