"""Stochastic video prediction with decomposed motion/appearance latent
state spaces: deterministic appearance transitions plus stochastic motion
transitions guided by a per-sequence global trend, trained variationally."""

from .config import RunConfig
from .data import SpriteConfig, VideoDataset, generate_bouncing_sprites, \
    generate_panning_scene, split
from .evaluation import evaluate, evaluate_baseline, psnr, ssim
from .model import VideoPredictionModel
from .pipeline import Trainer, train, training_step

__all__ = [
    "RunConfig",
    "SpriteConfig",
    "VideoDataset",
    "generate_bouncing_sprites",
    "generate_panning_scene",
    "split",
    "evaluate",
    "evaluate_baseline",
    "psnr",
    "ssim",
    "VideoPredictionModel",
    "Trainer",
    "train",
    "training_step",
]

__version__ = "0.1.0"
