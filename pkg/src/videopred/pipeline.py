"""Training orchestration: single optimizer steps, the training loop with
step metrics, periodic validation rollouts, and checkpoint/resume."""
from __future__ import annotations

import json
from pathlib import Path

import torch
from torch import Tensor

from .checkpoint import Checkpoint, check_compatible, load_checkpoint, save_checkpoint
from .config import RunConfig
from .data import VideoDataset
from .evaluation import psnr
from .model import VideoPredictionModel
from .objective import LossBreakdown, assemble_loss


def kl_warmup_scale(step: int, warmup_steps: int) -> float:
    if warmup_steps <= 0:
        return 1.0
    return min(1.0, (step + 1) / warmup_steps)


def training_step(
    model: VideoPredictionModel,
    optimizer: torch.optim.Optimizer,
    batch: Tensor,
    cfg: RunConfig,
    generator: torch.Generator | None = None,
    kl_scale: float = 1.0,
) -> LossBreakdown:
    """One posterior-driven forward pass, loss assembly and optimizer update."""
    model.train()
    bundle, x_hat, x_warped = model.training_forward(batch, generator)
    breakdown = assemble_loss(bundle, batch, x_hat, x_warped, cfg, kl_scale)
    optimizer.zero_grad()
    breakdown.total.backward()
    torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
    optimizer.step()
    return breakdown.detached()


def _as_sequences(dataset) -> Tensor:
    if isinstance(dataset, VideoDataset):
        return dataset.sequences
    return dataset


class Trainer:
    """Owns the model, optimizer and RNG stream. Single writer: one trainer
    per parameter set."""

    def __init__(self, cfg: RunConfig, train_data, val_data=None,
                 out_dir: str | Path | None = None):
        cfg.validate()
        self.cfg = cfg
        self.train_sequences = _as_sequences(train_data)
        self.val_sequences = _as_sequences(val_data) if val_data is not None else None
        if self.train_sequences.shape[1] < cfg.train_frames:
            raise ValueError(
                f"dataset has {self.train_sequences.shape[1]} frames per sequence; "
                f"need k + train_horizon = {cfg.train_frames}"
            )

        torch.manual_seed(cfg.seed)  # parameter initialization
        self.model = VideoPredictionModel(cfg)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=cfg.lr)
        self.generator = torch.Generator().manual_seed(cfg.seed + 1)
        self.step = 0

        self.out_dir = Path(out_dir) if out_dir is not None else Path(cfg.out_dir)
        self.metrics_path = self.out_dir / "metrics.jsonl"

    @classmethod
    def resume(cls, checkpoint_path: str | Path, train_data, val_data=None,
               out_dir: str | Path | None = None) -> "Trainer":
        ckpt = load_checkpoint(checkpoint_path)
        trainer = cls(ckpt.config, train_data, val_data, out_dir)
        trainer.restore(ckpt)
        return trainer

    def restore(self, ckpt: Checkpoint) -> None:
        check_compatible(ckpt.config, self.cfg)
        self.model.load_state_dict(ckpt.model_state)
        if ckpt.optimizer_state is not None:
            self.optimizer.load_state_dict(ckpt.optimizer_state)
        if ckpt.rng_state is not None:
            self.generator.set_state(ckpt.rng_state)
        self.step = ckpt.step

    def _next_batch(self) -> Tensor:
        n = self.train_sequences.shape[0]
        idx = torch.randint(n, (min(self.cfg.batch_size, n),), generator=self.generator)
        return self.train_sequences[idx, : self.cfg.train_frames]

    def _validation_psnr(self, max_sequences: int = 8) -> float:
        seqs = self.val_sequences
        horizon = min(self.cfg.train_horizon, seqs.shape[1] - self.cfg.k)
        scores = []
        self.model.eval()
        with torch.no_grad():
            for i in range(min(max_sequences, seqs.shape[0])):
                cond = seqs[i: i + 1, : self.cfg.k]
                truth = seqs[i, self.cfg.k: self.cfg.k + horizon]
                pred = self.model.rollout(cond, horizon, self.generator)[0]
                scores.append(
                    sum(psnr(truth[t], pred[t]) for t in range(horizon)) / horizon
                )
        return sum(scores) / len(scores)

    def save(self, path: str | Path | None = None) -> Path:
        path = Path(path) if path is not None else self.out_dir / f"step{self.step}.ckpt"
        return save_checkpoint(
            path, model=self.model, config=self.cfg, step=self.step,
            optimizer=self.optimizer, rng_state=self.generator.get_state(),
        )

    def run(self, steps: int | None = None) -> Path:
        """Train for `steps` more steps (config default), appending one metrics
        record per step; returns the final checkpoint path."""
        steps = self.cfg.steps if steps is None else steps
        self.out_dir.mkdir(parents=True, exist_ok=True)
        target = self.step + steps
        with open(self.metrics_path, "a") as metrics:
            while self.step < target:
                batch = self._next_batch()
                scale = kl_warmup_scale(self.step, self.cfg.kl_warmup_steps)
                breakdown = training_step(
                    self.model, self.optimizer, batch, self.cfg, self.generator, scale
                )
                self.step += 1
                record = {"step": self.step, **breakdown.to_dict()}
                if self.val_sequences is not None and self.step % self.cfg.val_every == 0:
                    record["val_psnr"] = self._validation_psnr()
                metrics.write(json.dumps(record) + "\n")
                if self.cfg.checkpoint_every and self.step % self.cfg.checkpoint_every == 0 \
                        and self.step < target:
                    self.save()
        return self.save(self.out_dir / "final.ckpt")


def train(cfg: RunConfig, train_data, val_data=None,
          out_dir: str | Path | None = None) -> tuple[Path, Path]:
    """Convenience wrapper: build a trainer, run to cfg.steps, return the
    final checkpoint path and the metrics file path."""
    trainer = Trainer(cfg, train_data, val_data, out_dir)
    ckpt_path = trainer.run()
    return ckpt_path, trainer.metrics_path


def load_metrics(path: str | Path) -> list[dict]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
