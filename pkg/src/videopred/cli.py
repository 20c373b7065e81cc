"""Command-line entry point: dataset generation, training, evaluation and
sample rendering.

Exit codes: 0 success, 2 configuration/argument error, 1 runtime failure.
The output root defaults to $VIDEOPRED_OUT (falling back to the working
directory) when --out is not given."""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import torch

from . import data as datagen
from .checkpoint import load_checkpoint, restore_model
from .config import ConfigError, RunConfig
from .data import DataError, SpriteConfig, VideoDataset
from .evaluation import evaluate, evaluate_baseline
from .model import VideoPredictionModel
from .pipeline import Trainer, load_metrics
from . import viz

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _out_root(args) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return Path(os.environ.get("VIDEOPRED_OUT", "."))


def _coerce(value: str, typ):
    if typ is bool:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean from {value!r}")
    return typ(value)


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        typ = {"int": int, "float": float, "str": str, "bool": bool}.get(
            fields[key].type.replace(" ", "").split("|")[0], str
        )
        overrides[key] = _coerce(value, typ)
    for name in ("mode", "steps", "seed", "k"):
        flag = getattr(args, name, None)
        if flag is not None:
            overrides[name] = flag
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    cfg.validate()
    return cfg


# -- datagen ---------------------------------------------------------------

def cmd_datagen(args) -> int:
    root = _out_root(args)
    if args.kind == "sprites":
        cfg = SpriteConfig(
            num_sprites=args.sprites,
            sprite_size=args.sprite_size,
            speed_range=(args.speed_min, args.speed_max),
            bounce_noise=args.bounce_noise,
            glyphs=args.glyphs,
        )
        dataset = datagen.generate_bouncing_sprites(args.seed, args.n, args.t, args.size, cfg)
        default_name = f"sprites_s{args.seed}_n{args.n}_t{args.t}_{args.size}px"
    else:
        dataset = datagen.generate_panning_scene(
            args.seed, args.n, args.t, args.size, (args.pan_x, args.pan_y)
        )
        default_name = f"panning_s{args.seed}_n{args.n}_t{args.t}_{args.size}px"
    base = root / (args.name or default_name)
    data_path, meta_path = dataset.save(base)
    print(f"wrote {data_path} and {meta_path}")
    return EXIT_OK


# -- train -----------------------------------------------------------------

def cmd_train(args) -> int:
    if args.resume:
        cfg = load_checkpoint(args.resume).config  # architecture is pinned
    else:
        cfg = _load_config(args)
    dataset = VideoDataset.load(args.dataset)
    if dataset.image_size != cfg.image_size:
        raise ConfigError(
            f"dataset image size {dataset.image_size} != config image_size {cfg.image_size}"
        )
    if dataset.num_frames < cfg.train_frames:
        raise ConfigError(
            f"dataset has {dataset.num_frames} frames per sequence; "
            f"config needs k + train_horizon = {cfg.train_frames}"
        )
    n = len(dataset)
    val_count = int(round(args.val_fraction * n)) if args.val_fraction > 0 else 0
    if val_count:
        train_part, val_part, _ = datagen.split(
            dataset, ((n - val_count) / n, val_count / n, 0.0)
        )
    else:
        train_part, val_part = dataset, None
    out_dir = _out_root(args) / args.run_name if args.run_name else _out_root(args)

    if args.resume:
        trainer = Trainer.resume(args.resume, train_part, val_part, out_dir)
    else:
        trainer = Trainer(cfg, train_part, val_part, out_dir)
    final = trainer.run(args.steps)
    print(f"finished at step {trainer.step}: checkpoint {final}")
    print(f"metrics: {trainer.metrics_path}")
    return EXIT_OK


# -- eval ------------------------------------------------------------------

def _load_model(checkpoint_path: str) -> tuple[VideoPredictionModel, RunConfig]:
    ckpt = load_checkpoint(checkpoint_path)
    model = VideoPredictionModel(ckpt.config)
    restore_model(ckpt, model, ckpt.config)
    model.eval()
    return model, ckpt.config


def cmd_eval(args) -> int:
    model, cfg = _load_model(args.checkpoint)
    dataset = VideoDataset.load(args.dataset)
    if dataset.image_size != cfg.image_size:
        raise ConfigError(
            f"dataset image size {dataset.image_size} != checkpoint image_size {cfg.image_size}"
        )
    k = args.k or cfg.k
    horizon = args.horizon or cfg.eval_horizon
    generator = torch.Generator().manual_seed(args.seed)
    report = evaluate(model, dataset.sequences, k, horizon,
                      n_samples=args.samples, aggregation=args.agg, generator=generator)
    out = _out_root(args)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "results.json")
    report.save_curves(out / "curves.tsv")
    viz.plot_metric_curves(report, out / "curves.png")
    if args.baseline:
        evaluate_baseline(dataset.sequences, k, horizon).save(out / "baseline.json")
    print(f"PSNR {report.psnr_mean:.3f} +/- {report.psnr_ci95:.3f} dB, "
          f"SSIM {report.ssim_mean:.4f} +/- {report.ssim_ci95:.4f} "
          f"({report.aggregation}-of-{report.n_samples}, n={report.n_sequences})")
    print(f"results in {out}")
    return EXIT_OK


# -- sample ----------------------------------------------------------------

def cmd_sample(args) -> int:
    model, cfg = _load_model(args.checkpoint)
    dataset = VideoDataset.load(args.dataset)
    if dataset.image_size != cfg.image_size:
        raise ConfigError(
            f"dataset image size {dataset.image_size} != checkpoint image_size {cfg.image_size}"
        )
    k = args.k or cfg.k
    horizon = args.horizon or cfg.eval_horizon
    seq = dataset.sequences[args.seq]
    if seq.shape[0] < k + horizon:
        raise ConfigError(
            f"sequence has {seq.shape[0]} frames; need k + horizon = {k + horizon} "
            "for the ground-truth row"
        )
    generator = torch.Generator().manual_seed(args.seed)
    out = _out_root(args)
    out.mkdir(parents=True, exist_ok=True)

    cond = seq[:k].unsqueeze(0)
    truth = seq[: k + horizon]
    rows = [viz.frames_to_strip(truth)]
    captions = ["row 1: ground truth (conditioning + future)"]
    with torch.no_grad():
        for i in range(args.n):
            pred, y_states, w_states = model.rollout(
                cond, horizon, generator, with_states=True
            )
            full = torch.cat([cond[0], pred[0]], dim=0)
            rows.append(viz.frames_to_strip(full))
            captions.append(f"row {len(rows)}: stochastic rollout {i + 1}")
            viz.save_gif(full, out / f"rollout_{i}.gif", fps=args.fps)
            if args.decode_only:
                only = args.decode_only
                partial = model.decode_states(w_states[0], y_states[0], only=only)
                rows.append(viz.frames_to_strip(partial))
                captions.append(
                    f"row {len(rows)}: rollout {i + 1} decoded from {only} only "
                    f"(the other latent zeroed at the decoder input)"
                )
        if args.flow:
            # Inspection only: flows decoded from the posterior recurrence over
            # observed frames; generation itself never uses this path.
            h_m = model.motion_encoder(truth.unsqueeze(0))
            g, _ = model.motion.posterior_recurrence(h_m)
            flows = model.flow_decoder(g[:, 1:])[0]
            for t in range(flows.shape[0]):
                viz.save_flow_image(flows[t], out / f"flow_{t + 2:03d}.png")

    viz.save_strip_image(rows, out / "samples.png")
    (out / "samples_caption.txt").write_text("\n".join(captions) + "\n")
    print(f"wrote {out / 'samples.png'} ({args.n} rollouts)")
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="videopred",
        description="Train and evaluate the decomposed stochastic video predictor.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="generate a synthetic dataset")
    p.add_argument("--kind", choices=("sprites", "panning"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--t", type=int, default=25)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--name", type=str, default=None)
    p.add_argument("--sprites", type=int, default=2)
    p.add_argument("--sprite-size", type=int, default=8)
    p.add_argument("--speed-min", type=float, default=1.5)
    p.add_argument("--speed-max", type=float, default=3.0)
    p.add_argument("--bounce-noise", type=float, default=0.3)
    p.add_argument("--glyphs", choices=("digits", "square", "cross"), default="digits")
    p.add_argument("--pan-x", type=int, default=1)
    p.add_argument("--pan-y", type=int, default=0)
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", type=str, default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config field")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--mode", choices=("full", "no_w", "no_z1"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--resume", type=str, default=None)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--run-name", type=str, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--samples", type=int, default=5)
    p.add_argument("--agg", choices=("mean", "best"), default="mean")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--baseline", action="store_true",
                   help="also report the copy-last-frame reference")
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="render rollouts as strips and GIFs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--seq", type=int, default=0)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fps", type=int, default=5)
    p.add_argument("--decode-only", choices=("w", "y"), default=None)
    p.add_argument("--flow", action="store_true",
                   help="export flow visualizations (posterior inspection)")
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=cmd_sample)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
