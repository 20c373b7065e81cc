"""Versioned, checksummed checkpoint container.

Layout: an 8-byte magic, a little-endian uint64 header length, a canonical
JSON header (version, config snapshot, step, non-tensor optimizer fields and
a self-describing tensor manifest with offsets), then the raw tensor payload.
Canonical JSON plus sorted tensor names make save -> load -> save
byte-identical, which torch.save's zip container does not guarantee."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig

MAGIC = b"VPCKPT01"
FORMAT_VERSION = 1

_TORCH_TO_NAME = {
    torch.float32: "float32",
    torch.float64: "float64",
    torch.float16: "float16",
    torch.int64: "int64",
    torch.int32: "int32",
    torch.int16: "int16",
    torch.uint8: "uint8",
    torch.int8: "int8",
    torch.bool: "bool",
}
_NAME_TO_TORCH = {v: k for k, v in _TORCH_TO_NAME.items()}


class CheckpointError(RuntimeError):
    """Unreadable, corrupt or incompatible checkpoint."""


class ChecksumError(CheckpointError):
    """Payload bytes do not match the recorded digest."""


@dataclass
class Checkpoint:
    config: RunConfig
    step: int
    model_state: dict[str, torch.Tensor]
    optimizer_state: dict | None
    rng_state: torch.Tensor | None


def _flatten_optimizer(state: dict) -> tuple[dict[str, torch.Tensor], dict]:
    """Split an optimizer state_dict into tensors (by path) and JSON leftovers."""
    tensors: dict[str, torch.Tensor] = {}
    plain: dict = {"param_groups": state["param_groups"], "state_scalars": {}}
    for pid, entry in state.get("state", {}).items():
        for key, value in entry.items():
            if isinstance(value, torch.Tensor):
                tensors[f"{pid}/{key}"] = value
            else:
                plain["state_scalars"].setdefault(str(pid), {})[key] = value
    return tensors, plain


def _unflatten_optimizer(tensors: dict[str, torch.Tensor], plain: dict) -> dict:
    state: dict = {}
    for path, tensor in tensors.items():
        pid, key = path.split("/", 1)
        state.setdefault(int(pid), {})[key] = tensor
    for pid, scalars in plain.get("state_scalars", {}).items():
        state.setdefault(int(pid), {}).update(scalars)
    return {"state": state, "param_groups": plain["param_groups"]}


def _tensor_bytes(t: torch.Tensor) -> bytes:
    arr = t.detach().cpu().contiguous()
    if t.dtype is torch.bool:
        return arr.numpy().astype(np.uint8).tobytes()
    return arr.numpy().tobytes()


def save_checkpoint(
    path: str | Path,
    *,
    model: torch.nn.Module,
    config: RunConfig,
    step: int,
    optimizer: torch.optim.Optimizer | None = None,
    rng_state: torch.Tensor | None = None,
) -> Path:
    tensors: dict[str, torch.Tensor] = {
        f"model/{name}": t for name, t in model.state_dict().items()
    }
    opt_plain = None
    if optimizer is not None:
        opt_tensors, opt_plain = _flatten_optimizer(optimizer.state_dict())
        tensors.update({f"opt/{name}": t for name, t in opt_tensors.items()})
    if rng_state is not None:
        tensors["rng/trainer"] = rng_state

    manifest = []
    payload = bytearray()
    for name in sorted(tensors):
        t = tensors[name]
        if t.dtype not in _TORCH_TO_NAME:
            raise CheckpointError(f"unsupported tensor dtype {t.dtype} for {name!r}")
        raw = _tensor_bytes(t)
        manifest.append({
            "name": name,
            "dtype": _TORCH_TO_NAME[t.dtype],
            "shape": list(t.shape),
            "offset": len(payload),
            "nbytes": len(raw),
        })
        payload.extend(raw)

    header = {
        "version": FORMAT_VERSION,
        "config": config.to_dict(),
        "step": step,
        "optimizer": opt_plain,
        "tensors": manifest,
        "payload_sha256": hashlib.sha256(bytes(payload)).hexdigest(),
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "little"))
        fh.write(header_bytes)
        fh.write(bytes(payload))
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    header_len = int.from_bytes(raw[len(MAGIC): len(MAGIC) + 8], "little")
    header_start = len(MAGIC) + 8
    try:
        header = json.loads(raw[header_start: header_start + header_len])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {header.get('version')} != {FORMAT_VERSION}"
        )
    payload = raw[header_start + header_len:]
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header["payload_sha256"]:
        raise ChecksumError(f"{path}: payload checksum mismatch")

    tensors: dict[str, torch.Tensor] = {}
    for entry in header["tensors"]:
        np_dtype = "uint8" if entry["dtype"] == "bool" else entry["dtype"]
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(payload, dtype=np.dtype(np_dtype), count=count,
                            offset=entry["offset"]).reshape(entry["shape"])
        t = torch.from_numpy(arr.copy())
        if entry["dtype"] == "bool":
            t = t.bool()
        tensors[entry["name"]] = t

    model_state = {
        name[len("model/"):]: t for name, t in tensors.items() if name.startswith("model/")
    }
    opt_state = None
    if header.get("optimizer") is not None:
        opt_tensors = {
            name[len("opt/"):]: t for name, t in tensors.items() if name.startswith("opt/")
        }
        opt_state = _unflatten_optimizer(opt_tensors, header["optimizer"])
    rng_state = tensors.get("rng/trainer")

    return Checkpoint(
        config=RunConfig.from_dict(header["config"]),
        step=int(header["step"]),
        model_state=model_state,
        optimizer_state=opt_state,
        rng_state=rng_state,
    )


# Architecture-determining fields; a checkpoint only restores into a model
# built with identical values.
_ARCH_FIELDS = (
    "mode", "d_y", "d_z", "d_g", "d_w", "d_zw", "d_h", "rnn_width",
    "hidden_width", "base_channels", "vit_depth", "vit_heads", "tt_width",
    "tt_depth", "tt_heads", "pool", "image_size", "channels", "patch_size",
)


def check_compatible(saved: RunConfig, target: RunConfig) -> None:
    for name in _ARCH_FIELDS:
        a, b = getattr(saved, name), getattr(target, name)
        if a != b:
            raise CheckpointError(
                f"checkpoint {name}={a!r} incompatible with requested {name}={b!r}"
            )


def restore_model(checkpoint: Checkpoint, model: torch.nn.Module,
                  target_config: RunConfig) -> None:
    check_compatible(checkpoint.config, target_config)
    model.load_state_dict(checkpoint.model_state)
