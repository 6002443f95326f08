"""Versioned binary checkpoint container.

Layout:

    bytes 0-3    magic ``RFOD``
    bytes 4-7    format version, u32 little-endian
    bytes 8-15   metadata length, u64 little-endian
    ...          metadata, UTF-8 JSON: {"config": ..., "tensors": [...]}
    ...          payload: concatenated raw little-endian float32 tensor data

Each manifest entry records the tensor name, shape, and byte offset into the
payload. The container holds all three networks' parameters and running
statistics, the error map when present, and the train config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .model import (
    NetworkSpec,
    decoder_layer_table,
    discriminator_layer_table,
    encoder_layer_table,
    IMAGE_CHANNELS,
    LATENT_DIM,
)

MAGIC = b"RFOD"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    """Corrupt or unreadable checkpoint container."""


class CheckpointVersionError(CheckpointError):
    """Container format version not supported by this code."""


@dataclass
class Checkpoint:
    encoder: NetworkSpec
    decoder: NetworkSpec
    discriminator: NetworkSpec
    error_map: torch.Tensor | None = None
    config: "TrainConfig | None" = None  # noqa: F821 - deferred to avoid import cycle


def _named_tensors(ckpt: Checkpoint) -> list[tuple[str, torch.Tensor]]:
    out = []
    for net in (ckpt.encoder, ckpt.decoder, ckpt.discriminator):
        for i, layer in enumerate(net.params):
            for key, t in layer.items():
                out.append((f"{net.name}.layer{i}.{key}", t))
    if ckpt.error_map is not None:
        out.append(("error_map", ckpt.error_map))
    return out


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    """Write the container; bit-exact for float32 tensors."""
    from .training import config_to_dict  # local import: training imports this module

    manifest = []
    chunks = []
    offset = 0
    for name, t in _named_tensors(ckpt):
        arr = t.detach().cpu().contiguous().to(torch.float32).numpy().astype("<f4")
        raw = arr.tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    meta = {
        "config": config_to_dict(ckpt.config) if ckpt.config is not None else None,
        "tensors": manifest,
    }
    meta_bytes = json.dumps(meta).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.uint32(FORMAT_VERSION).tobytes())
        f.write(np.uint64(len(meta_bytes)).tobytes())
        f.write(meta_bytes)
        for raw in chunks:
            f.write(raw)


def read_manifest(path: str | Path) -> tuple[dict, bytes]:
    """Parse header and metadata; returns (metadata, payload bytes)."""
    blob = Path(path).read_bytes()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint container (bad magic)")
    version = int(np.frombuffer(blob[4:8], dtype="<u4")[0])
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: container version {version}, this build reads version {FORMAT_VERSION}"
        )
    meta_len = int(np.frombuffer(blob[8:16], dtype="<u8")[0])
    if 16 + meta_len > len(blob):
        raise CheckpointError(f"{path}: corrupt container (truncated metadata)")
    try:
        meta = json.loads(blob[16 : 16 + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt container (unreadable metadata)") from exc
    if not isinstance(meta, dict) or "tensors" not in meta:
        raise CheckpointError(f"{path}: corrupt container (missing tensor manifest)")
    return meta, blob[16 + meta_len :]


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Rebuild networks, error map, and config from a container file."""
    from .training import config_from_dict, TrainConfig  # local import, see save

    meta, payload = read_manifest(path)
    tensors: dict[str, torch.Tensor] = {}
    for entry in meta["tensors"]:
        name, shape, offset = entry["name"], tuple(entry["shape"]), int(entry["offset"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 4
        if offset < 0 or offset + nbytes > len(payload):
            raise CheckpointError(f"{path}: corrupt container (truncated payload at {name!r})")
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset).reshape(shape)
        tensors[name] = torch.from_numpy(arr.copy())

    config = config_from_dict(meta["config"]) if meta.get("config") else None
    dropout = config.dropout_rate if config is not None else 0.3
    final_bn = config.final_decoder_batch_norm if config is not None else True
    encoder = _assemble("encoder", IMAGE_CHANNELS, encoder_layer_table(), tensors, path)
    decoder = _assemble("decoder", LATENT_DIM, decoder_layer_table(final_bn), tensors, path)
    discriminator = _assemble(
        "discriminator", IMAGE_CHANNELS, discriminator_layer_table(dropout), tensors, path
    )
    return Checkpoint(
        encoder=encoder,
        decoder=decoder,
        discriminator=discriminator,
        error_map=tensors.get("error_map"),
        config=config,
    )


def _assemble(name, in_channels, layers, tensors, path) -> NetworkSpec:
    params = []
    for i, spec in enumerate(layers):
        keys = ["weight", "bias"]
        if spec.batch_norm:
            keys += ["gamma", "beta", "running_mean", "running_var"]
        layer = {}
        for key in keys:
            full = f"{name}.layer{i}.{key}"
            if full not in tensors:
                raise CheckpointError(f"{path}: corrupt container (missing tensor {full!r})")
            t = tensors[full]
            if key in ("weight", "bias", "gamma", "beta"):
                t.requires_grad_(True)
            layer[key] = t
        params.append(layer)
    return NetworkSpec(name=name, in_channels=in_channels, layers=layers, params=params)
