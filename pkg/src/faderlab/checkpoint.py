"""Single-file checkpoint container for trained models.

Layout: magic ``FLCK``, a little-endian uint32 byte length, a UTF-8
JSON manifest, then raw little-endian float32 tensor data row-major in
manifest order. Offsets in the manifest are relative to the start of
the tensor section, so the file is byte-stable across platforms.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import torch

from .attributes import AttributeStats
from .baselines import ArConfig, CondLatentVae, CondVaeConfig, QuantileMap
from .generate import LatentScaler
from .lcdiff import Denoiser, DenoiserConfig, NoiseSchedule, SinusoidalConfig, build_schedule
from .seqvae import SequenceVae, VaeConfig

MAGIC = b"FLCK"
FORMAT_VERSION = 1
MODEL_KINDS = ("vae", "diffusion", "arvae", "lcvae")


class CheckpointError(Exception):
    """Raised when a checkpoint file cannot be written or understood."""


def _as_float32(array) -> np.ndarray:
    if isinstance(array, torch.Tensor):
        array = array.detach().cpu().numpy()
    return np.ascontiguousarray(np.asarray(array), dtype="<f4")


def save_checkpoint(
    path: str | Path,
    model_kind: str,
    tensors: dict[str, Any],
    config: dict,
    attribute: dict | None = None,
    extra: dict | None = None,
) -> None:
    """Write a manifest plus float32 tensor blob to a single file."""
    if model_kind not in MODEL_KINDS:
        raise CheckpointError(f"unknown model kind {model_kind!r}")
    arrays = {name: _as_float32(t) for name, t in tensors.items()}
    directory = []
    offset = 0
    for name, arr in arrays.items():
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.nbytes
    manifest = {
        "format_version": FORMAT_VERSION,
        "model_kind": model_kind,
        "config": config,
        "attribute": attribute,
        "extra": extra or {},
        "tensors": directory,
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in arrays.values():
            fh.write(arr.tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read tensors and manifest back; validates structure and offsets."""
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a FLCK checkpoint file")
    (manifest_len,) = struct.unpack("<I", raw[4:8])
    header_end = 8 + manifest_len
    if len(raw) < header_end:
        raise CheckpointError(
            f"{path}: truncated manifest (need {header_end} bytes, file has {len(raw)})"
        )
    try:
        manifest = json.loads(raw[8:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: manifest is not valid JSON: {exc}") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {version!r} not supported (expected {FORMAT_VERSION})"
        )
    payload = raw[header_end:]
    tensors: dict[str, np.ndarray] = {}
    cursor = 0
    for entry in manifest["tensors"]:
        name, shape, offset = entry["name"], tuple(entry["shape"]), entry["offset"]
        if offset != cursor:
            raise CheckpointError(
                f"{path}: tensor {name!r} at offset {offset}, expected {cursor} "
                "(overlapping or out-of-order segments)"
            )
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4 if shape else 4
        end = offset + nbytes
        if end > len(payload):
            raise CheckpointError(
                f"{path}: truncated tensor data for {name!r}: need bytes "
                f"[{offset}, {end}) of the tensor section, have {len(payload)}"
            )
        tensors[name] = np.frombuffer(
            payload, dtype="<f4", count=nbytes // 4, offset=offset
        ).reshape(shape).copy()
        cursor = end
    if cursor != len(payload):
        raise CheckpointError(
            f"{path}: {len(payload) - cursor} trailing bytes after the last tensor"
        )
    return tensors, manifest


# --------------------------------------------------------------------------
# model-level save/load


def _config_dict(config) -> dict:
    return dataclasses.asdict(config)


def _stats_payload(attribute: str | None, stats: AttributeStats | None) -> dict | None:
    if attribute is None:
        return None
    return {"name": attribute, "stats": stats.as_dict() if stats else None}


def save_vae(path, model: SequenceVae) -> None:
    save_checkpoint(path, "vae", model.state_dict(), _config_dict(model.config))


def save_diffusion(
    path,
    model: Denoiser,
    schedule: NoiseSchedule,
    attribute: str,
    stats: AttributeStats,
    scaler: LatentScaler | None = None,
) -> None:
    extra = {
        "schedule": {
            "num_steps": schedule.num_steps,
            "beta_min": float(schedule.betas[0]),
            "beta_max": float(schedule.betas[-1]),
        }
    }
    tensors: dict[str, Any] = dict(model.state_dict())
    if scaler is not None:
        tensors["__aux__.latent_loc"] = scaler.loc
        tensors["__aux__.latent_scale"] = scaler.scale
    save_checkpoint(
        path, "diffusion", tensors, _config_dict(model.config),
        attribute=_stats_payload(attribute, stats), extra=extra,
    )


def save_arvae(
    path,
    model: SequenceVae,
    ar: ArConfig,
    attribute: str,
    stats: AttributeStats,
    quantile_map: QuantileMap | None = None,
) -> None:
    tensors: dict[str, Any] = dict(model.state_dict())
    if quantile_map is not None:
        tensors["__aux__.quantile_attr"] = quantile_map.sorted_attr
        tensors["__aux__.quantile_latent"] = quantile_map.sorted_latent
    save_checkpoint(
        path, "arvae", tensors, _config_dict(model.config),
        attribute=_stats_payload(attribute, stats), extra={"ar": _config_dict(ar)},
    )


def save_lcvae(path, model: CondLatentVae, attribute: str, stats: AttributeStats) -> None:
    save_checkpoint(
        path, "lcvae", model.state_dict(), _config_dict(model.config),
        attribute=_stats_payload(attribute, stats),
    )


@dataclass(slots=True)
class LoadedModel:
    kind: str
    model: torch.nn.Module
    manifest: dict
    attribute: str | None = None
    stats: AttributeStats | None = None
    schedule: NoiseSchedule | None = None
    ar: ArConfig | None = None
    quantile_map: QuantileMap | None = None
    scaler: LatentScaler | None = None


def _load_state(model: torch.nn.Module, tensors: dict[str, np.ndarray], path) -> None:
    state = {}
    for name, param in model.state_dict().items():
        if name not in tensors:
            raise CheckpointError(f"{path}: missing tensor {name!r}")
        arr = tensors[name]
        if tuple(arr.shape) != tuple(param.shape):
            raise CheckpointError(
                f"{path}: tensor {name!r} has shape {tuple(arr.shape)}, "
                f"model expects {tuple(param.shape)}"
            )
        state[name] = torch.from_numpy(arr)
    model.load_state_dict(state)


def _sinusoidal_from(config: dict) -> SinusoidalConfig:
    enc = config.pop("encoding")
    return SinusoidalConfig(**enc)


def load_model(path: str | Path) -> LoadedModel:
    """Reconstruct a model object of the kind recorded in the manifest."""
    tensors, manifest = load_checkpoint(path)
    kind = manifest["model_kind"]
    config = dict(manifest["config"])
    attr_block = manifest.get("attribute") or None
    attribute = attr_block["name"] if attr_block else None
    stats = (
        AttributeStats.from_dict(attr_block["stats"])
        if attr_block and attr_block.get("stats")
        else None
    )
    loaded = LoadedModel(kind=kind, model=None, manifest=manifest,
                         attribute=attribute, stats=stats)
    if kind == "vae" or kind == "arvae":
        model = SequenceVae(VaeConfig(**config))
        if kind == "arvae":
            loaded.ar = ArConfig(**manifest["extra"]["ar"])
            qa = tensors.pop("__aux__.quantile_attr", None)
            ql = tensors.pop("__aux__.quantile_latent", None)
            if qa is not None and ql is not None:
                loaded.quantile_map = QuantileMap(
                    sorted_attr=qa.astype(np.float64),
                    sorted_latent=ql.astype(np.float64),
                )
    elif kind == "diffusion":
        enc = _sinusoidal_from(config)
        model = Denoiser(DenoiserConfig(encoding=enc, **config))
        sched = manifest["extra"]["schedule"]
        loaded.schedule = build_schedule(
            sched["num_steps"], sched["beta_min"], sched["beta_max"]
        )
        loc = tensors.pop("__aux__.latent_loc", None)
        scale = tensors.pop("__aux__.latent_scale", None)
        if loc is not None and scale is not None:
            loaded.scaler = LatentScaler(
                loc=torch.from_numpy(loc), scale=torch.from_numpy(scale)
            )
    elif kind == "lcvae":
        enc = _sinusoidal_from(config)
        model = CondLatentVae(CondVaeConfig(encoding=enc, **config))
    else:
        raise CheckpointError(f"{path}: unknown model kind {kind!r}")
    _load_state(model, tensors, path)
    model.eval()
    loaded.model = model
    return loaded
