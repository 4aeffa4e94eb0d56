"""Bit-exact checkpoint files.

Layout::

    b"HRNNCKPT" | uint64 LE manifest length | sha256(manifest) | manifest | tensor data

The manifest is UTF-8 JSON holding the format version, both configs, and an
ordered tensor list ``{group, name, shape, offset}``. Tensor data is raw
little-endian float64, concatenated in manifest order; its length and sha256
are recorded in the manifest.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import HrnnError
from .model import ModelConfig, ModelParams, tensor_shapes
from .training import RmspropState, TrainConfig

MAGIC = b"HRNNCKPT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sQ32s")


class CheckpointError(HrnnError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    params: ModelParams
    opt_state: RmspropState
    train_config: TrainConfig
    epochs_done: int = 0
    extra: dict = field(default_factory=dict)


def dumps_checkpoint(ckpt: Checkpoint) -> bytes:
    entries = []
    chunks = []
    offset = 0
    groups = (("params", ckpt.params.tensors), ("rmsprop", ckpt.opt_state.cache))
    for group, tensors in groups:
        for name in ckpt.params.names():
            arr = np.ascontiguousarray(tensors[name], dtype="<f8")
            raw = arr.tobytes()
            entries.append({"group": group, "name": name, "shape": list(arr.shape), "offset": offset})
            chunks.append(raw)
            offset += len(raw)
    data = b"".join(chunks)
    manifest = {
        "format_version": FORMAT_VERSION,
        "model_config": ckpt.params.config.to_dict(),
        "train_config": ckpt.train_config.to_dict(),
        "epochs_done": ckpt.epochs_done,
        "extra": ckpt.extra,
        "data_length": len(data),
        "data_sha256": hashlib.sha256(data).hexdigest(),
        "tensors": entries,
    }
    mbytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _HEADER.pack(MAGIC, len(mbytes), hashlib.sha256(mbytes).digest()) + mbytes + data


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(dumps_checkpoint(ckpt))


def loads_checkpoint(blob: bytes) -> Checkpoint:
    if len(blob) < _HEADER.size:
        raise CheckpointTruncatedError(f"file too short for a checkpoint header ({len(blob)} bytes)")
    magic, mlen, mhash = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointCorruptError("bad magic; not a checkpoint file")
    start = _HEADER.size
    if len(blob) < start + mlen:
        raise CheckpointTruncatedError("checkpoint manifest is truncated")
    mbytes = blob[start:start + mlen]
    if hashlib.sha256(mbytes).digest() != mhash:
        raise CheckpointCorruptError("checkpoint manifest checksum mismatch")
    try:
        manifest = json.loads(mbytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointCorruptError(f"unreadable manifest: {exc}") from None
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint format version {version}, expected {FORMAT_VERSION}")

    data = blob[start + mlen:]
    if len(data) < manifest["data_length"]:
        raise CheckpointTruncatedError(f"tensor data has {len(data)} of {manifest['data_length']} bytes")
    if len(data) > manifest["data_length"]:
        raise CheckpointCorruptError("trailing bytes after tensor data")
    if hashlib.sha256(data).hexdigest() != manifest["data_sha256"]:
        raise CheckpointCorruptError("tensor data checksum mismatch")

    config = ModelConfig.from_dict(manifest["model_config"])
    expected = tensor_shapes(config)
    tensors = {"params": {}, "rmsprop": {}}
    for entry in manifest["tensors"]:
        group, name, shape = entry["group"], entry["name"], tuple(entry["shape"])
        if group not in tensors or name not in expected:
            raise CheckpointShapeError(f"unexpected tensor {group}/{name}")
        if shape != tuple(expected[name]):
            raise CheckpointShapeError(f"tensor {group}/{name} has shape {list(shape)}, config implies {list(expected[name])}")
        nbytes = 8 * math.prod(shape)
        off = entry["offset"]
        if off + nbytes > len(data):
            raise CheckpointTruncatedError(f"tensor {group}/{name} runs past the data block")
        tensors[group][name] = np.frombuffer(data, dtype="<f8", count=math.prod(shape), offset=off).reshape(shape).astype(np.float64)
    for group, found in tensors.items():
        missing = [n for n in expected if n not in found]
        if missing:
            raise CheckpointShapeError(f"checkpoint lacks {group} tensors {missing}")

    params = ModelParams(config, {n: tensors["params"][n] for n in expected})
    opt = RmspropState({n: tensors["rmsprop"][n] for n in expected})
    return Checkpoint(params, opt, TrainConfig.from_dict(manifest["train_config"]),
                      manifest.get("epochs_done", 0), manifest.get("extra", {}))


def load_checkpoint(path) -> Checkpoint:
    return loads_checkpoint(Path(path).read_bytes())
