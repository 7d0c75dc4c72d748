"""Binary checkpoints.

Layout (little-endian)::

    b"HMDE" | u32 version | u32 tensor count
    per tensor, sorted by name: u16 name length | UTF-8 name | u8 rank | u64 dims... | f32 payload
    u32 metadata length | UTF-8 JSON metadata (sorted keys)

Metadata holds the model configuration and the vocabulary tokens, so a
checkpoint is self-contained.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Vocabulary
from .model import HmdeConfig, HmdeModel, set_lower_frozen
from .pipeline import ClassifierHead
from .tensor import Tensor

MAGIC = b"HMDE"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)


def _encode(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(ckpt.tensors))]
    for name in sorted(ckpt.tensors):
        arr = np.ascontiguousarray(ckpt.tensors[name], dtype="<f4")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    meta = json.dumps(ckpt.metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts.append(struct.pack("<I", len(meta)) + meta)
    return b"".join(parts)


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(_encode(ckpt))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointFormatError("checkpoint is truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: str | Path) -> Checkpoint:
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise CheckpointFormatError(f"{path}: not an HMDE checkpoint (bad magic)")
    version, count = r.unpack("<II")
    if version != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported checkpoint version {version}")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (rank,) = r.unpack("<B")
        shape = r.unpack(f"<{rank}Q") if rank else ()
        n = int(np.prod(shape)) if shape else 1
        tensors[name] = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape).astype(np.float32)
    (meta_len,) = r.unpack("<I")
    try:
        metadata = json.loads(r.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CheckpointFormatError(f"{path}: corrupt metadata block") from None
    if r.pos != len(r.buf):
        raise CheckpointFormatError(f"{path}: trailing bytes after metadata")
    return Checkpoint(tensors, metadata)


def checkpoint_from_model(model: HmdeModel, head: ClassifierHead | None = None, extra: dict | None = None) -> Checkpoint:
    tensors = {k: p.data.copy() for k, p in model.named_parameters().items()}
    if head is not None:
        tensors.update({k: p.data.copy() for k, p in head.named_parameters().items()})
    meta = {
        "config": model.config.to_dict(),
        "vocab": model.vocab.tokens[3:],
        "lower_frozen": model.lower_frozen,
    }
    if extra:
        meta.update(extra)
    return Checkpoint(tensors, meta)


def model_from_checkpoint(ckpt: Checkpoint) -> tuple[HmdeModel, ClassifierHead | None]:
    try:
        config = HmdeConfig(**ckpt.metadata["config"])
        vocab = Vocabulary(ckpt.metadata["vocab"])
    except (KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"checkpoint metadata lacks model configuration ({exc})") from None
    model = HmdeModel(config, vocab)
    named = model.named_parameters()
    missing = sorted(set(named) - set(ckpt.tensors))
    if missing:
        raise CheckpointFormatError(f"checkpoint lacks tensor '{missing[0]}'")
    for name, p in named.items():
        if ckpt.tensors[name].shape != p.shape:
            raise CheckpointFormatError(f"tensor '{name}' has shape {ckpt.tensors[name].shape}, expected {p.shape}")
        p.data = ckpt.tensors[name].copy()
    head = None
    if "head.weight" in ckpt.tensors:
        head = ClassifierHead(
            Tensor(ckpt.tensors["head.weight"], requires_grad=True, name="head.weight"),
            Tensor(ckpt.tensors["head.bias"], requires_grad=True, name="head.bias"),
        )
    if ckpt.metadata.get("lower_frozen"):
        set_lower_frozen(model, True)
    return model, head
