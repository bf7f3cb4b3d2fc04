"""Portable binary checkpoints.

Layout (all integers little-endian)::

    magic      8 bytes  b"ACSRLCK\\n"
    version    u32
    meta_len   u64, then meta_len bytes of UTF-8 JSON
               (config, vocabularies, hash seeds, pad length, contextual width)
    n_tensors  u32
    per tensor: name_len u32, name (UTF-8), rank u32, dims u32 * rank,
                float32 data (row-major)
    crc32      u32 over every preceding byte

Parameter values are rounded to float32 when the checkpoint object is
created, so a loaded model reproduces the saved one bit for bit.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import TrainConfig
from .vocab import Vocabulary

MAGIC = b"ACSRLCK\n"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


@dataclass
class ModelCheckpoint:
    config: TrainConfig
    vocab: Vocabulary
    params: dict  # name -> float64 array holding float32-representable values
    hash_seeds: dict = field(default_factory=dict)
    pad_length: int = 0
    contextual_dim: int = 0
    version: int = FORMAT_VERSION

    @classmethod
    def from_model(cls, model) -> "ModelCheckpoint":
        params = {p.name: p.value.astype(np.float32).astype(np.float64) for p in model.params}
        return cls(model.config, model.vocab, params, dict(model.hash_seeds),
                   model.conv_config.pad_length, model.embed.dims.contextual)

    def build(self):
        """Instantiate an ``SrlModel`` holding exactly these parameter values."""
        from .model import SrlModel

        pretrained = self.params.get("embed.pretrained")
        model = SrlModel(self.config, self.vocab, pretrained=pretrained,
                         contextual_dim=self.contextual_dim, pad_length=self.pad_length)
        names = set(model.store.names())
        if names != set(self.params):
            missing = sorted(names - set(self.params))
            extra = sorted(set(self.params) - names)
            raise CheckpointError(f"parameter mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
        for p in model.params:
            v = self.params[p.name]
            if v.shape != p.shape:
                raise CheckpointError(f"{p.name}: shape {v.shape} != {p.shape}")
            p.value[...] = v
        if model.hash_seeds != self.hash_seeds:
            raise CheckpointError("hash seeds do not match the configuration")
        return model

    def meta(self) -> dict:
        return {"config": self.config.to_dict(), "vocab": self.vocab.to_json(),
                "hash_seeds": {k: str(v) for k, v in self.hash_seeds.items()},
                "pad_length": self.pad_length, "contextual_dim": self.contextual_dim}


def dumps(ckpt: ModelCheckpoint) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", ckpt.version))
    meta = json.dumps(ckpt.meta(), ensure_ascii=False, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<Q", len(meta)))
    buf.write(meta)
    buf.write(struct.pack("<I", len(ckpt.params)))
    for name, value in ckpt.params.items():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", value.ndim))
        buf.write(struct.pack(f"<{value.ndim}I", *value.shape))
        buf.write(np.ascontiguousarray(value, dtype="<f4").tobytes())
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint while reading {what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads(data: bytes) -> ModelCheckpoint:
    r = _Reader(data)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic bytes)")
    (version,) = r.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported version {version} (expected {FORMAT_VERSION})")
    if len(data) < len(MAGIC) + 8:
        raise CheckpointError("truncated checkpoint")
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != crc:
        raise CheckpointError("checksum mismatch (corrupt or truncated checkpoint)")
    r.data = data[:-4]
    (meta_len,) = r.unpack("<Q", "metadata length")
    try:
        meta = json.loads(r.take(meta_len, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"corrupt metadata: {err}") from None
    (count,) = r.unpack("<I", "tensor count")
    params = {}
    for _ in range(count):
        (nlen,) = r.unpack("<I", "tensor name length")
        name = r.take(nlen, "tensor name").decode("utf-8")
        (rank,) = r.unpack("<I", f"{name} rank")
        dims = r.unpack(f"<{rank}I", f"{name} dims")
        size = int(np.prod(dims)) if rank else 1
        raw = r.take(4 * size, f"{name} data")
        params[name] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(dims)
    if r.pos != len(r.data):
        raise CheckpointError("trailing bytes after tensors")
    try:
        config = TrainConfig.from_dict(meta["config"])
        vocab = Vocabulary.from_json(meta["vocab"])
        seeds = {k: int(v) for k, v in meta["hash_seeds"].items()}
        return ModelCheckpoint(config, vocab, params, seeds, int(meta["pad_length"]),
                               int(meta["contextual_dim"]), version)
    except (KeyError, TypeError, ValueError) as err:
        raise CheckpointError(f"corrupt metadata: {err}") from None


def save_checkpoint(ckpt: ModelCheckpoint, path) -> None:
    data = dumps(ckpt)
    with open(path, "wb") as fh:
        fh.write(data)


def load_checkpoint(path) -> ModelCheckpoint:
    with open(path, "rb") as fh:
        return loads(fh.read())
