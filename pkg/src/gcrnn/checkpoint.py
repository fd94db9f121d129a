"""Binary checkpoint format.

Layout (all little-endian)::

    magic    8 bytes  b"GCRNNCKP"
    version  uint32
    step     uint64
    cfg_len  uint32, then cfg_len bytes of UTF-8 JSON (model config + metadata)
    count    uint32 number of tensors
    per tensor:
        name_len uint16, name (UTF-8)
        ndim     uint8, dims uint32 * ndim
        data     float64 * prod(dims), row-major

Feature standardisation statistics travel as the tensors ``feature.mean`` and
``feature.std``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import FeatureStats
from .model import ModelConfig, Network, build_network

MAGIC = b"GCRNNCKP"
VERSION = 1


@dataclass
class ModelCheckpoint:
    cfg: ModelConfig
    state: dict[str, np.ndarray]
    step: int
    stats: FeatureStats | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_network(cls, net: Network, step: int, stats: FeatureStats | None = None, meta: dict | None = None):
        return cls(net.cfg, {k: v.copy() for k, v in net.state().items()}, step, stats, dict(meta or {}))

    def to_network(self) -> Network:
        net = build_network(self.cfg, seed=0)
        net.load_state(self.state)
        return net


def save_checkpoint(ckpt: ModelCheckpoint, path: str | Path) -> None:
    header = json.dumps({"model": ckpt.cfg.to_dict(), "meta": ckpt.meta}, sort_keys=True).encode()
    tensors = dict(ckpt.state)
    if ckpt.stats is not None:
        tensors["feature.mean"] = ckpt.stats.mean
        tensors["feature.std"] = ckpt.stats.std
    parts = [MAGIC, struct.pack("<IQI", VERSION, ckpt.step, len(header)), header, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> ModelCheckpoint:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, step, hlen = struct.unpack_from("<IQI", buf, 8)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 8 + 16
    header = json.loads(buf[pos:pos + hlen])
    pos += hlen
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos:pos + nlen].decode()
        pos += nlen
        (ndim,) = struct.unpack_from("<B", buf, pos)
        pos += 1
        dims = struct.unpack_from(f"<{ndim}I", buf, pos)
        pos += 4 * ndim
        n = int(np.prod(dims)) if ndim else 1
        tensors[name] = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).reshape(dims).astype(np.float64)
        pos += 8 * n
    stats = None
    if "feature.mean" in tensors:
        stats = FeatureStats(tensors.pop("feature.mean"), tensors.pop("feature.std"))
    return ModelCheckpoint(ModelConfig.from_dict(header["model"]), tensors, int(step), stats, header.get("meta", {}))
