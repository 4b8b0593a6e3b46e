"""Versioned binary checkpoint container.

Layout (little-endian): magic "RORP", u32 version, then zero or more
tensor records of the form

    u32 name length | name bytes (UTF-8) | u32 rank | rank * u32 dims |
    rank-product * f32 payload

Records run to end of file; no trailing bytes. Run metadata (step, epoch,
config hash, metric snapshot) lives in a JSON sidecar next to the binary
so the tensor container stays a pure tensor container.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError

MAGIC = b"RORP"
VERSION = 1


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype=np.float32)
            nm = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nm)))
            fh.write(nm)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise DataFormatError(f"{path}: checkpoint header truncated")
    if raw[:4] != MAGIC:
        raise DataFormatError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise DataFormatError(f"{path}: unknown checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    off = 8
    while off < len(raw):
        try:
            (nlen,) = struct.unpack_from("<I", raw, off)
            off += 4
            name = raw[off : off + nlen].decode("utf-8")
            if len(raw[off : off + nlen]) != nlen:
                raise struct.error("short name")
            off += nlen
            (rank,) = struct.unpack_from("<I", raw, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}I", raw, off)
            off += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            payload = np.frombuffer(raw, dtype="<f4", count=size, offset=off)
            off += 4 * size
        except (struct.error, ValueError) as exc:
            raise DataFormatError(f"{path}: truncated tensor record: {exc}") from exc
        if name in out:
            raise DataFormatError(f"{path}: duplicate tensor name {name!r}")
        out[name] = payload.reshape(dims).copy()
    return out


@dataclass
class CheckpointMeta:
    version: int
    step: int
    epoch: int
    config_hash: str
    metrics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CheckpointMeta":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**data)


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest()[:16]


def meta_path(ckpt_path: str | Path) -> Path:
    return Path(f"{ckpt_path}.meta.json")
