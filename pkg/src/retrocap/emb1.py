"""EMB1 binary embedding files and their JSONL sidecars.

Layout (little-endian throughout):

    bytes 0-3   magic, ASCII "EMB1"
    bytes 4-7   u32 count (number of rows)
    bytes 8-11  u32 dim   (floats per row)
    then        count*dim IEEE-754 f32 values, row-major

No trailing bytes are allowed; the reader is strict by design so that a
corrupt datastore is caught at load time rather than mid-retrieval.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataFormatError

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sII")


def write_emb1(path: str | Path, matrix: np.ndarray) -> None:
    """Write a 2-D float array as an EMB1 file (cast to float32)."""
    m = np.ascontiguousarray(matrix, dtype=np.float32)
    if m.ndim != 2:
        raise ValueError(f"EMB1 payload must be 2-D, got shape {m.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, m.shape[0], m.shape[1]))
        fh.write(m.tobytes(order="C"))


def read_emb1(path: str | Path) -> np.ndarray:
    """Read an EMB1 file into a (count, dim) float32 array.

    Raises DataFormatError for a bad magic, short header, truncated
    payload, or trailing bytes.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataFormatError(f"{path}: header truncated ({len(raw)} bytes)")
    magic, count, dim = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    expected = _HEADER.size + 4 * count * dim
    if len(raw) < expected:
        raise DataFormatError(
            f"{path}: payload truncated, header promises {count}x{dim} floats "
            f"({expected} bytes) but file has {len(raw)}"
        )
    if len(raw) > expected:
        raise DataFormatError(f"{path}: {len(raw) - expected} trailing bytes after payload")
    flat = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    return flat.reshape(count, dim).copy()


def write_ids_sidecar(path: str | Path, ids: list[int], image_ids: list[int]) -> None:
    """Write the ids sidecar: one {"id", "image_id"} JSON object per line."""
    if len(ids) != len(image_ids):
        raise ValueError("ids and image_ids length mismatch")
    with open(path, "w", encoding="utf-8") as fh:
        for rid, img in zip(ids, image_ids):
            fh.write(json.dumps({"id": int(rid), "image_id": int(img)}) + "\n")


def read_ids_sidecar(path: str | Path) -> tuple[list[int], list[int]]:
    """Read the ids sidecar. Line i describes EMB1 row i."""
    ids: list[int] = []
    image_ids: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                ids.append(int(rec["id"]))
                image_ids.append(int(rec["image_id"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(f"{path}:{lineno + 1}: bad ids record: {exc}") from exc
    return ids, image_ids


def read_captions_jsonl(path: str | Path) -> list[dict]:
    """Read the captions corpus: {"id", "image_id", "text"} per line."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                rid, img, text = int(rec["id"]), int(rec["image_id"]), rec["text"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(f"{path}:{lineno + 1}: bad caption record: {exc}") from exc
            if not isinstance(text, str) or not text:
                raise DataFormatError(f"{path}:{lineno + 1}: caption text must be a non-empty string")
            records.append({"id": rid, "image_id": img, "text": text})
    return records
