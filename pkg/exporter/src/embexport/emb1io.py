"""EMB1 writing, implemented against the published byte layout.

This package talks to the captioning pipeline only through files, so the
format is re-implemented here rather than imported: magic "EMB1", u32 LE
count, u32 LE dim, then count*dim float32 LE values row-major, no
trailing bytes. The ids sidecar is one {"id", "image_id"} JSON object
per line.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np


def write_emb1(path: str | Path, matrix: np.ndarray) -> None:
    m = np.ascontiguousarray(matrix, dtype=np.float32)
    if m.ndim != 2:
        raise ValueError(f"EMB1 payload must be 2-D, got {m.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", b"EMB1", m.shape[0], m.shape[1]))
        fh.write(m.tobytes(order="C"))


def write_ids(path: str | Path, records: list[tuple[int, int]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rid, image_id in records:
            fh.write(json.dumps({"id": int(rid), "image_id": int(image_id)}) + "\n")
