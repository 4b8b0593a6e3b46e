"""Export images and caption corpora to EMB1 files plus sidecars."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import UnidentifiedImageError

from .emb1io import write_emb1, write_ids

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"}


@dataclass
class ExportManifest:
    source_model: str
    dim: int
    files: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def add_file(self, role: str, path: Path, count: int) -> None:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.files[role] = {"path": str(path), "count": count, "sha256": digest}

    def save(self, path: str | Path) -> None:
        payload = {
            "source_model": self.source_model,
            "dim": self.dim,
            "files": self.files,
            "warnings": self.warnings,
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _emit(out_prefix: str | Path, rows, ids, manifest: ExportManifest, dim: int):
    matrix = np.stack(rows) if rows else np.zeros((0, dim), dtype=np.float32)
    emb_path = Path(f"{out_prefix}.emb1")
    ids_path = Path(f"{out_prefix}.ids.jsonl")
    write_emb1(emb_path, matrix)
    write_ids(ids_path, ids)
    manifest.add_file("embeddings", emb_path, matrix.shape[0])
    manifest.add_file("ids", ids_path, len(ids))
    manifest.save(f"{out_prefix}.manifest.json")
    return emb_path, ids_path


def export_images(image_dir: str | Path, out_prefix: str | Path,
                  encoder=None) -> ExportManifest:
    """Encode every readable image in the directory, in sorted name order.

    Unreadable files are skipped with a warning recorded in the manifest;
    row i of the EMB1 file corresponds to line i of the ids sidecar, with
    ids assigned in emit order.
    """
    from .encoders import get_encoder

    encoder = encoder or get_encoder()
    manifest = ExportManifest(source_model=encoder.name, dim=encoder.dim)
    rows, ids = [], []
    paths = sorted(
        p for p in Path(image_dir).iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
    for path in paths:
        try:
            rows.append(encoder.encode_image(path))
        except (UnidentifiedImageError, OSError) as exc:
            manifest.warnings.append(f"skipped unreadable image {path.name}: {exc}")
            continue
        ids.append((len(ids), len(ids)))
    _emit(out_prefix, rows, ids, manifest, encoder.dim)
    return manifest


def export_captions(captions_jsonl: str | Path, out_prefix: str | Path,
                    encoder=None) -> ExportManifest:
    """Encode caption text, one EMB1 row per valid corpus line.

    Blank or malformed lines are rejected and noted in the manifest so the
    sidecar stays aligned with the surviving rows.
    """
    from .encoders import get_encoder

    encoder = encoder or get_encoder()
    manifest = ExportManifest(source_model=encoder.name, dim=encoder.dim)
    rows, ids = [], []
    with open(captions_jsonl, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                manifest.warnings.append(f"line {lineno}: blank, rejected")
                continue
            try:
                rec = json.loads(line)
                rid, image_id, text = int(rec["id"]), int(rec["image_id"]), rec["text"]
                if not isinstance(text, str) or not text.strip():
                    raise ValueError("empty text")
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                manifest.warnings.append(f"line {lineno}: rejected ({exc})")
                continue
            rows.append(encoder.encode_text(text))
            ids.append((rid, image_id))
    _emit(out_prefix, rows, ids, manifest, encoder.dim)
    return manifest
