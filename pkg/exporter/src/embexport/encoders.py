"""Image and text encoders producing fixed-width embedding rows.

Two backends:

- "lite-512" (default): deterministic and dependency-light. Images are
  resized to 32x32 RGB and projected through a fixed seeded Gaussian
  matrix; text is the normalized mean of per-word Gaussian vectors
  seeded from a word hash. Same input, same bytes, forever - which is
  what the reproducibility tests need, offline.
- "clip:<path>": a CLIP-family vision/text encoder loaded from a local
  HuggingFace-format directory via transformers (optional dependency;
  nothing is downloaded).
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
from PIL import Image

LITE_DIM = 512
_LITE_SEED = 0x5EED
_LITE_THUMB = (32, 32)


class LiteEncoder:
    """Deterministic offline encoder for images and text."""

    name = "lite-512"
    dim = LITE_DIM

    def __init__(self):
        rng = np.random.default_rng(_LITE_SEED)
        flat = _LITE_THUMB[0] * _LITE_THUMB[1] * 3
        self._proj = rng.normal(0.0, flat**-0.5, size=(flat, LITE_DIM)).astype(np.float64)
        self._word_cache: dict[str, np.ndarray] = {}

    def encode_image(self, path: str | Path) -> np.ndarray:
        with Image.open(path) as img:
            thumb = img.convert("RGB").resize(_LITE_THUMB, Image.BILINEAR)
        pixels = np.asarray(thumb, dtype=np.float64).reshape(-1) / 255.0
        vec = pixels @ self._proj
        norm = np.linalg.norm(vec)
        if norm == 0.0:  # constant-zero image: keep the row valid
            vec = self._word_vector("\x00empty-image")
            norm = np.linalg.norm(vec)
        return (vec / norm).astype(np.float32)

    def _word_vector(self, word: str) -> np.ndarray:
        cached = self._word_cache.get(word)
        if cached is None:
            digest = hashlib.sha256(word.encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            cached = rng.normal(size=LITE_DIM)
            self._word_cache[word] = cached
        return cached

    def encode_text(self, text: str) -> np.ndarray:
        words = [w for w in "".join(c if c.isalnum() else " " for c in text.lower()).split() if w]
        if not words:
            raise ValueError("cannot encode empty text")
        vec = np.sum([self._word_vector(w) for w in words], axis=0)
        return (vec / np.linalg.norm(vec)).astype(np.float32)


class ClipEncoder:
    """CLIP-family encoder over local pretrained weights."""

    def __init__(self, model_dir: str):
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise RuntimeError(
                "the clip backend needs the optional torch+transformers extras"
            ) from exc
        self._model = CLIPModel.from_pretrained(model_dir)
        self._model.eval()
        self._processor = CLIPProcessor.from_pretrained(model_dir)
        self.name = f"clip:{Path(model_dir).name}"
        self.dim = int(self._model.config.projection_dim)

    def encode_image(self, path: str | Path) -> np.ndarray:
        import torch

        with Image.open(path) as img:
            inputs = self._processor(images=img.convert("RGB"), return_tensors="pt")
        with torch.no_grad():
            feats = self._model.get_image_features(**inputs)[0]
        vec = feats.numpy().astype(np.float64)
        return (vec / np.linalg.norm(vec)).astype(np.float32)

    def encode_text(self, text: str) -> np.ndarray:
        import torch

        inputs = self._processor(text=[text], return_tensors="pt", truncation=True)
        with torch.no_grad():
            feats = self._model.get_text_features(**inputs)[0]
        vec = feats.numpy().astype(np.float64)
        return (vec / np.linalg.norm(vec)).astype(np.float32)


def get_encoder(spec: str = "lite-512"):
    if spec == "lite-512":
        return LiteEncoder()
    if spec.startswith("clip:"):
        return ClipEncoder(spec.split(":", 1)[1])
    raise ValueError(f"unknown encoder {spec!r} (expected 'lite-512' or 'clip:<path>')")
