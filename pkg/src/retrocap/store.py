"""Embedding datastore and exact cosine nearest-neighbor retrieval.

The store is immutable after build and safe for concurrent readers.
Retrieval is an exact full scan: similarities are computed for every row
(in float64 for reproducible ordering) and sorted with a deterministic
tie-break, so the result equals a brute-force oracle by construction.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .emb1 import read_captions_jsonl, read_emb1, read_ids_sidecar
from .errors import ValidationError


@dataclass(frozen=True)
class CaptionRecord:
    id: int
    image_id: int
    text: str


class EmbeddingStore:
    """Immutable matrix of float32 vectors with id/image-id sidecar data.

    Vectors are kept unnormalized; cosine normalization happens at query
    time so the same rows can serve raw-vector uses (word similarity).
    """

    def __init__(self, vectors: np.ndarray, ids: list[int], image_ids: list[int]):
        if vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-D, got shape {vectors.shape}")
        if len(ids) != vectors.shape[0] or len(image_ids) != vectors.shape[0]:
            raise ValidationError(
                f"id count {len(ids)} does not match vector count {vectors.shape[0]}"
            )
        if len(set(ids)) != len(ids):
            raise ValidationError("record ids are not unique")
        bad = np.flatnonzero(~np.isfinite(vectors).all(axis=1))
        if bad.size:
            raise ValidationError(f"non-finite entries in row {bad[0]}", row=int(bad[0]))
        norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise ValidationError(f"zero vector at row {zero[0]}", row=int(zero[0]))

        self._vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        self._vectors.setflags(write=False)
        self._ids = list(ids)
        self._image_ids = list(image_ids)
        self._norms = norms  # float64, strictly positive
        self._row_by_id = {rid: i for i, rid in enumerate(ids)}

    @property
    def count(self) -> int:
        return self._vectors.shape[0]

    @property
    def dim(self) -> int:
        return self._vectors.shape[1]

    @property
    def ids(self) -> list[int]:
        return list(self._ids)

    @property
    def image_ids(self) -> list[int]:
        return list(self._image_ids)

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    def vector_for(self, record_id: int) -> np.ndarray:
        return self._vectors[self._row_by_id[record_id]]

    def __contains__(self, record_id: int) -> bool:
        return record_id in self._row_by_id


def build_store(embeddings_file: str | Path, ids_file: str | Path) -> EmbeddingStore:
    """Load an EMB1 file plus its ids sidecar into a validated store."""
    vectors = read_emb1(embeddings_file)
    ids, image_ids = read_ids_sidecar(ids_file)
    return EmbeddingStore(vectors, ids, image_ids)


def load_captions(path: str | Path) -> dict[int, CaptionRecord]:
    """Load the caption corpus keyed by record id; ids must be unique."""
    records = {}
    for rec in read_captions_jsonl(path):
        if rec["id"] in records:
            raise ValidationError(f"duplicate caption id {rec['id']}")
        records[rec["id"]] = CaptionRecord(rec["id"], rec["image_id"], rec["text"])
    return records


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between a and b, computed in float64."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm input")
    return float(a @ b / (na * nb))


def load_query_embedding(path: str | Path) -> np.ndarray:
    """Read a single-row EMB1 file as a query vector and validate it."""
    mat = read_emb1(path)
    if mat.shape[0] != 1:
        raise ValidationError(f"query file must hold exactly one row, found {mat.shape[0]}")
    q = mat[0]
    if not np.isfinite(q).all():
        raise ValidationError("query embedding has non-finite entries")
    if np.linalg.norm(q) == 0.0:
        raise ValidationError("query embedding has zero norm")
    return q


def _scores(store: EmbeddingStore, query: np.ndarray) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64).ravel()
    if q.shape[0] != store.dim:
        raise ValueError(f"query dim {q.shape[0]} does not match store dim {store.dim}")
    qn = np.linalg.norm(q)
    if qn == 0.0:
        raise ValueError("query has zero norm")
    return (store.vectors.astype(np.float64) @ q) / (store._norms * qn)


def knn_retrieve(
    query: np.ndarray,
    store: EmbeddingStore,
    k: int,
    exclude_image_id: int | None = None,
    workers: int = 1,
) -> list[tuple[int, float]]:
    """Top-k records by cosine similarity, descending, ties by ascending id.

    Records whose image_id equals exclude_image_id are filtered out before
    ranking. With workers > 1 the scan is partitioned into row chunks whose
    per-chunk top-k lists are merged under the same ordering, so the result
    is identical to the sequential path.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if store.count == 0:
        raise ValueError("store is empty")

    scores = _scores(store, query)
    ids = np.asarray(store._ids, dtype=np.int64)
    image_ids = np.asarray(store._image_ids, dtype=np.int64)

    def top_of(rows: np.ndarray) -> list[tuple[int, float]]:
        if exclude_image_id is not None:
            rows = rows[image_ids[rows] != exclude_image_id]
        if rows.size == 0:
            return []
        order = np.lexsort((ids[rows], -scores[rows]))[:k]
        sel = rows[order]
        return [(int(ids[r]), float(scores[r])) for r in sel]

    all_rows = np.arange(store.count)
    if workers <= 1:
        return top_of(all_rows)

    chunks = np.array_split(all_rows, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        partials = list(pool.map(top_of, chunks))
    merged = [item for part in partials for item in part]
    merged.sort(key=lambda t: (-t[1], t[0]))
    return merged[:k]
