"""Retrieval-prompted image captioning pipeline."""

from .kernels import backend_name
from .store import EmbeddingStore, build_store, cosine_similarity, knn_retrieve

__version__ = "0.1.0"
__all__ = [
    "EmbeddingStore",
    "backend_name",
    "build_store",
    "cosine_similarity",
    "knn_retrieve",
    "__version__",
]
