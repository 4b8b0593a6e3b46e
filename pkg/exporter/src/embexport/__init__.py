"""Encode images and caption text into EMB1 embedding files."""

from .export import ExportManifest, export_captions, export_images

__version__ = "0.1.0"
__all__ = ["ExportManifest", "export_captions", "export_images", "__version__"]
