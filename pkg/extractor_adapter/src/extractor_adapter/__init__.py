"""Bridge from pre-trained vision backbones to feature-bank directories."""

from .extract import ExtractionJob, extract, preprocess, scan_dataset
from .registry import build_backbone, model_names

__all__ = [
    "ExtractionJob", "extract", "preprocess", "scan_dataset",
    "build_backbone", "model_names",
]
