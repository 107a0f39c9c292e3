"""Benchmark graph exporter: ecosystem loaders in, text dataset format out."""

from .export import (
    ExportManifest,
    ValidationFailure,
    canonical_edges,
    edge_homophily_of_export,
    export,
    generated_splits,
    verify,
)
from .loaders import SUPPORTED, DownloadFailure, LoadedDataset, UnknownDataset, pyg_loader

__version__ = "0.1.0"
