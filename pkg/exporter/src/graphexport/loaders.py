"""Dataset loaders.

Each loader returns a LoadedDataset: a raw edge list (possibly directed,
with duplicates or self-loops; the exporter cleans it), dense features,
labels, and any fixed splits the ecosystem ships. torch_geometric is the
canonical source and is imported lazily so the conversion machinery works
without it (tests inject fake loaders).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np


class UnknownDataset(Exception):
    pass


class DownloadFailure(Exception):
    pass


@dataclass
class LoadedDataset:
    name: str
    source: str                         # loader identifier for the manifest
    edges: np.ndarray                   # (E, 2) raw, any orientation
    features: np.ndarray                # (n, d)
    labels: np.ndarray                  # (n,), -1 = unlabeled
    splits: list[dict] | None           # [{"train": [...], "val": [...], "test": [...]}]
    split_provenance: str               # "fixed" | "generated" | loader note

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]


# dataset name -> (pyg class name, kwargs, loader family)
_PYG_SPECS = {
    "cora": ("Planetoid", {"name": "Cora"}, "planetoid"),
    "citeseer": ("Planetoid", {"name": "CiteSeer"}, "planetoid"),
    "pubmed": ("Planetoid", {"name": "PubMed"}, "planetoid"),
    "cornell": ("WebKB", {"name": "Cornell"}, "webkb"),
    "texas": ("WebKB", {"name": "Texas"}, "webkb"),
    "wisconsin": ("WebKB", {"name": "Wisconsin"}, "webkb"),
    "actor": ("Actor", {}, "actor"),
    "chameleon": ("WikipediaNetwork", {"name": "chameleon"}, "wikipedia"),
    "squirrel": ("WikipediaNetwork", {"name": "squirrel"}, "wikipedia"),
    "photo": ("Amazon", {"name": "Photo"}, "amazon"),
    "computers": ("Amazon", {"name": "Computers"}, "amazon"),
}

SUPPORTED = tuple(sorted(_PYG_SPECS))


def _masks_to_splits(data, n) -> tuple[list[dict] | None, str]:
    """Fixed splits from PyG boolean masks; handles (n,) and (n, k) masks."""
    if not hasattr(data, "train_mask"):
        return None, "none"
    import torch

    def cols(mask):
        m = mask
        if m.dim() == 1:
            m = m.unsqueeze(1)
        return m

    train = cols(data.train_mask)
    val = cols(data.val_mask)
    test = cols(data.test_mask)
    splits = []
    for k in range(train.shape[1]):
        splits.append({
            "train": torch.nonzero(train[:, k]).view(-1).tolist(),
            "val": torch.nonzero(val[:, k]).view(-1).tolist(),
            "test": torch.nonzero(test[:, k]).view(-1).tolist(),
        })
    return splits, "fixed"


def pyg_loader(name: str, root: str = "pyg-data", attempts: int = 3) -> LoadedDataset:
    """Load through torch_geometric, downloading on first use.

    Transient download errors are retried with exponential backoff.
    """
    if name not in _PYG_SPECS:
        raise UnknownDataset(f"{name!r}; supported: {', '.join(SUPPORTED)}")
    cls_name, kwargs, family = _PYG_SPECS[name]
    try:
        import torch_geometric.datasets as pyg_datasets
    except ImportError as exc:
        raise DownloadFailure(
            "torch_geometric is not installed; install graphexport[pyg]") from exc
    cls = getattr(pyg_datasets, cls_name)
    dataset = None
    for attempt in range(attempts):
        try:
            # the standard (geom-gcn preprocessed) variant carries the fixed splits
            if family == "wikipedia":
                dataset = cls(root=root, geom_gcn_preprocess=True, **kwargs)
            else:
                dataset = cls(root=root, **kwargs)
            break
        except Exception as exc:
            if attempt == attempts - 1:
                raise DownloadFailure(
                    f"loading {name} via {cls_name} failed after {attempts} "
                    f"attempts: {exc}") from exc
            time.sleep(2.0**attempt)
    data = dataset[0]
    edges = data.edge_index.t().numpy().astype(np.int64)
    features = data.x.numpy().astype(np.float64)
    labels = data.y.view(-1).numpy().astype(np.int64)
    splits, provenance = _masks_to_splits(data, features.shape[0])
    return LoadedDataset(name=name, source=f"torch_geometric.{cls_name}",
                         edges=edges, features=features, labels=labels,
                         splits=splits, split_provenance=provenance)
