"""Shared fixtures: tiny hand-written datasets and exported-data discovery.

Real benchmark exports (written by the exporter package) are looked up under
$CONVMIX_DATA or ./data; tests that need one skip with a clear message when
it is absent, so the suite runs end-to-end on synthetic data alone.
"""

import json
import os
from pathlib import Path

import numpy as np
import pytest

from convmix.graphstore import Graph, adjacency_from_edges, load_dataset


def data_root() -> Path:
    return Path(os.environ.get("CONVMIX_DATA", Path(__file__).resolve().parents[1] / "data"))


def require_dataset(name: str):
    """Return the exported dataset Graph or skip the calling test."""
    d = data_root() / name
    if not (d / "meta.json").is_file():
        pytest.skip(f"exported dataset {name!r} not found under {data_root()} "
                    f"(run the exporter on a networked machine: "
                    f"graphexport export {name} {d})")
    return load_dataset(d)


def write_tiny_dataset(d: Path, num_nodes=3, edges=((0, 1), (1, 2)),
                       features=((1.0,), (2.0,), (3.0,)), labels=(0, 1, 0),
                       num_classes=2, splits=None):
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "meta.json", "w") as f:
        json.dump({"name": d.name, "num_nodes": num_nodes,
                   "feature_dim": len(features[0]), "num_classes": num_classes}, f)
    with open(d / "edges.tsv", "w") as f:
        for u, v in edges:
            f.write(f"{u}\t{v}\n")
    with open(d / "features.csv", "w") as f:
        for row in features:
            f.write(",".join(str(x) for x in row) + "\n")
    if labels is not None:
        with open(d / "labels.txt", "w") as f:
            f.writelines(f"{la}\n" for la in labels)
    if splits is not None:
        with open(d / "splits.json", "w") as f:
            json.dump(splits, f)
    return d


@pytest.fixture
def tiny_dataset_dir(tmp_path):
    return write_tiny_dataset(tmp_path / "tiny")


@pytest.fixture
def path_graph():
    """0 - 1 - 2 with 1-d features [1, 2, 3]."""
    return Graph(
        num_nodes=3,
        adjacency=adjacency_from_edges(3, np.array([[0, 1], [1, 2]])),
        features=np.array([[1.0], [2.0], [3.0]]),
        labels=np.array([0, 1, 0]),
        name="path3",
        num_classes=2,
    )


@pytest.fixture
def triangle_graph():
    return Graph(
        num_nodes=3,
        adjacency=adjacency_from_edges(3, np.array([[0, 1], [0, 2], [1, 2]])),
        features=np.eye(3),
        labels=np.array([0, 0, 1]),
        name="triangle",
        num_classes=2,
    )


def random_graph(n, d, p_edge=0.25, seed=0, num_classes=2):
    """Erdos-Renyi-ish test graph with gaussian features and random labels."""
    rng = np.random.default_rng(seed)
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)
             if rng.random() < p_edge]
    return Graph(
        num_nodes=n,
        adjacency=adjacency_from_edges(n, np.array(edges).reshape(-1, 2)),
        features=rng.normal(size=(n, d)),
        labels=rng.integers(0, num_classes, size=n),
        name=f"random{n}",
        num_classes=num_classes,
    )
