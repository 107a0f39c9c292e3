"""Graph data model, the on-disk dataset format, and adjacency operators.

A dataset directory holds:

    meta.json     {"name", "num_nodes", "feature_dim", "num_classes"}
    edges.tsv     one undirected edge per line "u<TAB>v", 0-based, u < v,
                  sorted, no duplicates, no self-loops
    features.csv  num_nodes rows of feature_dim comma-separated decimals
    labels.txt    optional; one integer per line, -1 = unlabeled
    splits.json   optional; list of {"train": [...], "val": [...], "test": [...]}

Loading is strict: malformed input raises instead of being repaired.
Graphs are immutable after construction and safe to share read-only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import (
    DuplicateEdge,
    EmptyEdgeSet,
    FormatError,
    IndexOutOfRange,
    MissingFile,
    SelfLoop,
    ShapeMismatch,
    UnlabeledEndpoint,
)


@dataclass
class Graph:
    """Undirected graph with dense node features and optional labels/splits.

    adjacency is a CSR 0/1 matrix, symmetric, zero diagonal. features is
    float64 of shape (num_nodes, feature_dim). labels uses -1 for unlabeled
    nodes. splits is a list of {"train", "val", "test"} index arrays.
    """

    num_nodes: int
    adjacency: sp.csr_matrix
    features: np.ndarray
    labels: np.ndarray | None = None
    splits: list[dict[str, np.ndarray]] | None = None
    name: str = "unnamed"
    num_classes: int | None = None

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return self.adjacency.nnz // 2

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel().astype(np.int64)

    def edge_list(self) -> np.ndarray:
        """Canonical (u < v) edge array, sorted lexicographically."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        edges = np.stack([coo.row, coo.col], axis=1)
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        return edges[order]

    def validate(self) -> None:
        a = self.adjacency
        if a.shape != (self.num_nodes, self.num_nodes):
            raise ShapeMismatch(f"adjacency {a.shape} vs num_nodes {self.num_nodes}")
        if self.features.shape[0] != self.num_nodes:
            raise ShapeMismatch(
                f"{self.features.shape[0]} feature rows for {self.num_nodes} nodes")
        if not np.all(np.isfinite(self.features)):
            raise FormatError("non-finite feature values")
        if a.diagonal().sum() != 0:
            raise SelfLoop("adjacency has nonzero diagonal")
        if (a != a.T).nnz != 0:
            raise FormatError("adjacency is not symmetric")
        if a.nnz and not np.all(a.data == 1):
            raise DuplicateEdge("adjacency entries must be exactly 0 or 1")
        if self.labels is not None:
            if len(self.labels) != self.num_nodes:
                raise ShapeMismatch("label count != num_nodes")
        if self.splits is not None:
            for si, split in enumerate(self.splits):
                seen: set[int] = set()
                for part in ("train", "val", "test"):
                    idx = np.asarray(split[part])
                    if len(idx) and (idx.min() < 0 or idx.max() >= self.num_nodes):
                        raise IndexOutOfRange(f"split {si} {part} index out of range")
                    part_set = set(int(i) for i in idx)
                    if len(part_set) != len(idx):
                        raise DuplicateEdge(f"split {si} {part} has repeated indices")
                    if part_set & seen:
                        raise FormatError(f"split {si}: train/val/test overlap")
                    seen |= part_set


@dataclass
class ConvBases:
    """Cached convolution inputs: b0 = X, b1 = norm(A) X, b2 = norm(A^2) X."""

    b0: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        if not (self.b0.shape == self.b1.shape == self.b2.shape):
            raise ShapeMismatch("convolution bases must share one shape")

    def as_list(self) -> list[np.ndarray]:
        return [self.b0, self.b1, self.b2]


def adjacency_from_edges(num_nodes: int, edges: np.ndarray) -> sp.csr_matrix:
    """Symmetric 0/1 CSR adjacency from an array of (u, v) pairs with u < v."""
    if len(edges) == 0:
        return sp.csr_matrix((num_nodes, num_nodes), dtype=np.float64)
    u, v = edges[:, 0], edges[:, 1]
    data = np.ones(2 * len(edges), dtype=np.float64)
    rows = np.concatenate([u, v])
    cols = np.concatenate([v, u])
    a = sp.csr_matrix((data, (rows, cols)), shape=(num_nodes, num_nodes))
    a.sum_duplicates()
    return a


def row_normalize(adjacency: sp.spmatrix) -> sp.csr_matrix:
    """Divide each row by its sum; rows of isolated nodes stay all-zero."""
    a = sp.csr_matrix(adjacency, dtype=np.float64, copy=True)
    rowsum = np.asarray(a.sum(axis=1)).ravel()
    inv = np.zeros_like(rowsum)
    nz = rowsum != 0
    inv[nz] = 1.0 / rowsum[nz]
    return sp.diags(inv) @ a


def two_hop_normalized(adjacency: sp.spmatrix) -> sp.csr_matrix:
    """Row-normalized A @ A. The diagonal of A^2 (node degree) is retained."""
    a = sp.csr_matrix(adjacency, dtype=np.float64)
    a2 = (a @ a).tocsr()
    return row_normalize(a2)


def compute_conv_bases(graph: Graph) -> ConvBases:
    """Materialize the three convolution bases once; reused across training."""
    x = np.ascontiguousarray(graph.features, dtype=np.float64)
    ahat = row_normalize(graph.adjacency)
    a2hat = two_hop_normalized(graph.adjacency)
    return ConvBases(b0=x, b1=np.asarray(ahat @ x), b2=np.asarray(a2hat @ x))


def edge_homophily(graph: Graph, labels: np.ndarray | None = None) -> float:
    """Fraction of undirected edges whose endpoints share a label."""
    if labels is None:
        labels = graph.labels
    if labels is None:
        raise UnlabeledEndpoint("graph has no labels")
    labels = np.asarray(labels)
    edges = graph.edge_list()
    if len(edges) == 0:
        raise EmptyEdgeSet("homophily is undefined on an empty edge set")
    lu = labels[edges[:, 0]]
    lv = labels[edges[:, 1]]
    if np.any(lu < 0) or np.any(lv < 0):
        raise UnlabeledEndpoint("an edge endpoint is unlabeled")
    return float(np.mean(lu == lv))


# --- on-disk format ----------------------------------------------------------


def _require(path: Path) -> Path:
    if not path.is_file():
        raise MissingFile(str(path))
    return path


def load_dataset(directory: str | Path) -> Graph:
    """Read a dataset directory into a validated Graph.

    Fails on malformed input (self-loops, duplicates, out-of-range indices,
    shape mismatches) rather than repairing it.
    """
    d = Path(directory)
    if not d.is_dir():
        raise MissingFile(f"dataset directory {d} does not exist")
    with open(_require(d / "meta.json")) as f:
        meta = json.load(f)
    n = int(meta["num_nodes"])
    dim = int(meta["feature_dim"])

    edges = []
    seen: set[tuple[int, int]] = set()
    prev = (-1, -1)
    with open(_require(d / "edges.tsv")) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"edges.tsv:{lineno}: expected 'u<TAB>v'")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise FormatError(f"edges.tsv:{lineno}: non-integer endpoint") from exc
            if u == v:
                raise SelfLoop(f"edges.tsv:{lineno}: self-loop at node {u}")
            if u > v:
                raise FormatError(f"edges.tsv:{lineno}: endpoints must satisfy u < v")
            if not (0 <= u < n and 0 <= v < n):
                raise IndexOutOfRange(f"edges.tsv:{lineno}: node id outside [0, {n})")
            if (u, v) in seen:
                raise DuplicateEdge(f"edges.tsv:{lineno}: edge ({u}, {v}) repeated")
            if (u, v) < prev:
                raise FormatError(f"edges.tsv:{lineno}: edges must be sorted")
            seen.add((u, v))
            prev = (u, v)
            edges.append((u, v))
    edge_arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)

    features = np.loadtxt(_require(d / "features.csv"), delimiter=",",
                          dtype=np.float64, ndmin=2)
    if features.shape != (n, dim):
        raise ShapeMismatch(
            f"features.csv is {features.shape}, meta says ({n}, {dim})")

    labels = None
    if (d / "labels.txt").is_file():
        labels = np.loadtxt(d / "labels.txt", dtype=np.int64, ndmin=1)
        if len(labels) != n:
            raise ShapeMismatch(f"labels.txt has {len(labels)} rows for {n} nodes")

    splits = None
    if (d / "splits.json").is_file():
        with open(d / "splits.json") as f:
            raw = json.load(f)
        splits = [
            {part: np.asarray(s[part], dtype=np.int64) for part in ("train", "val", "test")}
            for s in raw
        ]

    graph = Graph(
        num_nodes=n,
        adjacency=adjacency_from_edges(n, edge_arr),
        features=features,
        labels=labels,
        splits=splits,
        name=str(meta.get("name", d.name)),
        num_classes=int(meta["num_classes"]) if "num_classes" in meta else None,
    )
    graph.validate()
    return graph


def save_dataset(graph: Graph, directory: str | Path) -> None:
    """Write a Graph in the dataset directory format (load_dataset inverse)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    num_classes = graph.num_classes
    if num_classes is None and graph.labels is not None:
        valid = graph.labels[graph.labels >= 0]
        num_classes = int(valid.max()) + 1 if len(valid) else 0
    meta = {
        "name": graph.name,
        "num_nodes": graph.num_nodes,
        "feature_dim": graph.feature_dim,
        "num_classes": num_classes if num_classes is not None else 0,
    }
    with open(d / "meta.json", "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(d / "edges.tsv", "w") as f:
        for u, v in graph.edge_list():
            f.write(f"{u}\t{v}\n")
    with open(d / "features.csv", "w") as f:
        for row in graph.features:
            f.write(",".join(repr(float(x)) for x in row))
            f.write("\n")
    if graph.labels is not None:
        with open(d / "labels.txt", "w") as f:
            for lab in graph.labels:
                f.write(f"{int(lab)}\n")
    if graph.splits is not None:
        payload = [
            {part: [int(i) for i in split[part]] for part in ("train", "val", "test")}
            for split in graph.splits
        ]
        with open(d / "splits.json", "w") as f:
            json.dump(payload, f)
            f.write("\n")
