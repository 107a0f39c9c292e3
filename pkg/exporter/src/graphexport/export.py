"""Conversion into the text dataset format, with manifest and verification.

Output directory layout (consumed by the embedding tool's loader):

    meta.json, edges.tsv, features.csv, labels.txt, splits.json, manifest.json

Edges are symmetrized and canonicalized (u < v, sorted, deduplicated,
self-loops dropped). Datasets without fixed splits receive 10 generated
class-stratified 48/32/20 splits (seeds 0-9), marked in the manifest.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .loaders import LoadedDataset

DATA_FILES = ("meta.json", "edges.tsv", "features.csv", "labels.txt", "splits.json")


class ValidationFailure(Exception):
    pass


@dataclass
class ExportManifest:
    dataset: str
    source: str
    num_nodes: int
    num_edges: int
    feature_dim: int
    num_classes: int
    split_provenance: str
    num_splits: int
    checksums: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_edges(edges: np.ndarray, num_nodes: int) -> np.ndarray:
    """Symmetrize and canonicalize a raw edge list: u < v, sorted, unique."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(edges) and (edges.min() < 0 or edges.max() >= num_nodes):
        raise ValidationFailure("edge endpoint outside [0, num_nodes)")
    keep = edges[:, 0] != edges[:, 1]          # drop self-loops
    edges = edges[keep]
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    keys = np.unique(lo * np.int64(num_nodes) + hi)
    return np.stack([keys // num_nodes, keys % num_nodes], axis=1)


def generated_splits(labels: np.ndarray, seeds=range(10),
                     fractions=(0.48, 0.32, 0.20)) -> list[dict]:
    """Class-stratified splits for datasets without canonical fixed ones."""
    out = []
    for seed in seeds:
        rng = np.random.Generator(np.random.PCG64(seed))
        train, val, test = [], [], []
        for cls in np.unique(labels[labels >= 0]):
            idx = rng.permutation(np.flatnonzero(labels == cls))
            n_tr = max(1, int(round(fractions[0] * len(idx))))
            n_va = max(1, int(round(fractions[1] * len(idx))))
            train.extend(int(i) for i in idx[:n_tr])
            val.extend(int(i) for i in idx[n_tr:n_tr + n_va])
            test.extend(int(i) for i in idx[n_tr + n_va:])
        out.append({"train": sorted(train), "val": sorted(val), "test": sorted(test)})
    return out


def _validate_output(d: Path, manifest: ExportManifest) -> None:
    """Re-read the emitted files and check the format invariants."""
    failures = []
    edges = []
    prev = (-1, -1)
    seen = set()
    with open(d / "edges.tsv") as f:
        for line in f:
            u, v = (int(t) for t in line.split("\t"))
            if u >= v:
                failures.append(f"edge ({u}, {v}) not in u < v form")
            if (u, v) in seen:
                failures.append(f"duplicate edge ({u}, {v})")
            if (u, v) < prev:
                failures.append(f"edge ({u}, {v}) out of order")
            if not (0 <= u < manifest.num_nodes and 0 <= v < manifest.num_nodes):
                failures.append(f"edge ({u}, {v}) out of range")
            seen.add((u, v))
            prev = (u, v)
            edges.append((u, v))
    if len(edges) != manifest.num_edges:
        failures.append(f"{len(edges)} edges written, manifest says {manifest.num_edges}")
    features = np.loadtxt(d / "features.csv", delimiter=",", ndmin=2)
    if features.shape != (manifest.num_nodes, manifest.feature_dim):
        failures.append(f"features shape {features.shape} mismatches manifest")
    if not np.all(np.isfinite(features)):
        failures.append("non-finite feature values")
    labels = np.loadtxt(d / "labels.txt", dtype=np.int64, ndmin=1)
    if len(labels) != manifest.num_nodes:
        failures.append("label count mismatches num_nodes")
    if failures:
        raise ValidationFailure("; ".join(failures))


def export(loaded: LoadedDataset, out_dir: str | Path) -> ExportManifest:
    """Write the dataset directory and its manifest; idempotent."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    edges = canonical_edges(loaded.edges, loaded.num_nodes)
    labels = np.asarray(loaded.labels, dtype=np.int64)
    valid = labels[labels >= 0]
    num_classes = int(valid.max()) + 1 if len(valid) else 0

    if loaded.splits is not None:
        splits = loaded.splits
        provenance = loaded.split_provenance
    else:
        splits = generated_splits(labels)
        provenance = "generated"

    with open(d / "meta.json", "w") as f:
        json.dump({"name": loaded.name, "num_nodes": loaded.num_nodes,
                   "feature_dim": int(loaded.features.shape[1]),
                   "num_classes": num_classes}, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(d / "edges.tsv", "w") as f:
        for u, v in edges:
            f.write(f"{u}\t{v}\n")
    with open(d / "features.csv", "w") as f:
        for row in np.asarray(loaded.features, dtype=np.float64):
            f.write(",".join(repr(float(x)) for x in row))
            f.write("\n")
    with open(d / "labels.txt", "w") as f:
        f.writelines(f"{int(la)}\n" for la in labels)
    with open(d / "splits.json", "w") as f:
        json.dump([{k: [int(i) for i in s[k]] for k in ("train", "val", "test")}
                   for s in splits], f)
        f.write("\n")

    manifest = ExportManifest(
        dataset=loaded.name, source=loaded.source,
        num_nodes=loaded.num_nodes, num_edges=len(edges),
        feature_dim=int(loaded.features.shape[1]), num_classes=num_classes,
        split_provenance=provenance, num_splits=len(splits),
        checksums={name: _sha256(d / name) for name in DATA_FILES},
    )
    _validate_output(d, manifest)
    with open(d / "manifest.json", "w") as f:
        f.write(manifest.to_json())
    return manifest


def verify(out_dir: str | Path) -> tuple[bool, list[str]]:
    """Recompute checksums and counts against the manifest; never raises."""
    d = Path(out_dir)
    diffs = []
    try:
        with open(d / "manifest.json") as f:
            manifest = ExportManifest(**json.load(f))
    except Exception as exc:
        return False, [f"cannot read manifest: {exc}"]
    for name, expected in manifest.checksums.items():
        path = d / name
        if not path.is_file():
            diffs.append(f"{name}: missing")
        elif _sha256(path) != expected:
            diffs.append(f"{name}: checksum mismatch")
    if not diffs:
        try:
            _validate_output(d, manifest)
        except ValidationFailure as exc:
            diffs.append(str(exc))
        except Exception as exc:
            diffs.append(f"{type(exc).__name__}: {exc}")
    return not diffs, diffs


def edge_homophily_of_export(out_dir: str | Path) -> float:
    """Homophily recomputed straight from the emitted files."""
    d = Path(out_dir)
    labels = np.loadtxt(d / "labels.txt", dtype=np.int64, ndmin=1)
    edges = np.loadtxt(d / "edges.tsv", dtype=np.int64, ndmin=2)
    if np.any(labels[edges] < 0):
        raise ValidationFailure("unlabeled edge endpoint")
    return float(np.mean(labels[edges[:, 0]] == labels[edges[:, 1]]))
