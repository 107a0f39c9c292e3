"""Run artifacts: embedding files and JSON reports.

Embeddings are stored as a raw little-endian float64 row-major binary next
to a small meta JSON, so round-trips are exact; an optional CSV copy exists
for inspection. Reports are plain JSON; numpy scalars/arrays are converted
so the payload re-parses losslessly.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from .errors import FormatError, MissingFile, ShapeMismatch

TOOL_VERSION = "0.1.0"


def save_embedding(directory: str | Path, name: str, arr: np.ndarray,
                   csv_copy: bool = False) -> Path:
    """Write <name>.bin and <name>.meta.json under `directory`."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    a = np.ascontiguousarray(arr, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeMismatch("embeddings must be 2-d")
    data = a.tobytes() if sys.byteorder == "little" else a.byteswap().tobytes()
    (d / f"{name}.bin").write_bytes(data)
    meta = {"rows": a.shape[0], "cols": a.shape[1], "dtype": "f64",
            "layout": "row-major", "endianness": "little"}
    with open(d / f"{name}.meta.json", "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    if csv_copy:
        with open(d / f"{name}.csv", "w") as f:
            for row in a:
                f.write(",".join(repr(float(x)) for x in row))
                f.write("\n")
    return d / f"{name}.bin"


def load_embedding(path: str | Path) -> np.ndarray:
    """Read an embedding from its .bin (or base) path."""
    p = Path(path)
    if p.suffix == ".bin":
        base = p.with_suffix("")
    else:
        base = p
    bin_path = base.with_suffix(".bin")
    meta_path = base.parent / f"{base.name}.meta.json"
    if not bin_path.is_file():
        raise MissingFile(str(bin_path))
    if not meta_path.is_file():
        raise MissingFile(str(meta_path))
    with open(meta_path) as f:
        meta = json.load(f)
    if meta.get("dtype") != "f64" or meta.get("layout") != "row-major":
        raise FormatError(f"unsupported embedding layout in {meta_path}")
    raw = np.frombuffer(bin_path.read_bytes(), dtype="<f8")
    rows, cols = int(meta["rows"]), int(meta["cols"])
    if raw.size != rows * cols:
        raise ShapeMismatch(f"{bin_path} holds {raw.size} values, meta says {rows}x{cols}")
    return raw.reshape(rows, cols).copy()


def jsonify(obj):
    """Recursively convert numpy containers/scalars to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and obj != obj:
        return "nan"
    if isinstance(obj, float) and obj in (float("inf"), float("-inf")):
        return "inf" if obj > 0 else "-inf"
    return obj


def write_report(path: str | Path, payload: dict) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w") as f:
        json.dump(jsonify(payload), f, indent=2, sort_keys=True)
        f.write("\n")


def read_report(path: str | Path) -> dict:
    with open(path) as f:
        return json.load(f)


def write_csv(path: str | Path, header: list[str], rows) -> None:
    """Small plot-ready CSV writer (floats at full round-trip precision)."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(repr(float(x)) if isinstance(x, (float, np.floating))
                             else str(x) for x in row))
            f.write("\n")
