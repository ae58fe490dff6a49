"""On-disk layout for snapshot sets and matrices.

A snapshot directory holds ``meshes/<id>.json`` (one file per mesh, leaves
only) and ``snapshots.json`` with the time grid, weights and per-instance
mesh id plus nodal coefficients.  Matrices are written as CSV with 17
significant digits, which round-trips doubles exactly.
"""
import hashlib
import json
from pathlib import Path

import numpy as np

from .fem import FeFunction, SnapshotSet, TimeGrid
from .mesh import load_mesh, save_mesh

__all__ = ["save_snapshots", "load_snapshots", "write_csv", "read_csv", "file_digest"]


def save_snapshots(s, directory):
    d = Path(directory)
    (d / "meshes").mkdir(parents=True, exist_ok=True)
    for mid in sorted(set(s.mesh_ids)):
        save_mesh(s.mesh(mid), d / "meshes" / f"{mid}.json")
    doc = {
        "times": [float(t) for t in s.grid.times],
        "weights": [float(w) for w in s.weights],
        "entries": [{"mesh": int(y.mesh_id), "coeffs": [float(c) for c in y.coeffs]}
                    for y in s.snapshots],
    }
    (d / "snapshots.json").write_text(json.dumps(doc))
    return d


def load_snapshots(directory):
    d = Path(directory)
    doc = json.loads((d / "snapshots.json").read_text())
    meshes = {}
    entries = []
    for e in doc["entries"]:
        mid = int(e["mesh"])
        if mid not in meshes:
            path = d / "meshes" / f"{mid}.json"
            if not path.exists():
                raise ValueError(f"snapshot references mesh {mid} but {path} is missing")
            meshes[mid] = load_mesh(path)
        entries.append(FeFunction(meshes[mid], np.array(e["coeffs"], dtype=float)))
    s = SnapshotSet(TimeGrid(np.array(doc["times"], dtype=float)), entries, meshes)
    stored = np.array(doc.get("weights", s.weights), dtype=float)
    if not np.allclose(stored, s.weights, rtol=1e-14, atol=0):
        raise ValueError("stored weights do not match the time grid")
    return s


def write_csv(path, rows, header=None):
    """Write a 2D array (or rows of numbers) with ``%.17g`` formatting."""
    lines = [",".join(header)] if header else []
    for row in np.atleast_2d(np.asarray(rows, dtype=float)) if len(rows) else []:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt(v):
    if float(v).is_integer() and abs(v) < 2 ** 53:
        return str(int(v))
    return "%.17g" % v


def read_csv(path, header=False):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if header:
        lines = lines[1:]
    if not lines:
        return np.zeros((0, 0))
    return np.array([[float(v) for v in ln.split(",")] for ln in lines])


def file_digest(*paths):
    """SHA-256 over the bytes of the given files (in order)."""
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()
