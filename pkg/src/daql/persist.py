"""Deterministic result persistence: canonical config hashing, CSV/JSON
writers with byte-stable float formatting, a small disk cache, and binary
PPM heatmap rendering.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path

import numpy as np


def _jsonify(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot canonicalize {type(obj).__name__}")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonify)


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def format_cell(value) -> str:
    """Shortest round-trip formatting; identical input yields identical bytes."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, fieldnames, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fieldnames)
        for row in rows:
            if isinstance(row, dict):
                writer.writerow([format_cell(row.get(k)) for k in fieldnames])
            else:
                writer.writerow([format_cell(v) for v in row])


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=_jsonify) + "\n")


def write_metadata_sidecar(output_path, config: dict) -> Path:
    sidecar = Path(str(output_path) + ".meta.json")
    write_json(sidecar, config)
    return sidecar


def default_cache_root() -> Path:
    return Path(os.environ.get("DAQL_CACHE_DIR", Path.home() / ".cache" / "daql"))


class DiskCache:
    """JSON-document cache keyed by config hash."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str):
        path = self._path(key)
        if not path.exists():
            return None
        return json.loads(path.read_text())

    def put(self, key: str, value) -> None:
        self._path(key).write_text(json.dumps(value, sort_keys=True, default=_jsonify))


def read_grid_csv(path):
    """Read (x, y, value) rows into axis vectors and a full (nx, ny) grid."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"x", "y", "value"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing column(s) {sorted(missing)}")
        triples = [(float(r["x"]), float(r["y"]), float(r["value"])) for r in reader]
    if not triples:
        raise ValueError(f"{path}: empty grid")
    xs = np.array(sorted({t[0] for t in triples}))
    ys = np.array(sorted({t[1] for t in triples}))
    if len(triples) != xs.size * ys.size:
        raise ValueError(f"{path}: ragged grid ({len(triples)} rows for {xs.size}x{ys.size})")
    grid = np.full((xs.size, ys.size), np.nan)
    xi = {v: i for i, v in enumerate(xs)}
    yi = {v: i for i, v in enumerate(ys)}
    for x, y, v in triples:
        grid[xi[x], yi[y]] = v
    if np.isnan(grid).any():
        raise ValueError(f"{path}: ragged grid (duplicate or missing nodes)")
    return xs, ys, grid


#: two-stop linear colormap endpoints (dark violet to yellow)
COLOR_LO = np.array([68, 1, 84], dtype=float)
COLOR_HI = np.array([253, 231, 37], dtype=float)


def render_heatmap_ppm(xs, ys, grid, out_path, scale: int | None = None) -> dict:
    """Write a binary P6 heatmap; row 0 is the largest y, columns ascend in x.

    Every grid node becomes a scale x scale pixel block under a linear
    two-stop color map; returns the sidecar metadata dict.
    """
    nx, ny = grid.shape
    if scale is None:
        scale = max(1, 512 // max(nx, ny))
    lo, hi = float(np.min(grid)), float(np.max(grid))
    norm = np.zeros_like(grid) + 0.5 if hi == lo else (grid - lo) / (hi - lo)
    # image[y_row, x_col]: flip y so the top row is max y
    img_small = norm.T[::-1, :]
    rgb = (COLOR_LO[None, None, :] + img_small[:, :, None] * (COLOR_HI - COLOR_LO)[None, None, :])
    rgb = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
    rgb = np.repeat(np.repeat(rgb, scale, axis=0), scale, axis=1)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "wb") as fh:
        fh.write(f"P6\n{rgb.shape[1]} {rgb.shape[0]}\n255\n".encode())
        fh.write(rgb.tobytes())
    meta = {
        "min": lo, "max": hi, "nx": nx, "ny": ny, "scale": scale,
        "orientation": "row 0 = max y; columns ascend in x",
        "colormap": {"lo": COLOR_LO.tolist(), "hi": COLOR_HI.tolist()},
    }
    write_metadata_sidecar(out_path, meta)
    return meta
