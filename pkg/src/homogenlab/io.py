"""Text serialization: legacy VTK structured points, CSV reports and run manifests.

Floats are written with 17 significant digits so every file reads back
to the exact in-memory values.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .grid import GridSpec, VectorFieldMAC

FLOAT_FMT = ".17g"


def _f(x):
    return format(float(x), FLOAT_FMT)


def _write_block(lines, values, per_line=6):
    flat = [_f(v) for v in values]
    for i in range(0, len(flat), per_line):
        lines.append(" ".join(flat[i : i + per_line]))


def write_vtk(path, dims, origin, spacing, scalars=None, vectors=None, location="CELL", title="homogenlab"):
    """Write arrays on a structured-points lattice.

    ``dims`` counts points per axis.  ``location="CELL"`` stores data on
    the ``dims - 1`` cells, ``"POINT"`` on the points themselves.  Arrays
    are indexed ``[i, j, k]`` and written with ``i`` varying fastest.
    """
    scalars = scalars or {}
    vectors = vectors or {}
    dims = tuple(int(d) for d in dims)
    data_shape = tuple(d - 1 for d in dims) if location == "CELL" else dims
    count = int(np.prod(data_shape))
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS {} {} {}".format(*dims),
        "ORIGIN {} {} {}".format(*(_f(o) for o in origin)),
        "SPACING {} {} {}".format(*(_f(s) for s in spacing)),
        f"{location}_DATA {count}",
    ]
    for name, arr in scalars.items():
        arr = np.asarray(arr, dtype=float)
        if arr.shape != data_shape:
            raise ValueError(f"scalar {name!r} has shape {arr.shape}, expected {data_shape}")
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        _write_block(lines, arr.ravel(order="F"))
    for name, arr in vectors.items():
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (3,) + data_shape:
            raise ValueError(f"vector {name!r} has shape {arr.shape}, expected {(3,) + data_shape}")
        lines.append(f"VECTORS {name} double")
        flat = np.stack([arr[d].ravel(order="F") for d in range(3)], axis=1)
        lines.extend(" ".join(_f(v) for v in row) for row in flat)
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk(path):
    """Read a file from :func:`write_vtk`; returns a dict with the lattice and arrays."""
    tokens = Path(path).read_text().split("\n")
    header = tokens[:4]
    if not header[0].startswith("# vtk") or header[3].strip() != "DATASET STRUCTURED_POINTS":
        raise ValueError(f"{path} is not a structured-points VTK file")
    words = " ".join(tokens[4:]).split()
    pos = 0

    def take(n):
        nonlocal pos
        out = words[pos : pos + n]
        pos += n
        return out

    out = {"scalars": {}, "vectors": {}}
    while pos < len(words):
        key = take(1)[0]
        if key == "DIMENSIONS":
            out["dims"] = tuple(int(v) for v in take(3))
        elif key == "ORIGIN":
            out["origin"] = tuple(float(v) for v in take(3))
        elif key == "SPACING":
            out["spacing"] = tuple(float(v) for v in take(3))
        elif key in ("CELL_DATA", "POINT_DATA"):
            out["location"] = key.split("_")[0]
            take(1)
            dims = out["dims"]
            shape = tuple(d - 1 for d in dims) if out["location"] == "CELL" else dims
            count = int(np.prod(shape))
        elif key == "SCALARS":
            name, _, _ = take(3)
            take(2)  # LOOKUP_TABLE default
            vals = np.array([float(v) for v in take(count)])
            out["scalars"][name] = vals.reshape(shape, order="F")
        elif key == "VECTORS":
            name, _ = take(2)
            vals = np.array([float(v) for v in take(3 * count)]).reshape(count, 3)
            out["vectors"][name] = np.stack([vals[:, d].reshape(shape, order="F") for d in range(3)])
        else:
            raise ValueError(f"unexpected token {key!r} in {path}")
    return out


def write_cell_fields(path, grid: GridSpec, scalars=None, vectors=None):
    """Cell-centred fields on the grid's own cells."""
    dims = tuple(m + 1 for m in grid.n)
    write_vtk(path, dims, grid.box.lo, grid.h, scalars, vectors, location="CELL")


def write_face_component(path, grid: GridSpec, u: VectorFieldMAC, axis, name=None):
    """One MAC component as point data on the lattice of its face centres."""
    h = grid.h
    origin = tuple(grid.box.lo[d] + (0.0 if d == axis else 0.5 * h[d]) for d in range(3))
    name = name or "u" + "xyz"[axis]
    write_vtk(path, grid.face_shape(axis), origin, h, {name: u[axis]}, location="POINT")


def write_csv(path, header, rows):
    """RFC 4180 CSV; floats with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_f(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path):
    """Header and rows of a CSV file, numeric cells converted to int or float."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))

    def conv(s):
        try:
            return int(s)
        except ValueError:
            try:
                return float(s)
            except ValueError:
                return s

    return rows[0], [[conv(c) for c in r] for r in rows[1:]]


def write_manifest(path, entries: dict):
    lines = [f"{k}={entries[k]}" for k in sorted(entries)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if line:
            k, v = line.split("=", 1)
            out[k] = v
    return out
