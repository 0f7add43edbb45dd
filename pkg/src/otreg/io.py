"""Plain-text readers and writers.

Formats
-------
``.obj``
    Triangle-only subset: ``v x y z`` and ``f i j k`` lines (1-based indices,
    ``i/t/n`` forms accepted on read).
``.curves``
    One ``curve`` header line per polyline (``curve closed`` for loops),
    followed by ``x y`` or ``x y z`` rows.
measure dump
    One row per Dirac: position, direction, mass.
plan
    Dense row-major matrix, or ``i j value`` triplets.

Floats are written with 17 significant digits so that reading back
reproduces the binary values exactly.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import InvalidShape
from .measures import DiscreteMeasure, ShapeComplex, ShapeKind, polyline_cells

FMT = "%.17g"


def _fmt_row(values):
    return " ".join(FMT % v for v in values)


def read_obj(path) -> ShapeComplex:
    verts, faces = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                if len(idx) != 3:
                    raise InvalidShape(f"{path}:{lineno}: only triangular faces are supported")
                faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
    return ShapeComplex(np.array(verts, float).reshape(-1, 3),
                        np.array(faces, np.int64).reshape(-1, 3), ShapeKind.SURFACE3D)


def write_obj(path, shape: ShapeComplex, vertices=None):
    vertices = shape.vertices if vertices is None else np.asarray(vertices)
    with open(path, "w") as fh:
        for v in vertices:
            fh.write("v " + _fmt_row(v) + "\n")
        for f in shape.cells:
            fh.write("f %d %d %d\n" % tuple(int(i) + 1 for i in f))


def read_curves(path, kind=None) -> ShapeComplex:
    """Read a ``.curves`` file; the kind is inferred from the coordinate count unless given."""
    chunks, closed = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            if parts[0] == "curve":
                chunks.append([])
                closed.append(len(parts) > 1 and parts[1] == "closed")
                continue
            if not chunks:
                raise InvalidShape(f"{path}:{lineno}: coordinates before the first 'curve' header")
            chunks[-1].append([float(x) for x in parts])
    dims = {len(row) for c in chunks for row in c}
    if len(dims) != 1:
        raise InvalidShape(f"{path}: inconsistent coordinate counts {sorted(dims)}")
    dim = dims.pop()
    if kind is None:
        kind = ShapeKind.CURVE2D if dim == 2 else ShapeKind.CURVE3D
    verts = np.array([row for c in chunks for row in c], float)
    cells = polyline_cells([len(c) for c in chunks], closed)
    return ShapeComplex(verts, cells, kind)


def _chains(cells):
    """Split consecutive segment cells into (vertex list, closed) polylines."""
    chains = []
    current = None
    for a, b in cells:
        a, b = int(a), int(b)
        if current is not None and current[-1] == a:
            if b == current[0]:
                chains.append((current, True))
                current = None
            else:
                current.append(b)
            continue
        if current is not None:
            chains.append((current, False))
        current = [a, b]
    if current is not None:
        chains.append((current, False))
    return chains


def write_curves(path, shape: ShapeComplex, vertices=None):
    vertices = shape.vertices if vertices is None else np.asarray(vertices)
    with open(path, "w") as fh:
        for chain, is_closed in _chains(shape.cells):
            fh.write("curve closed\n" if is_closed else "curve\n")
            for i in chain:
                fh.write(_fmt_row(vertices[i]) + "\n")


def read_shape(path, kind=None) -> ShapeComplex:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if str(path).endswith(".obj"):
        return read_obj(path)
    return read_curves(path, kind)


def write_shape(path, shape: ShapeComplex, vertices=None):
    if shape.kind is ShapeKind.SURFACE3D:
        write_obj(path, shape, vertices)
    else:
        write_curves(path, shape, vertices)


def shape_suffix(shape: ShapeComplex) -> str:
    return ".obj" if shape.kind is ShapeKind.SURFACE3D else ".curves"


def write_measure(path, measure: DiscreteMeasure):
    with open(path, "w") as fh:
        for a, u, m in zip(measure.positions, measure.directions, measure.masses):
            fh.write(_fmt_row([*a, *u, m]) + "\n")


def read_measure(path) -> DiscreteMeasure:
    data = np.loadtxt(path, ndmin=2)
    d = (data.shape[1] - 1) // 2
    return DiscreteMeasure(data[:, :d], data[:, d:2 * d], data[:, 2 * d])


def write_plan(path, plan):
    np.savetxt(path, np.asarray(plan), fmt=FMT)


def read_plan(path):
    return np.loadtxt(path, ndmin=2)


def write_triplets(path, triplets):
    with open(path, "w") as fh:
        for i, j, g in triplets:
            fh.write(f"{i} {j} {FMT % g}\n")


def read_triplets(path):
    out = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if parts:
                out.append((int(parts[0]), int(parts[1]), float(parts[2])))
    return out


def write_history(path, rows, columns):
    with open(path, "w") as fh:
        fh.write("\t".join(columns) + "\n")
        for r in rows:
            cells = []
            for c in columns:
                v = r[c]
                cells.append(FMT % v if isinstance(v, float) else str(v))
            fh.write("\t".join(cells) + "\n")


def read_history(path):
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        return [dict(zip(header, line.rstrip("\n").split("\t"))) for line in fh if line.strip()]


def write_summary(path, summary: dict):
    with open(path, "w") as fh:
        for k, v in summary.items():
            fh.write(f"{k} = {FMT % v if isinstance(v, float) else v}\n")


def read_summary(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                out[k.strip()] = v.strip()
    return out
