"""Lifting of segmented shapes to weighted Dirac clouds on positions x directions.

Every segment (resp. triangle) becomes one Dirac located at the cell center,
carrying the cell length (resp. area) as mass and a unit direction:

* 2-D curves: the tangent rotated by +90 degrees,
* 3-D curves: the unit tangent,
* triangles: the right-handed unit normal ``(v1 - v0) x (v2 - v0)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCell, DimensionMismatch, InvalidShape

DEGENERACY_TOL = 1e-12


class ShapeKind(str, enum.Enum):
    CURVE2D = "curve2d"
    CURVE3D = "curve3d"
    SURFACE3D = "surface"

    @property
    def dim(self) -> int:
        return 2 if self is ShapeKind.CURVE2D else 3

    @property
    def cell_size(self) -> int:
        return 3 if self is ShapeKind.SURFACE3D else 2


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ShapeComplex:
    """Vertices plus segment or triangle connectivity."""

    vertices: np.ndarray
    cells: np.ndarray
    kind: ShapeKind

    def __post_init__(self):
        kind = ShapeKind(self.kind)
        object.__setattr__(self, "kind", kind)
        vertices = _frozen(self.vertices)
        cells = _frozen(self.cells, dtype=np.int64)
        if cells.size == 0:
            cells = cells.reshape(0, kind.cell_size)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "cells", cells)

        if vertices.ndim != 2 or vertices.shape[1] != kind.dim:
            raise DimensionMismatch(
                f"{kind.value} expects {kind.dim}-d vertices, got array of shape {vertices.shape}"
            )
        if cells.ndim != 2 or cells.shape[1] != kind.cell_size:
            raise InvalidShape(
                f"{kind.value} expects cells with {kind.cell_size} indices, got shape {cells.shape}"
            )
        if cells.size and (cells.min() < 0 or cells.max() >= len(vertices)):
            raise InvalidShape("cell index out of range")
        for a in range(kind.cell_size):
            for b in range(a + 1, kind.cell_size):
                bad = np.flatnonzero(cells[:, a] == cells[:, b])
                if bad.size:
                    raise DegenerateCell(int(bad[0]), f"cell {bad[0]} repeats a vertex index")

    @property
    def dim(self) -> int:
        return self.kind.dim

    def with_vertices(self, vertices) -> "ShapeComplex":
        vertices = np.asarray(vertices, dtype=float)
        if vertices.shape != self.vertices.shape:
            raise DimensionMismatch(
                f"expected vertices of shape {self.vertices.shape}, got {vertices.shape}"
            )
        return ShapeComplex(vertices, self.cells, self.kind)


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted Dirac cloud: ``sum_i masses[i] * delta_(positions[i], directions[i])``."""

    positions: np.ndarray
    directions: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        positions = _frozen(self.positions)
        directions = _frozen(self.directions)
        masses = _frozen(self.masses)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "directions", directions)
        object.__setattr__(self, "masses", masses)
        if positions.ndim != 2 or directions.shape != positions.shape:
            raise DimensionMismatch("positions and directions must be (n, d) arrays of equal shape")
        if masses.shape != (len(positions),):
            raise DimensionMismatch("masses must hold one value per Dirac")
        if np.any(masses < 0):
            raise ValueError("masses must be nonnegative")
        norms = np.linalg.norm(directions, axis=1)
        if np.any(np.abs(norms[masses > 0] - 1.0) > 1e-9):
            raise ValueError("directions must have unit norm")

    def __len__(self):
        return len(self.masses)

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())


def _rot90(v):
    return np.stack([-v[:, 1], v[:, 0]], axis=1)


def _rot90_T(v):
    return np.stack([v[:, 1], -v[:, 0]], axis=1)


def _cell_geometry(shape: ShapeComplex, vertices: np.ndarray):
    """Return (positions, directions, masses, aux) with the unnormalized cell vector in aux."""
    cells = shape.cells
    corners = vertices[cells]  # (m, c, d)
    positions = corners.mean(axis=1)
    if shape.kind is ShapeKind.SURFACE3D:
        raw = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        norm = np.linalg.norm(raw, axis=1)
        masses = 0.5 * norm
    else:
        raw = corners[:, 1] - corners[:, 0]
        norm = np.linalg.norm(raw, axis=1)
        masses = norm
    bad = np.flatnonzero(masses < DEGENERACY_TOL)
    if bad.size:
        raise DegenerateCell(int(bad[0]))
    unit = raw / norm[:, None]
    if shape.kind is ShapeKind.CURVE2D:
        directions = _rot90(unit)
    else:
        directions = unit
    return positions, directions, masses, (raw, norm, unit)


def lift_shape(shape: ShapeComplex) -> DiscreteMeasure:
    """One Dirac per cell: center, unit normal (or tangent for space curves), length/area."""
    positions, directions, masses, _ = _cell_geometry(shape, shape.vertices)
    return DiscreteMeasure(positions, directions, masses)


def rebuild_measure(shape: ShapeComplex, new_vertices) -> DiscreteMeasure:
    """Lift ``shape`` with its vertices replaced by ``new_vertices``."""
    return lift_shape(shape.with_vertices(new_vertices))


def rebuild_measure_adjoint(shape, new_vertices, grad_positions, grad_masses, grad_directions):
    """Pull measure-field gradients back to per-vertex gradients.

    Direction gradients are taken in ambient coordinates; the projection onto
    the tangent space of the unit sphere happens here, through the derivative
    of the normalization.
    """
    vertices = np.asarray(new_vertices, dtype=float)
    if vertices.shape != shape.vertices.shape:
        raise DimensionMismatch("new_vertices must match the shape's vertex array")
    m = len(shape.cells)
    g_pos = np.asarray(grad_positions, dtype=float).reshape(m, shape.dim)
    g_mass = np.asarray(grad_masses, dtype=float).reshape(m)
    g_dir = np.asarray(grad_directions, dtype=float).reshape(m, shape.dim)

    _, _, _, (raw, norm, unit) = _cell_geometry(shape, vertices)
    cells = shape.cells
    c = shape.kind.cell_size
    grad_corners = np.repeat((g_pos / c)[:, None, :], c, axis=1)

    if shape.kind is ShapeKind.CURVE2D:
        g_dir = _rot90_T(g_dir)
    # d(raw/|raw|) = (I - unit unit^T) d raw / |raw|
    g_unit = (g_dir - np.sum(g_dir * unit, axis=1, keepdims=True) * unit) / norm[:, None]

    if shape.kind is ShapeKind.SURFACE3D:
        g_raw = 0.5 * g_mass[:, None] * unit + g_unit
        corners = vertices[cells]
        e1 = corners[:, 1] - corners[:, 0]
        e2 = corners[:, 2] - corners[:, 0]
        g_e1 = np.cross(e2, g_raw)
        g_e2 = np.cross(g_raw, e1)
        grad_corners[:, 0] -= g_e1 + g_e2
        grad_corners[:, 1] += g_e1
        grad_corners[:, 2] += g_e2
    else:
        g_raw = g_mass[:, None] * unit + g_unit
        grad_corners[:, 0] -= g_raw
        grad_corners[:, 1] += g_raw

    grad = np.zeros_like(vertices)
    for k in range(c):
        np.add.at(grad, cells[:, k], grad_corners[:, k])
    return grad


def polyline_cells(counts, closed=None):
    """Segment connectivity for consecutive polylines of ``counts`` vertices each."""
    closed = [False] * len(counts) if closed is None else list(closed)
    cells = []
    start = 0
    for n, is_closed in zip(counts, closed):
        idx = np.arange(start, start + n)
        seg = np.stack([idx[:-1], idx[1:]], axis=1)
        cells.append(seg)
        if is_closed:
            cells.append(np.array([[idx[-1], idx[0]]]))
        start += n
    if not cells:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(cells).astype(np.int64)
