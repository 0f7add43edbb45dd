"""Synthetic source/target pairs with known vertex correspondence.

Every generator returns ``(source, target)`` shapes normalized *jointly* to
the unit box, with vertex ``i`` of the source corresponding to vertex ``i``
of the target.
"""

from __future__ import annotations

import enum

import numpy as np

from .measures import ShapeComplex, ShapeKind, polyline_cells


class DatasetKind(str, enum.Enum):
    CURVE_PAIR = "curve_pair"
    FIBER_BUNDLES = "fiber_bundles"
    TRANSLATED_SQUARES = "translated_squares"
    SURFACE_PAIR = "surface_pair"


def normalize_pair(a, b, margin=0.02):
    """Common translation + isotropic scaling sending both vertex sets into [0, 1]^d."""
    allv = np.concatenate([a, b])
    lo, hi = allv.min(axis=0), allv.max(axis=0)
    scale = (1.0 - 2 * margin) / float(np.max(hi - lo))
    center = 0.5 * (lo + hi)
    f = lambda x: (x - center) * scale + 0.5
    return f(a), f(b)


def _arm_profile(phi, centers, lengths, width):
    r = np.ones_like(phi)
    for c, length in zip(centers, lengths):
        x = np.angle(np.exp(1j * (phi - c))) / width
        r += length * np.exp(-x ** 4)
    return r


def _warp(phi, src_centers, dst_centers):
    """Smooth monotone circle map sending each source arm center to its target center."""
    order = np.argsort(src_centers)
    s = np.asarray(src_centers)[order]
    shift = np.asarray(dst_centers)[order] - s
    # periodic linear interpolation of the shift, then circular smoothing
    xs = np.concatenate([s - 2 * np.pi, s, s + 2 * np.pi])
    ys = np.tile(shift, 3)
    return phi + np.interp(np.mod(phi, 2 * np.pi), xs, ys)


def curve_pair(seed=0, n=160, n_arms=3, width=0.13, shift=(0.6, 0.75)):
    """Closed 2-D "protozoa" curves whose arms are displaced along the body.

    Vertices are spread evenly in arc length on the source.  The target is the
    same family with rotated and rescaled arms; ground-truth correspondence is
    the smooth angular warp moving arm centers onto each other.
    """
    rng = np.random.default_rng(seed)
    base = np.linspace(0, 2 * np.pi, n_arms, endpoint=False) + rng.uniform(0, 2 * np.pi)
    src_c = base + rng.uniform(-0.15, 0.15, n_arms)
    dst_c = src_c + rng.choice([-1, 1], n_arms) * rng.uniform(shift[0], shift[1], n_arms)
    src_len = rng.uniform(0.9, 1.3, n_arms)
    dst_len = src_len * rng.uniform(0.85, 1.15, n_arms)

    fine = np.linspace(0, 2 * np.pi, 20 * n, endpoint=False)
    r = _arm_profile(fine, src_c, src_len, width)
    pts = np.stack([r * np.cos(fine), r * np.sin(fine)], axis=1)
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0, arc[-1], n, endpoint=False)
    phi = np.interp(targets, arc, np.append(fine, 2 * np.pi))

    rs = _arm_profile(phi, src_c, src_len, width)
    src = np.stack([rs * np.cos(phi), rs * np.sin(phi)], axis=1)
    psi = _warp(phi, src_c, dst_c)
    rt = _arm_profile(psi, dst_c, dst_len, width)
    dst = np.stack([rt * np.cos(psi), rt * np.sin(psi)], axis=1)
    src, dst = normalize_pair(src, dst)
    cells = polyline_cells([n], [True])
    return ShapeComplex(src, cells, ShapeKind.CURVE2D), ShapeComplex(dst, cells, ShapeKind.CURVE2D)


def fiber_bundles(seed=0, n_bundles=3, fibers_per_bundle=20, points_per_fiber=8):
    """Three bundles of 3-D polyline fibers, bent differently in source and target."""
    rng = np.random.default_rng(seed)
    s = np.linspace(0, 1, points_per_fiber)
    src_all, dst_all = [], []
    for b in range(n_bundles):
        start = rng.uniform(-1, 1, 3)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        bend = rng.normal(size=3)
        bend -= bend @ direction * direction
        bend /= np.linalg.norm(bend)
        length = rng.uniform(1.2, 1.8)
        curv_src = rng.uniform(0.2, 0.4)
        curv_dst = curv_src + rng.uniform(0.2, 0.35)
        stretch = rng.uniform(0.85, 1.15)
        for _ in range(fibers_per_bundle):
            offset = 0.08 * rng.normal(size=3)
            offset -= offset @ direction * direction
            spine = start[None, :] + offset + length * s[:, None] * direction
            src = spine + curv_src * np.sin(np.pi * s)[:, None] * bend
            dst = (start[None, :] + offset + stretch * length * s[:, None] * direction
                   + curv_dst * np.sin(np.pi * s)[:, None] * bend + 0.15 * bend)
            src_all.append(src)
            dst_all.append(dst)
    src, dst = normalize_pair(np.concatenate(src_all), np.concatenate(dst_all))
    counts = [points_per_fiber] * (n_bundles * fibers_per_bundle)
    cells = polyline_cells(counts)
    return ShapeComplex(src, cells, ShapeKind.CURVE3D), ShapeComplex(dst, cells, ShapeKind.CURVE3D)


def translated_squares(seed=0, side=0.5, offset=0.3):
    """Two identical 4-segment squares, the target shifted by ``offset`` along x."""
    rng = np.random.default_rng(seed)
    corner = rng.uniform(0.0, 1.0 - side - offset, 2)
    sq = corner + side * np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    cells = polyline_cells([4], [True])
    tgt = sq + np.array([offset, 0.0])
    return ShapeComplex(sq, cells, ShapeKind.CURVE2D), ShapeComplex(tgt, cells, ShapeKind.CURVE2D)


def octasphere(level=3):
    """Unit sphere triangulated from a subdivided octahedron: 8 * 4**level triangles."""
    verts = [np.array(v, float) for v in
             [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]]
    faces = [(0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4),
             (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5)]
    for _ in range(level):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        faces = new
    return np.array(verts), np.array(faces, dtype=np.int64)


def surface_pair(seed=0, level=3):
    """Closed surfaces with 512 triangles at ``level=3``: an ellipsoid and a bumped, bent copy."""
    rng = np.random.default_rng(seed)
    v, f = octasphere(level)
    axes = np.array([1.0, 0.7, 0.5])
    src = v * axes
    bumps = rng.normal(size=(4, 3))
    bumps /= np.linalg.norm(bumps, axis=1)[:, None]
    heights = rng.uniform(0.15, 0.3, 4)
    radial = np.ones(len(v))
    for c, hgt in zip(bumps, heights):
        radial += hgt * np.exp(-np.sum((v - c) ** 2, axis=1) / (2 * 0.3 ** 2))
    dst = v * axes * radial[:, None]
    dst[:, 2] += 0.25 * dst[:, 0] ** 2
    src, dst = normalize_pair(src, dst)
    return ShapeComplex(src, f, ShapeKind.SURFACE3D), ShapeComplex(dst, f, ShapeKind.SURFACE3D)


_GENERATORS = {
    DatasetKind.CURVE_PAIR: curve_pair,
    DatasetKind.FIBER_BUNDLES: fiber_bundles,
    DatasetKind.TRANSLATED_SQUARES: translated_squares,
    DatasetKind.SURFACE_PAIR: surface_pair,
}


def generate_synthetic(kind, seed=0, **kwargs):
    return _GENERATORS[DatasetKind(kind)](seed=seed, **kwargs)
