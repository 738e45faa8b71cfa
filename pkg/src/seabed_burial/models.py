"""Closed-form meshes for the surveyed object classes and for tests."""

from __future__ import annotations

import numpy as np

from .scene import ReferenceModel, SymmetrySet

# name -> (diameter m, height m); dimensions of the dumped objects
OBJECT_DIMENSIONS = {
    "barrel": (0.762, 1.0668),
    "depth_charge": (0.4481, 0.7017),
    "mousetrap": (0.183, 0.9906),
    "smoke_float": (0.5715, 0.7798),
}


def make_cylinder(
    diameter: float, height: float, segments: int = 64, name: str = "cylinder", k: int | None = None
) -> ReferenceModel:
    """Closed cylinder centred on the origin with its axis along +z.

    ``k`` sets the symmetry discretisation; it defaults to ``segments`` so the
    symmetry group of the polygonal mesh is represented exactly.
    """
    r = 0.5 * diameter
    h = 0.5 * height
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.column_stack([r * np.cos(ang), r * np.sin(ang)])
    bottom = np.column_stack([ring, np.full(segments, -h)])
    top = np.column_stack([ring, np.full(segments, h)])
    verts = np.vstack([bottom, top, [[0.0, 0.0, -h], [0.0, 0.0, h]]])
    bc, tc = 2 * segments, 2 * segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris.append((i, j, segments + j))
        tris.append((i, segments + j, segments + i))
        tris.append((tc, segments + i, segments + j))
        tris.append((bc, j, i))
    return ReferenceModel(verts, np.array(tris), SymmetrySet.cylinder(k=k or segments), name)


def make_box(size=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0), name: str = "box") -> ReferenceModel:
    """Axis-aligned box spanning ``origin`` to ``origin + size``; 8 vertices, 12 triangles."""
    sx, sy, sz = size
    ox, oy, oz = origin
    v = np.array(
        [[ox + sx * i, oy + sy * j, oz + sz * k] for k in (0, 1) for j in (0, 1) for i in (0, 1)],
        dtype=float,
    )
    quads = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]
    tris = []
    for a, b, c, d in quads:
        tris += [(a, b, c), (a, c, d)]
    return ReferenceModel(v, np.array(tris), SymmetrySet(), name)


def make_uv_sphere(radius: float, n_lat: int = 24, n_lon: int = 48, name="sphere") -> ReferenceModel:
    verts = [[0.0, 0.0, radius]]
    for i in range(1, n_lat):
        th = np.pi * i / n_lat
        for j in range(n_lon):
            ph = 2 * np.pi * j / n_lon
            verts.append([radius * np.sin(th) * np.cos(ph), radius * np.sin(th) * np.sin(ph), radius * np.cos(th)])
    verts.append([0.0, 0.0, -radius])
    south = len(verts) - 1
    tris = []
    for j in range(n_lon):
        tris.append((0, 1 + j, 1 + (j + 1) % n_lon))
    for i in range(n_lat - 2):
        a0 = 1 + i * n_lon
        b0 = a0 + n_lon
        for j in range(n_lon):
            j2 = (j + 1) % n_lon
            tris.append((a0 + j, b0 + j, b0 + j2))
            tris.append((a0 + j, b0 + j2, a0 + j2))
    last = 1 + (n_lat - 2) * n_lon
    for j in range(n_lon):
        tris.append((south, last + (j + 1) % n_lon, last + j))
    return ReferenceModel(np.array(verts), np.array(tris), SymmetrySet(), name)


def catalog_model(name: str, segments: int = 64) -> ReferenceModel:
    """Cylinder approximation of one of the surveyed object classes."""
    d, h = OBJECT_DIMENSIONS[name]
    return make_cylinder(d, h, segments, name)
