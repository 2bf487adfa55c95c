"""Stock boundary geometries used by tests and the experiment runner."""

from __future__ import annotations

import numpy as np

from .boundary import BoundaryGeometry


def circle_geometry(radius=1.0, n_segments=256, center=(0.0, 0.0)):
    """A circle approximated by a regular n-gon polyline.

    The polyline perimeter is the exact boundary measure used downstream;
    for spectral purposes only the total length matters.
    """
    th = 2 * np.pi * np.arange(n_segments) / n_segments
    pts = np.column_stack([center[0] + radius * np.cos(th),
                           center[1] + radius * np.sin(th)])
    return BoundaryGeometry(dim_ambient=2, components=(pts,))


def regular_polygon_geometry(n_sides, circumradius=1.0, center=(0.0, 0.0)):
    th = 2 * np.pi * np.arange(n_sides) / n_sides
    pts = np.column_stack([center[0] + circumradius * np.cos(th),
                           center[1] + circumradius * np.sin(th)])
    return BoundaryGeometry(dim_ambient=2, components=(pts,))


def square_geometry(side=1.0):
    s = side
    pts = np.array([[0.0, 0.0], [s, 0.0], [s, s], [0.0, s]])
    return BoundaryGeometry(dim_ambient=2, components=(pts,))


def multi_circle_geometry(radii, spacing=None):
    """Disjoint circles (each a 256-gon) laid out along the x-axis."""
    comps = []
    x0 = 0.0
    for r in radii:
        th = 2 * np.pi * np.arange(256) / 256
        comps.append(np.column_stack([x0 + r * np.cos(th), r * np.sin(th)]))
        x0 += (spacing if spacing is not None else 4.0 * max(radii))
    return BoundaryGeometry(dim_ambient=2, components=tuple(comps))


def scaled_circle_by_perimeter(perimeter, n_segments=256):
    """Circle-shaped polyline whose *polyline* length equals ``perimeter``."""
    # a regular n-gon of circumradius R has perimeter 2 n R sin(pi/n)
    R = perimeter / (2 * n_segments * np.sin(np.pi / n_segments))
    return circle_geometry(radius=R, n_segments=n_segments)


# ---------------------------------------------------------------------------
# triangulated spheres
# ---------------------------------------------------------------------------

def icosphere(subdivisions=3, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Icosahedron subdivided ``subdivisions`` times, projected to a sphere.

    Vertex counts: 12, 42, 162, 642, 2562, 10242, ... per level.
    """
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    t = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=int)

    for _ in range(subdivisions):
        v, t = _subdivide(v, t)
        v /= np.linalg.norm(v, axis=1, keepdims=True)

    v = v * radius + np.asarray(center)
    return BoundaryGeometry(dim_ambient=3, vertices=v, triangles=t)


def _subdivide(v, t):
    verts = list(v)
    midpoint = {}

    def mid(a, b):
        key = (min(a, b), max(a, b))
        if key not in midpoint:
            midpoint[key] = len(verts)
            verts.append(0.5 * (verts[a] + verts[b]))
        return midpoint[key]

    new_t = []
    for a, b, c in t:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        new_t += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return np.array(verts), np.array(new_t, dtype=int)


def two_spheres(subdivisions=2, radius=1.0, spacing=4.0):
    """Two disjoint icospheres as one triangulation (two components)."""
    g1 = icosphere(subdivisions, radius, center=(0.0, 0.0, 0.0))
    g2 = icosphere(subdivisions, radius, center=(spacing, 0.0, 0.0))
    n1 = g1.vertices.shape[0]
    v = np.vstack([g1.vertices, g2.vertices])
    t = np.vstack([g1.triangles, g2.triangles + n1])
    return BoundaryGeometry(dim_ambient=3, vertices=v, triangles=t)
