"""Structured linear meshes of benchmark domains.

Each generator returns a straight-sided mesh plus the matching geometry
description (the dict form of the JSON schema in :mod:`hocurve.geometry`).
Boundary vertices are placed exactly on the bounding circles/spheres, and the
radial grading is geometric so element aspect ratios stay near one across
the domain.  Markers: 1 = inner boundary, 2 = outer boundary, and for the
sector 3 = cut at angle 0 (periodic source), 4 = cut at the sector angle
(periodic target).
"""

from __future__ import annotations

from math import ceil, cos, log, pi, sin, sqrt

import numpy as np

from .errors import ParameterError
from .mesh import HighOrderMesh, mesh_from_linear


def _check_radii(inner: float, outer: float, refinement: int):
    if not (0 < inner < outer):
        raise ParameterError(f"need 0 < inner < outer, got {inner}, {outer}")
    if refinement < 1 or int(refinement) != refinement:
        raise ParameterError(f"refinement must be a positive integer, got {refinement}")


def _radial_layers(inner: float, outer: float, n: int) -> np.ndarray:
    return inner * (outer / inner) ** (np.arange(n + 1) / n)


def generate_annulus(inner: float = 1.0, outer: float = 4.0,
                     refinement: int = 2) -> tuple[HighOrderMesh, dict]:
    """Full annulus bounded by two concentric circles."""
    _check_radii(inner, outer, refinement)
    n_theta = 16 * 2 ** (refinement - 1)
    # base radial count for near-unit aspect, then plain doubling so each
    # refinement level multiplies the element count by exactly four
    n_r = max(1, ceil(16 * log(outer / inner) / (2 * pi))) * 2 ** (refinement - 1)
    radii = _radial_layers(inner, outer, n_r)
    theta = 2 * pi * np.arange(n_theta) / n_theta

    verts = np.empty(((n_r + 1) * n_theta, 2))
    for j, r in enumerate(radii):
        base = j * n_theta
        verts[base:base + n_theta, 0] = r * np.cos(theta)
        verts[base:base + n_theta, 1] = r * np.sin(theta)

    def vid(j, i):
        return j * n_theta + (i % n_theta)

    cells, faces, markers = [], [], []
    for j in range(n_r):
        for i in range(n_theta):
            a, b = vid(j, i), vid(j, i + 1)
            c, d = vid(j + 1, i + 1), vid(j + 1, i)
            # counterclockwise quad (a, d, c, b), alternate the diagonal
            if (i + j) % 2 == 0:
                cells += [[a, d, c], [a, c, b]]
            else:
                cells += [[a, d, b], [d, c, b]]
            if j == 0:
                faces.append([a, b])
                markers.append(1)
            if j == n_r - 1:
                faces.append([d, c])
                markers.append(2)

    mesh = mesh_from_linear(verts, np.array(cells), np.array(faces), np.array(markers))
    geometry = {
        "entities": [
            {"id": "inner", "type": "circle", "center": [0.0, 0.0], "radius": inner},
            {"id": "outer", "type": "circle", "center": [0.0, 0.0], "radius": outer},
        ],
        "groups": {"1": "inner", "2": "outer"},
    }
    return mesh, geometry


def generate_sector(inner: float = 1.0, outer: float = 4.0,
                    refinement: int = 2, angle: float = pi / 6,
                    ) -> tuple[HighOrderMesh, dict]:
    """Annulus sector with planar cuts at angles 0 and ``angle``.

    The two cut boundaries (markers 3, 4) are a rotational-periodicity pair;
    the emitted geometry config carries the pairing and pins the four
    sector corners to fixed points.
    """
    _check_radii(inner, outer, refinement)
    if not (0 < angle < pi):
        raise ParameterError(f"sector angle must lie in (0, pi), got {angle}")
    n_theta = 4 * 2 ** (refinement - 1)
    n_r = max(1, ceil(n_theta * log(outer / inner) / angle))
    radii = _radial_layers(inner, outer, n_r)
    theta = angle * np.arange(n_theta + 1) / n_theta

    cols = n_theta + 1
    verts = np.empty(((n_r + 1) * cols, 2))
    for j, r in enumerate(radii):
        base = j * cols
        verts[base:base + cols, 0] = r * np.cos(theta)
        verts[base:base + cols, 1] = r * np.sin(theta)

    def vid(j, i):
        return j * cols + i

    cells, faces, markers = [], [], []
    for j in range(n_r):
        for i in range(n_theta):
            a, b = vid(j, i), vid(j, i + 1)
            c, d = vid(j + 1, i + 1), vid(j + 1, i)
            if (i + j) % 2 == 0:
                cells += [[a, d, c], [a, c, b]]
            else:
                cells += [[a, d, b], [d, c, b]]
            if j == 0:
                faces.append([a, b])
                markers.append(1)
            if j == n_r - 1:
                faces.append([d, c])
                markers.append(2)
    for j in range(n_r):
        faces.append([vid(j, 0), vid(j + 1, 0)])
        markers.append(3)
        faces.append([vid(j, n_theta), vid(j + 1, n_theta)])
        markers.append(4)

    mesh = mesh_from_linear(verts, np.array(cells), np.array(faces), np.array(markers))
    ca, sa = cos(angle), sin(angle)
    geometry = {
        "entities": [
            {"id": "inner", "type": "circle", "center": [0.0, 0.0], "radius": inner},
            {"id": "outer", "type": "circle", "center": [0.0, 0.0], "radius": outer},
            {"id": "cut_src", "type": "plane", "point": [0.0, 0.0], "normal": [0.0, 1.0]},
            {"id": "cut_tgt", "type": "plane", "point": [0.0, 0.0], "normal": [-sa, ca]},
            {"id": "c_in_src", "type": "point", "position": [inner, 0.0]},
            {"id": "c_out_src", "type": "point", "position": [outer, 0.0]},
            {"id": "c_in_tgt", "type": "point", "position": [inner * ca, inner * sa]},
            {"id": "c_out_tgt", "type": "point", "position": [outer * ca, outer * sa]},
        ],
        "groups": {"1": "inner", "2": "outer", "3": "cut_src", "4": "cut_tgt"},
        "junctions": [
            {"markers": [1, 3], "entity": "c_in_src"},
            {"markers": [2, 3], "entity": "c_out_src"},
            {"markers": [1, 4], "entity": "c_in_tgt"},
            {"markers": [2, 4], "entity": "c_out_tgt"},
        ],
        "periodic": [
            {"source": 3, "target": 4, "axis": [0.0, 0.0, 1.0], "angle": angle},
        ],
    }
    return mesh, geometry


# --- icosphere ------------------------------------------------------------

def _icosahedron() -> tuple[np.ndarray, np.ndarray]:
    phi = (1 + sqrt(5)) / 2
    raw = []
    for a, b in ((1, phi), (-1, phi), (1, -phi), (-1, -phi)):
        raw += [(a, b, 0), (0, a, b), (b, 0, a)]
    verts = np.array(raw, dtype=float)
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    # faces by proximity: each vertex pair at minimal distance is an edge
    d2 = np.sum((verts[:, None, :] - verts[None, :, :]) ** 2, axis=2)
    edge_len2 = np.min(d2[d2 > 1e-9])
    adj = d2 < edge_len2 * 1.1
    faces = set()
    for i in range(12):
        for j in range(i + 1, 12):
            if not adj[i, j]:
                continue
            for k in range(j + 1, 12):
                if adj[i, k] and adj[j, k]:
                    faces.add((i, j, k))
    tri = []
    for f in sorted(faces):
        a, b, c = (verts[v] for v in f)
        # orient outward
        if np.dot(np.cross(b - a, c - a), a + b + c) < 0:
            f = (f[0], f[2], f[1])
        tri.append(f)
    return verts, np.array(tri, dtype=np.int64)


def _subdivide_sphere(verts: np.ndarray, faces: np.ndarray,
                      levels: int) -> tuple[np.ndarray, np.ndarray]:
    verts = list(map(np.asarray, verts))
    for _ in range(levels):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            idx = cache.get(key)
            if idx is None:
                m = verts[i] + verts[j]
                m = m / np.linalg.norm(m)
                idx = len(verts)
                verts.append(m)
                cache[key] = idx
            return idx

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        faces = np.array(new_faces, dtype=np.int64)
    return np.array(verts), faces


_PRISM_QUAD_TETS = {
    # diagonal of the middle quad passes through relabeled vertex 1 (or 5)
    True: [(0, 3, 4, 5), (0, 1, 2, 5), (0, 1, 5, 4)],
    False: [(0, 1, 2, 4), (0, 2, 5, 4), (0, 4, 5, 3)],
}


def _split_prism(prism: np.ndarray, coords: np.ndarray) -> list[list[int]]:
    """Split a triangular prism into 3 tets with index-rule face diagonals.

    ``prism`` holds global vertex ids, bottom (0, 1, 2) and top (3, 4, 5)
    with vertical edges i - i+3.  Each quad face takes the diagonal through
    its smallest global id, which matches across neighbouring prisms; the
    prism is relabeled so the overall smallest id sits at position 0, where
    both adjacent quad diagonals necessarily pass through it.
    """
    pos = int(np.argmin(prism))
    if pos >= 3:
        # flip the prism; reverse triangle orientation to stay consistent
        prism = prism[[3, 5, 4, 0, 2, 1]]
        pos = int(np.argmin(prism))
    rot = [(0, 1, 2, 3, 4, 5), (1, 2, 0, 4, 5, 3), (2, 0, 1, 5, 3, 4)][pos]
    local = prism[list(rot)]
    # middle quad (1, 2, 5, 4): diagonal through its smallest id
    mid = (int(local[1]), int(local[2]), int(local[5]), int(local[4]))
    use_15 = min(mid) in (local[1], local[5])
    tets = []
    for t in _PRISM_QUAD_TETS[use_15]:
        tet = [int(local[v]) for v in t]
        pts = coords[tet]
        vol = np.linalg.det(np.array([pts[1] - pts[0], pts[2] - pts[0],
                                      pts[3] - pts[0]]).T)
        if vol < 0:
            tet[2], tet[3] = tet[3], tet[2]
        tets.append(tet)
    return tets


def generate_shell(inner: float = 1.0, outer: float = 4.0,
                   refinement: int = 2) -> tuple[HighOrderMesh, dict]:
    """Spherical shell meshed as icosphere columns of prisms split to tets."""
    _check_radii(inner, outer, refinement)
    sphere_v, sphere_f = _subdivide_sphere(*_icosahedron(), levels=refinement)
    edge = 1.05146 / 2 ** refinement  # icosahedron edge length after subdivision
    n_r = max(1, ceil(log(outer / inner) / edge))
    radii = _radial_layers(inner, outer, n_r)
    nv = sphere_v.shape[0]

    verts = np.vstack([r * sphere_v for r in radii])
    cells = []
    for j in range(n_r):
        base, top = j * nv, (j + 1) * nv
        for a, b, c in sphere_f:
            prism = np.array([base + a, base + b, base + c,
                              top + a, top + b, top + c])
            cells.extend(_split_prism(prism, verts))

    faces, markers = [], []
    for a, b, c in sphere_f:
        faces.append([a, b, c])
        markers.append(1)
        base = n_r * nv
        faces.append([base + a, base + b, base + c])
        markers.append(2)

    mesh = mesh_from_linear(verts, np.array(cells), np.array(faces), np.array(markers))
    geometry = {
        "entities": [
            {"id": "inner", "type": "sphere", "center": [0.0, 0.0, 0.0], "radius": inner},
            {"id": "outer", "type": "sphere", "center": [0.0, 0.0, 0.0], "radius": outer},
        ],
        "groups": {"1": "inner", "2": "outer"},
    }
    return mesh, geometry
