"""Legacy ASCII VTK output of curved meshes.

Curved elements are rendered by sampling each one on a refinement lattice
and emitting straight sub-cells (``subdivisions`` per edge, so s^dim
sub-cells per element).  Triangles split into upward and downward rows;
tetrahedra follow the standard lattice decomposition into corner cells,
octahedra (cut into four along a diagonal), and inverted cells.  Per
element scalar fields are replicated onto the sub-cells of their element.

Points are written per element without sharing, which keeps the writer
simple and lets discontinuous fields render cleanly.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import ParameterError
from .mesh import HighOrderMesh, evaluate_map
from .reference import reference_element

_VTK_CELL = {2: 5, 3: 10}  # triangle, tetrahedron


@lru_cache(maxsize=None)
def _sub_cells(dim: int, s: int) -> np.ndarray:
    """Connectivity of the lattice split of one reference element."""
    ref = reference_element(dim, s)
    index = {tuple(e[1:]): i for i, e in enumerate(ref.exponents)}
    cells = []
    if dim == 2:
        for i in range(s):
            for j in range(s - i):
                cells.append((index[(i, j)], index[(i + 1, j)],
                              index[(i, j + 1)]))
                if i + j <= s - 2:
                    cells.append((index[(i + 1, j)], index[(i + 1, j + 1)],
                                  index[(i, j + 1)]))
    else:
        for i in range(s):
            for j in range(s - i):
                for k in range(s - i - j):
                    o = (i, j, k)
                    a = index[(i + 1, j, k)]
                    b = index[(i, j + 1, k)]
                    c = index[(i, j, k + 1)]
                    cells.append((index[o], a, b, c))
                    if i + j + k <= s - 2:
                        d = index[(i + 1, j + 1, k)]
                        e = index[(i + 1, j, k + 1)]
                        f = index[(i, j + 1, k + 1)]
                        # octahedron split around the a-f diagonal
                        cells += [(a, f, b, c), (a, f, c, e),
                                  (a, f, e, d), (a, f, d, b)]
                    if i + j + k <= s - 3:
                        d = index[(i + 1, j + 1, k)]
                        e = index[(i + 1, j, k + 1)]
                        f = index[(i, j + 1, k + 1)]
                        g = index[(i + 1, j + 1, k + 1)]
                        cells.append((d, e, f, g))
    conn = np.array(cells, dtype=np.int64)
    # orient positively in reference coordinates
    pts = ref.nodes
    for row in conn:
        edges = pts[row[1:]] - pts[row[0]]
        if dim == 2:
            vol = edges[0, 0] * edges[1, 1] - edges[0, 1] * edges[1, 0]
        else:
            vol = np.linalg.det(edges)
        if vol < 0:
            row[1], row[2] = row[2], row[1]
    return conn


def write_vtk(mesh: HighOrderMesh, path, cell_data: dict[str, np.ndarray]
              | None = None, subdivisions: int | None = None):
    """Write the mesh as an unstructured grid of straight sub-cells.

    ``cell_data`` maps field names to per-element arrays of length
    ``mesh.num_elements``.
    """
    s = mesh.degree if subdivisions is None else int(subdivisions)
    if s < 1:
        raise ParameterError(f"subdivisions must be >= 1, got {s}")
    cell_data = cell_data or {}
    for name, values in cell_data.items():
        if " " in name or not name:
            raise ParameterError(f"invalid field name {name!r}")
        if np.shape(values) != (mesh.num_elements,):
            raise ParameterError(
                f"field {name!r} must have one value per element")

    sub_ref = reference_element(mesh.dim, s)
    points = evaluate_map(mesh, sub_ref.nodes)  # (E, P, dim)
    conn = _sub_cells(mesh.dim, s)
    n_pts = sub_ref.num_nodes
    n_sub = conn.shape[0]
    E = mesh.num_elements

    out = ["# vtk DataFile Version 3.0", "curved mesh", "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {E * n_pts} double"]
    flat = points.reshape(-1, mesh.dim)
    zero = " 0.0" if mesh.dim == 2 else ""
    for p in flat:
        out.append(" ".join(repr(float(v)) for v in p) + zero)

    nv = mesh.dim + 1
    out.append(f"CELLS {E * n_sub} {E * n_sub * (nv + 1)}")
    for e in range(E):
        base = e * n_pts
        for row in conn:
            out.append(f"{nv} " + " ".join(str(base + v) for v in row))
    out.append(f"CELL_TYPES {E * n_sub}")
    out.extend([str(_VTK_CELL[mesh.dim])] * (E * n_sub))

    if cell_data:
        out.append(f"CELL_DATA {E * n_sub}")
        for name, values in cell_data.items():
            out.append(f"SCALARS {name} double 1")
            out.append("LOOKUP_TABLE default")
            for v in np.asarray(values, dtype=float):
                out.extend([repr(float(v))] * n_sub)

    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
