"""Reference simplices with equispaced Lagrange node lattices.

The reference triangle is {(u, v): u, v >= 0, u + v <= 1} and the reference
tetrahedron its 3D analogue.  Nodes of the degree-p lattice sit at barycentric
multiples of 1/p and are stored in a fixed row-major ordering over the
barycentric exponents (see :func:`lattice_exponents`).  All connectivity in
the package refers to this internal ordering; translation to the ordering
used by Gmsh files happens in the mesh I/O layer via the permutations built
from :func:`gmsh_node_order`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np

from .errors import ParameterError

# Corner tuples of each (dim-1)-face, ordered so the induced normal points
# out of the element (reference element is positively oriented).
FACE_CORNERS = {
    2: ((0, 1), (1, 2), (2, 0)),
    3: ((0, 2, 1), (0, 1, 3), (0, 3, 2), (1, 2, 3)),
}


def lattice_exponents(dim: int, degree: int) -> np.ndarray:
    """Barycentric exponent rows (alpha_0 .. alpha_dim), sum = degree.

    Ordering is row-major over the coordinate exponents: the exponent of the
    last reference coordinate varies slowest.  Node coordinates follow as
    ``alpha[:, 1:] / degree``.
    """
    if dim not in (1, 2, 3):
        raise ParameterError(f"unsupported dimension {dim}")
    if degree < 0:
        raise ParameterError(f"negative degree {degree}")
    rows = []
    if dim == 1:
        for i in range(degree + 1):
            rows.append((degree - i, i))
    elif dim == 2:
        for j in range(degree + 1):
            for i in range(degree + 1 - j):
                rows.append((degree - i - j, i, j))
    else:
        for k in range(degree + 1):
            for j in range(degree + 1 - k):
                for i in range(degree + 1 - j - k):
                    rows.append((degree - i - j - k, i, j, k))
    return np.array(rows, dtype=np.int64)


def _factor_table(degree: int, lam: np.ndarray, derivative: bool) -> np.ndarray:
    """Values (or derivatives) of the 1D lattice factors P_a at ``lam``.

    P_0 = 1 and P_a(s) = prod_{j<a} (degree*s - j)/(a - j); the degree-p
    simplex basis is a product of one factor per barycentric coordinate.
    """
    out = np.zeros((degree + 1, lam.shape[0]))
    if not derivative:
        out[0] = 1.0
    for a in range(1, degree + 1):
        if not derivative:
            val = np.ones_like(lam)
            for j in range(a):
                val = val * (degree * lam - j) / (a - j)
            out[a] = val
        else:
            total = np.zeros_like(lam)
            for j in range(a):
                term = np.full_like(lam, degree / (a - j))
                for l in range(a):
                    if l != j:
                        term = term * (degree * lam - l) / (a - l)
                total += term
            out[a] = total
    return out


@dataclass(eq=False)
class ReferenceElement:
    """Lagrange simplex element on the equispaced lattice."""

    dim: int
    degree: int
    exponents: np.ndarray = field(init=False, repr=False)
    nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.degree < 1:
            raise ParameterError(f"degree must be >= 1, got {self.degree}")
        self.exponents = lattice_exponents(self.dim, self.degree)
        self.nodes = self.exponents[:, 1:].astype(float) / self.degree
        self._index = {tuple(row): i for i, row in enumerate(self.exponents)}

    @property
    def num_nodes(self) -> int:
        return comb(self.degree + self.dim, self.dim)

    @property
    def corners(self) -> np.ndarray:
        """Local indices of the dim+1 corner nodes, in barycentric-slot order."""
        idx = []
        for c in range(self.dim + 1):
            key = [0] * (self.dim + 1)
            key[c] = self.degree
            idx.append(self._index[tuple(key)])
        return np.array(idx, dtype=np.int64)

    def local_index(self, exponent_row) -> int:
        return self._index[tuple(int(e) for e in exponent_row)]

    def _barycentric(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lam0 = 1.0 - pts.sum(axis=1)
        return np.column_stack([lam0, pts])

    def shape_values(self, points: np.ndarray) -> np.ndarray:
        """Basis values, shape (num_points, num_nodes)."""
        lam = self._barycentric(points)
        tables = [_factor_table(self.degree, lam[:, c], False)
                  for c in range(self.dim + 1)]
        vals = np.ones((self.exponents.shape[0], lam.shape[0]))
        for c in range(self.dim + 1):
            vals *= tables[c][self.exponents[:, c]]
        return vals.T

    def shape_gradients(self, points: np.ndarray) -> np.ndarray:
        """Basis gradients wrt reference coordinates, (num_points, num_nodes, dim)."""
        lam = self._barycentric(points)
        ncomp = self.dim + 1
        val_t = [_factor_table(self.degree, lam[:, c], False) for c in range(ncomp)]
        der_t = [_factor_table(self.degree, lam[:, c], True) for c in range(ncomp)]
        n_nodes = self.exponents.shape[0]
        # gradient wrt each barycentric coordinate first
        bar = np.empty((ncomp, n_nodes, lam.shape[0]))
        for c in range(ncomp):
            term = der_t[c][self.exponents[:, c]]
            for c2 in range(ncomp):
                if c2 != c:
                    term = term * val_t[c2][self.exponents[:, c2]]
            bar[c] = term
        # lambda_0 = 1 - sum(xi): d/dxi_d = d/dlam_{d+1} - d/dlam_0
        grads = np.empty((lam.shape[0], n_nodes, self.dim))
        for d in range(self.dim):
            grads[:, :, d] = (bar[d + 1] - bar[0]).T
        return grads

    def face_node_table(self, face: int) -> np.ndarray:
        """Local indices of the lattice nodes on a face.

        Entries are ordered like the lattice of the (dim-1)-dimensional
        reference element whose barycentric slots are the face corners in
        :data:`FACE_CORNERS` order (outward orientation).
        """
        corners = FACE_CORNERS[self.dim][face]
        face_exps = lattice_exponents(self.dim - 1, self.degree)
        table = np.empty(face_exps.shape[0], dtype=np.int64)
        for r, beta in enumerate(face_exps):
            alpha = [0] * (self.dim + 1)
            for slot, corner in enumerate(corners):
                alpha[corner] = int(beta[slot])
            table[r] = self._index[tuple(alpha)]
        return table

    @property
    def num_faces(self) -> int:
        return self.dim + 1


@lru_cache(maxsize=None)
def reference_element(dim: int, degree: int) -> ReferenceElement:
    return ReferenceElement(dim, degree)


# ---------------------------------------------------------------------------
# Gmsh node ordering.  Gmsh lists principal vertices first, then edge nodes
# along each directed edge, then face-interior nodes recursively, then
# volume-interior nodes recursively.

_GMSH_TRI_EDGES = ((0, 1), (1, 2), (2, 0))
_GMSH_TET_EDGES = ((0, 1), (1, 2), (2, 0), (3, 0), (3, 2), (3, 1))
_GMSH_TET_FACES = ((0, 2, 1), (0, 1, 3), (0, 3, 2), (3, 2, 1))


def _gmsh_line(p: int) -> list[tuple[int, ...]]:
    if p == 0:
        return [(0, 0)]
    rows = [(p, 0), (0, p)]
    rows += [(p - i, i) for i in range(1, p)]
    return rows


def _gmsh_tri(p: int) -> list[tuple[int, ...]]:
    if p == 0:
        return [(0, 0, 0)]
    rows = [(p, 0, 0), (0, p, 0), (0, 0, p)]
    for s, t in _GMSH_TRI_EDGES:
        for i in range(1, p):
            alpha = [0, 0, 0]
            alpha[s] = p - i
            alpha[t] = i
            rows.append(tuple(alpha))
    if p >= 3:
        rows += [tuple(b + 1 for b in beta) for beta in _gmsh_tri(p - 3)]
    return rows


def _gmsh_tet(p: int) -> list[tuple[int, ...]]:
    if p == 0:
        return [(0, 0, 0, 0)]
    rows = [(p, 0, 0, 0), (0, p, 0, 0), (0, 0, p, 0), (0, 0, 0, p)]
    for s, t in _GMSH_TET_EDGES:
        for i in range(1, p):
            alpha = [0, 0, 0, 0]
            alpha[s] = p - i
            alpha[t] = i
            rows.append(tuple(alpha))
    if p >= 3:
        for face in _GMSH_TET_FACES:
            for gamma in (tuple(b + 1 for b in beta) for beta in _gmsh_tri(p - 3)):
                alpha = [0, 0, 0, 0]
                for slot, corner in enumerate(face):
                    alpha[corner] = gamma[slot]
                rows.append(tuple(alpha))
    if p >= 4:
        rows += [tuple(b + 1 for b in beta) for beta in _gmsh_tet(p - 4)]
    return rows


@lru_cache(maxsize=None)
def gmsh_node_order(dim: int, degree: int) -> np.ndarray:
    """Permutation taking Gmsh file node order to internal lattice order.

    ``internal = file_nodes[gmsh_node_order(dim, degree)]`` reorders a node
    tuple read from a Gmsh element line into internal ordering; the inverse
    permutation is used when writing.
    """
    if dim == 1:
        rows = _gmsh_line(degree)
    elif dim == 2:
        rows = _gmsh_tri(degree)
    elif dim == 3:
        rows = _gmsh_tet(degree)
    else:
        raise ParameterError(f"unsupported dimension {dim}")
    ref = reference_element(dim, degree)
    perm = np.empty(len(rows), dtype=np.int64)
    for gmsh_slot, row in enumerate(rows):
        perm[ref.local_index(row)] = gmsh_slot
    return perm
