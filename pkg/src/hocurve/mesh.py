"""High-order simplicial meshes.

A mesh stores two coordinate sets over the same node lattice: ``coords``,
the current (possibly curved) positions, and ``ref_coords``, the node
positions of the straight-sided initial mesh.  ``ref_coords`` is frozen when
the mesh is built and defines the domain of integration for every functional
in the package, so distortion is always measured against the initial mesh
rather than against the reference simplex.

Boundary faces are stored as (owner element, local face, marker) triples;
their node lists are derived from the owner's connectivity with outward
orientation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateElementError, ParameterError
from .reference import FACE_CORNERS, reference_element

SUPPORTED_DEGREES = (1, 2, 3, 4)


@dataclass(eq=False)
class HighOrderMesh:
    dim: int
    degree: int
    coords: np.ndarray
    ref_coords: np.ndarray
    elements: np.ndarray
    boundary_owner: np.ndarray
    boundary_local_face: np.ndarray
    boundary_marker: np.ndarray

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ParameterError(f"unsupported mesh dimension {self.dim}")
        if self.degree not in SUPPORTED_DEGREES:
            raise ParameterError(f"unsupported degree {self.degree}")
        ref = reference_element(self.dim, self.degree)
        if self.elements.ndim != 2 or self.elements.shape[1] != ref.num_nodes:
            raise ParameterError(
                f"element connectivity must have {ref.num_nodes} nodes per "
                f"element for degree {self.degree}, got {self.elements.shape}")
        if self.coords.shape != self.ref_coords.shape:
            raise ParameterError("coords and ref_coords shapes differ")
        if self.coords.shape[1] != self.dim:
            raise ParameterError("coordinate dimension mismatch")
        dets = np.linalg.det(linear_jacobians(self))
        if np.any(dets <= 0):
            bad = int(np.argmin(dets))
            raise DegenerateElementError(
                f"element {bad} has non-positive linear volume {dets[bad]:g}")
        nf = self.boundary_owner.shape[0]
        if self.boundary_local_face.shape[0] != nf or self.boundary_marker.shape[0] != nf:
            raise ParameterError("inconsistent boundary face arrays")
        if nf and (self.boundary_local_face.min() < 0
                   or self.boundary_local_face.max() > self.dim):
            raise ParameterError("boundary local face index out of range")

    @property
    def num_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def num_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def num_boundary_faces(self) -> int:
        return self.boundary_owner.shape[0]

    @property
    def reference(self):
        return reference_element(self.dim, self.degree)

    def with_coords(self, coords: np.ndarray) -> "HighOrderMesh":
        """Same mesh with replaced current positions."""
        return replace(self, coords=np.asarray(coords, dtype=float))

    def corner_vertices(self) -> np.ndarray:
        """Global node ids of element corners, (E, dim+1)."""
        return self.elements[:, self.reference.corners]

    def boundary_face_nodes(self) -> np.ndarray:
        """Global node ids of each boundary face, (F, nodes_per_face).

        Face-lattice ordering with outward orientation wrt the owner.
        """
        ref = self.reference
        tables = [ref.face_node_table(f) for f in range(ref.num_faces)]
        out = np.empty((self.num_boundary_faces, tables[0].shape[0]), dtype=np.int64)
        for i, (e, f) in enumerate(zip(self.boundary_owner, self.boundary_local_face)):
            out[i] = self.elements[e][tables[f]]
        return out

    def boundary_node_ids(self) -> np.ndarray:
        """Sorted unique node ids lying on the boundary."""
        if self.num_boundary_faces == 0:
            return np.empty(0, dtype=np.int64)
        return np.unique(self.boundary_face_nodes())

    def bbox_diagonal(self) -> float:
        """Diagonal of the initial mesh's bounding box (mesh length scale)."""
        span = self.ref_coords.max(axis=0) - self.ref_coords.min(axis=0)
        return float(np.linalg.norm(span))


def linear_jacobians(mesh: HighOrderMesh) -> np.ndarray:
    """Affine Jacobians of the initial straight-sided elements, (E, dim, dim)."""
    corners = mesh.ref_coords[mesh.corner_vertices()]
    return np.transpose(corners[:, 1:, :] - corners[:, :1, :], (0, 2, 1))


def total_volume(mesh: HighOrderMesh) -> float:
    """Measure of the initial mesh."""
    ref_measure = {2: 0.5, 3: 1.0 / 6.0}[mesh.dim]
    return float(np.sum(np.linalg.det(linear_jacobians(mesh)))) * ref_measure


def linear_face_measures(mesh: HighOrderMesh) -> np.ndarray:
    """Lengths (2D) or areas (3D) of the initial boundary faces."""
    ref = mesh.reference
    face_corner_slots = [np.array(c) for c in FACE_CORNERS[mesh.dim]]
    corners_all = mesh.corner_vertices()
    out = np.empty(mesh.num_boundary_faces)
    for i, (e, f) in enumerate(zip(mesh.boundary_owner, mesh.boundary_local_face)):
        pts = mesh.ref_coords[corners_all[e][face_corner_slots[f]]]
        if mesh.dim == 2:
            out[i] = np.linalg.norm(pts[1] - pts[0])
        else:
            out[i] = 0.5 * np.linalg.norm(np.cross(pts[1] - pts[0], pts[2] - pts[0]))
    return out


def total_boundary_measure(mesh: HighOrderMesh) -> float:
    return float(linear_face_measures(mesh).sum())


def evaluate_map(mesh: HighOrderMesh, ref_points: np.ndarray,
                 element_ids: np.ndarray | None = None,
                 with_jacobian: bool = False):
    """Evaluate the current map on a batch of elements.

    ``ref_points`` (Q, dim) is shared by all requested elements.  Returns
    positions (E_sel, Q, dim) and, when requested, the Jacobian of the map
    with respect to the initial straight-sided element, (E_sel, Q, dim, dim).
    """
    ref = mesh.reference
    pts = np.atleast_2d(np.asarray(ref_points, dtype=float))
    if element_ids is None:
        element_ids = np.arange(mesh.num_elements)
    conn = mesh.elements[element_ids]
    xe = mesh.coords[conn]  # (E, n, dim)
    vals = ref.shape_values(pts)  # (Q, n)
    pos = np.einsum("qn,end->eqd", vals, xe)
    if not with_jacobian:
        return pos
    grads = ref.shape_gradients(pts)  # (Q, n, dim)
    a_ref = np.einsum("qnc,end->eqdc", grads, xe)  # d x / d xi
    a_lin = linear_jacobians(mesh)[element_ids]
    try:
        a_lin_inv = np.linalg.inv(a_lin)
    except np.linalg.LinAlgError as exc:
        raise DegenerateElementError("singular linear element map") from exc
    jac = np.einsum("eqdc,ecf->eqdf", a_ref, a_lin_inv)
    return pos, jac


def _build_lattice_mesh(mesh: HighOrderMesh, degree: int) -> HighOrderMesh:
    """Re-sample a mesh onto the degree-``degree`` lattice.

    New node positions come from evaluating the current map; straight-sided
    positions come from the affine map of each initial element.  Shared
    lattice nodes are identified exactly through their (vertex id, exponent)
    signature, and the lowest-numbered owner element provides the sampled
    coordinates so the result does not depend on floating-point round-off
    differences between neighbouring elements.
    """
    new_ref = reference_element(mesh.dim, degree)
    exps = new_ref.exponents
    corner_ids = mesh.corner_vertices()

    key_to_id: dict[tuple, int] = {}
    elem_conn = np.empty((mesh.num_elements, new_ref.num_nodes), dtype=np.int64)
    owner_rows: list[tuple[int, int]] = []  # (element, local lattice slot)
    for e in range(mesh.num_elements):
        verts = corner_ids[e]
        for loc in range(new_ref.num_nodes):
            key = tuple(sorted((int(verts[c]), int(exps[loc, c]))
                               for c in range(mesh.dim + 1) if exps[loc, c] > 0))
            idx = key_to_id.get(key)
            if idx is None:
                idx = len(key_to_id)
                key_to_id[key] = idx
                owner_rows.append((e, loc))
            elem_conn[e, loc] = idx

    owner_rows_arr = np.array(owner_rows, dtype=np.int64)
    num_new = owner_rows_arr.shape[0]

    # evaluate per element once; pick out rows owned by each element
    positions = evaluate_map(mesh, new_ref.nodes)
    coords = np.empty((num_new, mesh.dim))
    coords[:] = positions[owner_rows_arr[:, 0], owner_rows_arr[:, 1]]

    lam0 = 1.0 - new_ref.nodes.sum(axis=1)
    bary = np.column_stack([lam0, new_ref.nodes])  # (n_new, dim+1)
    corner_ref = mesh.ref_coords[corner_ids]  # (E, dim+1, dim)
    ref_all = np.einsum("nc,ecd->end", bary, corner_ref)
    ref_coords = np.empty_like(coords)
    ref_coords[:] = ref_all[owner_rows_arr[:, 0], owner_rows_arr[:, 1]]

    return HighOrderMesh(
        dim=mesh.dim, degree=degree, coords=coords, ref_coords=ref_coords,
        elements=elem_conn,
        boundary_owner=mesh.boundary_owner.copy(),
        boundary_local_face=mesh.boundary_local_face.copy(),
        boundary_marker=mesh.boundary_marker.copy(),
    )


def interpolate_to_degree(mesh: HighOrderMesh, degree: int) -> HighOrderMesh:
    """Interpolate the current map onto a degree-``degree`` lattice.

    Exact (to round-off) whenever the current map is a polynomial of degree
    at most ``degree`` per element.  Boundary markers carry over unchanged.
    """
    if degree not in (2, 3, 4):
        raise ParameterError(f"target degree must be 2, 3 or 4, got {degree}")
    return _build_lattice_mesh(mesh, degree)


def mesh_from_linear(vertices: np.ndarray, cells: np.ndarray,
                     face_corners: np.ndarray, face_markers: np.ndarray,
                     degree: int = 1) -> HighOrderMesh:
    """Build a mesh of the requested degree from linear-mesh arrays.

    ``face_corners`` lists boundary faces by corner vertex ids in any order;
    each must match exactly one element face.  Higher-degree meshes start
    with all lattice nodes on the straight elements (identity map).
    """
    vertices = np.asarray(vertices, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    dim = vertices.shape[1]
    if cells.shape[1] != dim + 1:
        raise ParameterError("cells must be simplices matching vertex dimension")

    face_table: dict[frozenset, list[tuple[int, int]]] = {}
    for e in range(cells.shape[0]):
        for f, corners in enumerate(FACE_CORNERS[dim]):
            key = frozenset(int(cells[e, c]) for c in corners)
            face_table.setdefault(key, []).append((e, f))

    owners, locals_, markers = [], [], []
    for row, marker in zip(np.asarray(face_corners, dtype=np.int64),
                           np.asarray(face_markers, dtype=np.int64)):
        key = frozenset(int(v) for v in row)
        hits = face_table.get(key, [])
        if len(hits) != 1:
            raise ParameterError(
                f"boundary face {sorted(key)} is shared by {len(hits)} elements, "
                "expected exactly one")
        owners.append(hits[0][0])
        locals_.append(hits[0][1])
        markers.append(int(marker))

    linear = HighOrderMesh(
        dim=dim, degree=1, coords=vertices.copy(), ref_coords=vertices.copy(),
        elements=cells,
        boundary_owner=np.array(owners, dtype=np.int64),
        boundary_local_face=np.array(locals_, dtype=np.int64),
        boundary_marker=np.array(markers, dtype=np.int64),
    )
    if degree == 1:
        return linear
    return _build_lattice_mesh(linear, degree)
