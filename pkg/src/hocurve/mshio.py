"""Reading and writing a subset of the Gmsh MSH 4.1 ASCII format.

Supported content: one simplicial element family per file (triangles in 2D,
tetrahedra in 3D) at a single polynomial degree between 1 and 4, plus the
matching boundary elements (line segments in 2D, triangles in 3D) grouped
into entity blocks.  The boundary marker of a face is the first physical
tag of the entity its element block belongs to, falling back to the entity
tag when no physical tag is present.  Node blocks may be split across
entities; element and node tags may be sparse.

Writers emit one node block and one element block per boundary marker plus
one for the interior, with shortest round-trip decimal floats, so a file
survives read/write cycles byte for byte.

Unsupported features (binary mode, other element types, mixed degrees)
raise :class:`~hocurve.errors.UnsupportedFeatureError`; structural problems
raise :class:`~hocurve.errors.MeshFormatError` with the offending line.
"""

from __future__ import annotations

import numpy as np

from .errors import MeshFormatError, UnsupportedFeatureError
from .mesh import HighOrderMesh
from .reference import FACE_CORNERS, gmsh_node_order, reference_element

# (dim, degree) -> Gmsh element type id, for cells and boundary faces
_CELL_TYPES = {(2, 1): 2, (2, 2): 9, (2, 3): 21, (2, 4): 23,
               (3, 1): 4, (3, 2): 11, (3, 3): 29, (3, 4): 30}
_FACE_TYPES = {(2, 1): 1, (2, 2): 8, (2, 3): 26, (2, 4): 27,
               (3, 1): 2, (3, 2): 9, (3, 3): 21, (3, 4): 23}
_TYPE_INFO = {}  # type id -> (simplex dim, degree, node count)
for (d, p), t in _CELL_TYPES.items():
    _TYPE_INFO[t] = (d, p, reference_element(d, p).num_nodes)
for (d, p), t in _FACE_TYPES.items():
    _TYPE_INFO.setdefault(t, (d - 1, p, reference_element(d - 1, p).num_nodes))
_POINT_TYPE = 15


class _Cursor:
    """Line-wise reader that carries 1-based line numbers into errors."""

    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self) -> str:
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line:
                return line
        raise MeshFormatError("unexpected end of file", line=len(self.lines))

    def fail(self, message: str):
        raise MeshFormatError(message, line=self.pos)

    def ints(self, count: int) -> list[int]:
        parts = self.next().split()
        if len(parts) != count:
            self.fail(f"expected {count} integers, got {len(parts)}")
        try:
            return [int(p) for p in parts]
        except ValueError:
            self.fail(f"expected integers, got {parts!r}")


def _skip_section(cursor: _Cursor, name: str):
    end = f"$End{name}"
    while True:
        if cursor.next() == end:
            return


def _read_entities(cursor: _Cursor) -> dict[tuple[int, int], int]:
    """Map (entity dim, entity tag) to its marker (physical or entity tag)."""
    counts = cursor.ints(4)
    markers: dict[tuple[int, int], int] = {}
    for dim, n in enumerate(counts):
        for _ in range(n):
            parts = cursor.next().split()
            # points: tag x y z numPhys [tags]; others: tag bbox(6) numPhys ...
            head = 4 if dim == 0 else 7
            if len(parts) < head + 1:
                cursor.fail(f"malformed entity record of dimension {dim}")
            try:
                tag = int(parts[0])
                n_phys = int(parts[head])
                phys = [int(p) for p in parts[head + 1:head + 1 + n_phys]]
            except ValueError:
                cursor.fail("malformed entity record")
            if len(parts) < head + 1 + n_phys:
                cursor.fail("entity record shorter than its physical tag count")
            markers[(dim, tag)] = phys[0] if phys else tag
    if cursor.next() != "$EndEntities":
        cursor.fail("expected $EndEntities")
    return markers


def _read_nodes(cursor: _Cursor) -> tuple[dict[int, int], np.ndarray]:
    header = cursor.ints(4)
    n_blocks, n_nodes = header[0], header[1]
    tag_to_row: dict[int, int] = {}
    coords = np.empty((n_nodes, 3))
    row = 0
    for _ in range(n_blocks):
        block = cursor.ints(4)
        if block[2] not in (0, 1):
            cursor.fail("parametric flag must be 0 or 1")
        if block[2] == 1:
            raise UnsupportedFeatureError("parametric node blocks are not supported")
        count = block[3]
        tags = []
        for _ in range(count):
            parts = cursor.next().split()
            if len(parts) != 1:
                cursor.fail("expected one node tag per line")
            tags.append(int(parts[0]))
        for k in range(count):
            parts = cursor.next().split()
            if len(parts) != 3:
                cursor.fail("expected 3 node coordinates per line")
            try:
                coords[row] = [float(p) for p in parts]
            except ValueError:
                cursor.fail(f"bad coordinate triple {parts!r}")
            if tags[k] in tag_to_row:
                cursor.fail(f"duplicate node tag {tags[k]}")
            tag_to_row[tags[k]] = row
            row += 1
    if row != n_nodes:
        cursor.fail(f"node blocks held {row} nodes, header said {n_nodes}")
    if cursor.next() != "$EndNodes":
        cursor.fail("expected $EndNodes")
    return tag_to_row, coords


def _read_elements(cursor: _Cursor):
    """Blocks as (entity dim, entity tag, type, connectivity rows)."""
    header = cursor.ints(4)
    blocks = []
    for _ in range(header[0]):
        edim, etag, etype, count = cursor.ints(4)
        if edim == 0 or etype == _POINT_TYPE:
            for _ in range(count):
                cursor.next()
            continue
        if etype not in _TYPE_INFO:
            raise UnsupportedFeatureError(
                f"element type {etype} is not supported (line {cursor.pos})")
        n_nodes = _TYPE_INFO[etype][2]
        conn = np.empty((count, n_nodes), dtype=np.int64)
        for k in range(count):
            parts = cursor.next().split()
            if len(parts) != 1 + n_nodes:
                cursor.fail(f"element of type {etype} needs {n_nodes} nodes, "
                            f"got {len(parts) - 1}")
            try:
                conn[k] = [int(p) for p in parts[1:]]
            except ValueError:
                cursor.fail("bad element connectivity")
        blocks.append((edim, etag, etype, conn))
    if cursor.next() != "$EndElements":
        cursor.fail("expected $EndElements")
    return blocks


def read_msh(path) -> HighOrderMesh:
    """Parse an MSH 4.1 file into a mesh, reordering nodes internally."""
    with open(path) as fh:
        cursor = _Cursor(fh.read())

    entity_markers: dict[tuple[int, int], int] = {}
    tag_to_row = None
    coords3 = None
    blocks = None
    line = cursor.next()
    if line != "$MeshFormat":
        cursor.fail("file must start with $MeshFormat")
    parts = cursor.next().split()
    if len(parts) != 3:
        cursor.fail("malformed $MeshFormat header")
    if parts[0] != "4.1":
        raise UnsupportedFeatureError(
            f"only MSH version 4.1 is supported, got {parts[0]}")
    if parts[1] != "0":
        raise UnsupportedFeatureError("binary MSH files are not supported")
    if cursor.next() != "$EndMeshFormat":
        cursor.fail("expected $EndMeshFormat")

    while cursor.pos < len(cursor.lines):
        remaining = [ln for ln in cursor.lines[cursor.pos:] if ln.strip()]
        if not remaining:
            break
        section = cursor.next()
        if not section.startswith("$"):
            cursor.fail(f"expected a section header, got {section!r}")
        name = section[1:]
        if name == "Entities":
            entity_markers = _read_entities(cursor)
        elif name == "Nodes":
            tag_to_row, coords3 = _read_nodes(cursor)
        elif name == "Elements":
            blocks = _read_elements(cursor)
        else:
            _skip_section(cursor, name)

    if tag_to_row is None:
        raise MeshFormatError("file has no $Nodes section")
    if blocks is None:
        raise MeshFormatError("file has no $Elements section")
    if not blocks:
        raise MeshFormatError("file contains no supported elements")

    dim = max(_TYPE_INFO[b[2]][0] for b in blocks)
    if dim not in (2, 3):
        raise UnsupportedFeatureError("mesh must contain triangles or tetrahedra")
    cell_blocks = [b for b in blocks if _TYPE_INFO[b[2]][0] == dim]
    face_blocks = [b for b in blocks if _TYPE_INFO[b[2]][0] == dim - 1]
    degrees = {_TYPE_INFO[b[2]][1] for b in cell_blocks}
    if len(degrees) != 1:
        raise UnsupportedFeatureError(
            f"mixed element degrees {sorted(degrees)} are not supported")
    degree = degrees.pop()
    if any(_TYPE_INFO[b[2]][1] != degree for b in face_blocks):
        raise UnsupportedFeatureError(
            "boundary element degree differs from cell degree")

    remap = np.vectorize(tag_to_row.__getitem__, otypes=[np.int64])
    try:
        cells_file = np.vstack([remap(b[3]) for b in cell_blocks])
        face_rows = [remap(b[3]) for b in face_blocks]
    except KeyError as exc:
        raise MeshFormatError(f"element references unknown node tag {exc}")
    perm = gmsh_node_order(dim, degree)
    cells = cells_file[:, perm]

    # drop nodes no cell references (e.g. nodes of point entities)
    used = np.zeros(coords3.shape[0], dtype=bool)
    used[cells.ravel()] = True
    if not used.all():
        compact = np.cumsum(used) - 1
        cells = compact[cells]
        face_rows = [compact[r] for r in face_rows]
        coords3 = coords3[used]
    coords = coords3[:, :dim].copy()

    # straight-sided reference positions: affine lattice of each element's
    # corner vertices, first owner wins for shared nodes
    ref = reference_element(dim, degree)
    bary = ref.exponents / degree  # (n, dim+1)
    elem_ref = np.einsum("nc,ecd->end", bary, coords[cells[:, ref.corners]])
    owner = np.empty(coords.shape[0], dtype=np.int64)
    slot = np.empty(coords.shape[0], dtype=np.int64)
    for e in range(cells.shape[0] - 1, -1, -1):
        owner[cells[e]] = e
        slot[cells[e]] = np.arange(cells.shape[1])
    ref_coords = elem_ref[owner, slot]

    # owner lookup from corner vertex sets; file order puts corners first
    table: dict[frozenset, list] = {}
    for e, cell in enumerate(cells):
        cv = cell[ref.corners]
        for f, idx in enumerate(FACE_CORNERS[dim]):
            table.setdefault(frozenset(int(cv[i]) for i in idx), []).append((e, f))
    owners, local_faces, markers, seen_faces = [], [], [], set()
    for (edim, etag, etype, _), conn in zip(face_blocks, face_rows):
        marker = entity_markers.get((edim, etag), etag)
        for row in conn:
            key = frozenset(int(v) for v in row[:dim])
            hits = table.get(key)
            if not hits:
                raise MeshFormatError(
                    f"boundary element {sorted(key)} matches no cell face")
            if len(hits) != 1:
                raise MeshFormatError(
                    f"boundary element {sorted(key)} lies between two cells")
            if key in seen_faces:
                raise MeshFormatError(
                    f"boundary element {sorted(key)} appears twice")
            seen_faces.add(key)
            owners.append(hits[0][0])
            local_faces.append(hits[0][1])
            markers.append(marker)

    return HighOrderMesh(
        dim=dim, degree=degree, coords=coords, ref_coords=ref_coords,
        elements=cells,
        boundary_owner=np.array(owners, dtype=np.int64),
        boundary_local_face=np.array(local_faces, dtype=np.int64),
        boundary_marker=np.array(markers, dtype=np.int64))


def _bbox_line(points: np.ndarray) -> str:
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    lo3 = np.zeros(3)
    hi3 = np.zeros(3)
    lo3[:points.shape[1]] = lo
    hi3[:points.shape[1]] = hi
    return " ".join(repr(float(v)) for v in np.concatenate([lo3, hi3]))


def write_msh(mesh: HighOrderMesh, path):
    """Write a mesh as MSH 4.1 ASCII, one element block per boundary marker."""
    dim, degree = mesh.dim, mesh.degree
    perm = gmsh_node_order(dim, degree)
    face_perm = gmsh_node_order(dim - 1, degree)
    unique_markers = sorted(int(m) for m in np.unique(mesh.boundary_marker))
    face_nodes = mesh.boundary_face_nodes()

    out = ["$MeshFormat", "4.1 0 8", "$EndMeshFormat"]

    out.append("$Entities")
    counts = [0, 0, 0, 0]
    counts[dim - 1] = len(unique_markers)
    counts[dim] = 1
    out.append(" ".join(str(c) for c in counts))
    for m in unique_markers:
        nodes = np.unique(face_nodes[mesh.boundary_marker == m])
        out.append(f"{m} {_bbox_line(mesh.coords[nodes])} 1 {m} 0")
    out.append(f"1 {_bbox_line(mesh.coords)} 0 0")
    out.append("$EndEntities")

    n = mesh.num_nodes
    out += ["$Nodes", f"1 {n} 1 {n}", f"{dim} 1 0 {n}"]
    out += [str(t) for t in range(1, n + 1)]
    zero = "0.0"
    for p in mesh.coords:
        comps = [repr(float(v)) for v in p] + [zero] * (3 - dim)
        out.append(" ".join(comps))
    out.append("$EndNodes")

    n_faces = mesh.num_boundary_faces
    n_cells = mesh.num_elements
    out += ["$Elements",
            f"{len(unique_markers) + 1} {n_faces + n_cells} 1 {n_faces + n_cells}"]
    tag = 1
    ftype = _FACE_TYPES[(dim, degree)]
    for m in unique_markers:
        rows = np.flatnonzero(mesh.boundary_marker == m)
        out.append(f"{dim - 1} {m} {ftype} {rows.size}")
        for r in rows:
            gm = np.empty(face_nodes.shape[1], dtype=np.int64)
            gm[face_perm] = face_nodes[r]
            out.append(str(tag) + " " + " ".join(str(v + 1) for v in gm))
            tag += 1
    out.append(f"{dim} 1 {_CELL_TYPES[(dim, degree)]} {n_cells}")
    for cell in mesh.elements:
        gm = np.empty(cell.size, dtype=np.int64)
        gm[perm] = cell
        out.append(str(tag) + " " + " ".join(str(v + 1) for v in gm))
        tag += 1
    out.append("$EndElements")

    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
