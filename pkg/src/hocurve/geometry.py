"""Analytic boundary geometry: entities, projection, boundary targets.

The geometry a mesh is curved towards is a small set of analytic entities
(spheres, cylinders, planes, circles, fixed points).  A JSON config binds
them to the mesh:

``entities``
    list of records, each with a unique ``id``, a ``type`` and the shape
    parameters: sphere/circle: ``center``, ``radius`` (circle in 3D also
    ``axis``); cylinder: ``point``, ``axis``, ``radius``; plane: ``point``,
    ``normal`` (in 2D a plane is a line); point: ``position``.
``groups``
    mapping of boundary marker (as decimal string) to entity id.
``junctions`` (optional)
    records ``{"markers": [..], "entity": id}`` that pin nodes incident to
    exactly that set of markers to a specific entity, resolving corners and
    curves where several boundary groups meet.
``periodic`` (optional)
    records ``{"source": marker, "target": marker, "axis": [x,y,z],
    "angle": radians}``; target-side node targets are replaced by the
    rotated image of the source-side targets, so the constraint couples the
    two sides instead of fixing them.

Boundary nodes are classified once per evaluation: a node incident to faces
of a single group projects onto that group's entity; nodes on several groups
take the junction entry for their exact marker set, else the unique entity
of lowest topological dimension (curves and points win over surfaces).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    GeometryConfigError,
    PeriodicMatchingError,
    ProjectionSingularityError,
)
from .mesh import HighOrderMesh, linear_face_measures
from .quadrature import simplex_rule
from .reference import reference_element

_REF_FACE_MEASURE = {2: 1.0, 3: 0.5}  # segment, triangle


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float

    def topo_dim(self, ambient: int) -> int:
        return 2

    def project(self, points: np.ndarray) -> np.ndarray:
        rel = points - self.center
        dist = np.linalg.norm(rel, axis=1)
        if np.any(dist < 1e-12 * self.radius):
            raise ProjectionSingularityError(
                "projection onto sphere requested at its center")
        return self.center + self.radius * rel / dist[:, None]


@dataclass(frozen=True)
class Circle:
    center: np.ndarray
    radius: float
    axis: np.ndarray | None = None  # required in 3D

    def topo_dim(self, ambient: int) -> int:
        return 1

    def project(self, points: np.ndarray) -> np.ndarray:
        rel = points - self.center
        if self.axis is not None:
            rel = rel - np.outer(rel @ self.axis, self.axis)
        dist = np.linalg.norm(rel, axis=1)
        if np.any(dist < 1e-12 * self.radius):
            raise ProjectionSingularityError(
                "projection onto circle requested on its axis")
        return self.center + self.radius * rel / dist[:, None]


@dataclass(frozen=True)
class Cylinder:
    point: np.ndarray
    axis: np.ndarray
    radius: float

    def topo_dim(self, ambient: int) -> int:
        return 2

    def project(self, points: np.ndarray) -> np.ndarray:
        rel = points - self.point
        axial = rel @ self.axis
        radial = rel - np.outer(axial, self.axis)
        dist = np.linalg.norm(radial, axis=1)
        if np.any(dist < 1e-12 * self.radius):
            raise ProjectionSingularityError(
                "projection onto cylinder requested on its axis")
        return (self.point + np.outer(axial, self.axis)
                + self.radius * radial / dist[:, None])


@dataclass(frozen=True)
class Plane:
    point: np.ndarray
    normal: np.ndarray

    def topo_dim(self, ambient: int) -> int:
        return ambient - 1

    def project(self, points: np.ndarray) -> np.ndarray:
        off = (points - self.point) @ self.normal
        return points - np.outer(off, self.normal)


@dataclass(frozen=True)
class FixedPoint:
    position: np.ndarray

    def topo_dim(self, ambient: int) -> int:
        return 0

    def project(self, points: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.position, points.shape).copy()


def _unit(vec, what: str) -> np.ndarray:
    v = np.asarray(vec, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise GeometryConfigError(f"{what} must be a nonzero vector")
    return v / n


def _vec(record: dict, key: str, dim: int, entity_id: str) -> np.ndarray:
    try:
        v = np.asarray(record[key], dtype=float)
    except KeyError:
        raise GeometryConfigError(f"entity '{entity_id}' misses field '{key}'")
    if v.shape != (dim,):
        raise GeometryConfigError(
            f"entity '{entity_id}' field '{key}' must have {dim} components")
    return v


def _build_entity(record: dict, dim: int):
    eid = record.get("id", "<missing id>")
    etype = record.get("type")
    radius = record.get("radius", None)
    if etype in ("sphere", "circle", "cylinder"):
        if radius is None or radius <= 0:
            raise GeometryConfigError(f"entity '{eid}' needs a positive radius")
    if etype == "sphere":
        if dim != 3:
            raise GeometryConfigError("sphere entities require a 3D mesh")
        return Sphere(_vec(record, "center", dim, eid), float(radius))
    if etype == "circle":
        axis = None
        if dim == 3:
            axis = _unit(_vec(record, "axis", dim, eid), f"axis of '{eid}'")
        return Circle(_vec(record, "center", dim, eid), float(radius), axis)
    if etype == "cylinder":
        if dim != 3:
            raise GeometryConfigError("cylinder entities require a 3D mesh")
        return Cylinder(_vec(record, "point", dim, eid),
                        _unit(_vec(record, "axis", dim, eid), f"axis of '{eid}'"),
                        float(radius))
    if etype == "plane":
        return Plane(_vec(record, "point", dim, eid),
                     _unit(_vec(record, "normal", dim, eid), f"normal of '{eid}'"))
    if etype == "point":
        return FixedPoint(_vec(record, "position", dim, eid))
    raise GeometryConfigError(f"entity '{eid}' has unknown type '{etype}'")


@dataclass(frozen=True)
class PeriodicPair:
    source: int
    target: int
    axis: np.ndarray
    angle: float


@dataclass
class GeometryModel:
    """Validated analytic geometry bound to boundary markers."""

    dim: int
    entities: dict[str, object]
    groups: dict[int, str]
    junctions: dict[frozenset, str] = field(default_factory=dict)
    periodic: list[PeriodicPair] = field(default_factory=list)

    @classmethod
    def from_dict(cls, config: dict, dim: int) -> "GeometryModel":
        entities: dict[str, object] = {}
        for record in config.get("entities", []):
            eid = record.get("id")
            if not eid:
                raise GeometryConfigError("every entity needs an 'id'")
            if eid in entities:
                raise GeometryConfigError(f"duplicate entity id '{eid}'")
            entities[eid] = _build_entity(record, dim)
        groups: dict[int, str] = {}
        for marker, eid in config.get("groups", {}).items():
            if eid not in entities:
                raise GeometryConfigError(
                    f"group for marker {marker} references unknown entity '{eid}'")
            groups[int(marker)] = eid
        junctions: dict[frozenset, str] = {}
        for record in config.get("junctions", []):
            eid = record.get("entity")
            if eid not in entities:
                raise GeometryConfigError(
                    f"junction references unknown entity '{eid}'")
            junctions[frozenset(int(m) for m in record["markers"])] = eid
        periodic = []
        for record in config.get("periodic", []):
            axis = _unit(record.get("axis", [0.0, 0.0, 1.0]), "periodic axis")
            if axis.shape != (3,):
                raise GeometryConfigError("periodic axis must have 3 components")
            if dim == 2 and (abs(axis[0]) > 1e-14 or abs(axis[1]) > 1e-14):
                raise GeometryConfigError(
                    "2D periodicity requires the rotation axis to be +/- z")
            periodic.append(PeriodicPair(int(record["source"]), int(record["target"]),
                                         axis, float(record["angle"])))
        return cls(dim=dim, entities=entities, groups=groups,
                   junctions=junctions, periodic=periodic)

    @classmethod
    def from_json(cls, path, dim: int) -> "GeometryModel":
        with open(path) as fh:
            try:
                config = json.load(fh)
            except json.JSONDecodeError as exc:
                raise GeometryConfigError(f"invalid geometry JSON: {exc}") from exc
        return cls.from_dict(config, dim)


def rotation_matrix(axis: np.ndarray, angle: float, dim: int) -> np.ndarray:
    """Rotation by ``angle`` about ``axis`` (Rodrigues), reduced to 2D when asked."""
    c, s = np.cos(angle), np.sin(angle)
    if dim == 2:
        sign = 1.0 if axis[2] > 0 else -1.0
        return np.array([[c, -sign * s], [sign * s, c]])
    a = axis / np.linalg.norm(axis)
    k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + s * k + (1 - c) * (k @ k)


def classify_boundary_nodes(mesh: HighOrderMesh, model: GeometryModel
                            ) -> tuple[np.ndarray, list[str]]:
    """Assign each boundary node to an entity.

    Returns (node ids (B,), entity id per node).  Raises when a marker has
    no group or a multi-group node cannot be resolved.
    """
    face_nodes = mesh.boundary_face_nodes()
    node_markers: dict[int, set[int]] = {}
    for row, marker in zip(face_nodes, mesh.boundary_marker):
        m = int(marker)
        if m not in model.groups:
            raise GeometryConfigError(f"boundary marker {m} has no geometry group")
        for n in row:
            node_markers.setdefault(int(n), set()).add(m)

    ids = np.array(sorted(node_markers), dtype=np.int64)
    assigned: list[str] = []
    for n in ids:
        markers = node_markers[int(n)]
        ents = {model.groups[m] for m in markers}
        if len(ents) == 1:
            assigned.append(next(iter(ents)))
            continue
        junction = model.junctions.get(frozenset(markers))
        if junction is not None:
            assigned.append(junction)
            continue
        dims = {e: model.entities[e].topo_dim(mesh.dim) for e in ents}
        lowest = min(dims.values())
        cands = [e for e, d in dims.items() if d == lowest]
        if len(cands) == 1:
            assigned.append(cands[0])
            continue
        raise GeometryConfigError(
            f"boundary node {int(n)} lies on markers {sorted(markers)} mapping "
            f"to entities {sorted(cands)}; add a junction entry to resolve it")
    return ids, assigned


@dataclass
class BoundaryTarget:
    """Target positions for the boundary nodes of one mesh state."""

    node_ids: np.ndarray
    positions: np.ndarray

    def full(self, mesh: HighOrderMesh) -> np.ndarray:
        """Targets scattered into an (N, dim) array; interior rows equal the
        current coordinates so differences vanish there."""
        out = mesh.coords.copy()
        out[self.node_ids] = self.positions
        return out


def match_periodic_nodes(mesh: HighOrderMesh, pair: PeriodicPair
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Pair source-side and target-side boundary nodes of a periodic pair.

    Matching uses the straight-sided node positions (frozen at construction),
    rotating the source side onto the target side and taking the nearest
    node within 1e-6 of the mesh length scale.  The pairing must be one to
    one.
    """
    face_nodes = mesh.boundary_face_nodes()
    src = np.unique(face_nodes[mesh.boundary_marker == pair.source])
    tgt = np.unique(face_nodes[mesh.boundary_marker == pair.target])
    if src.size == 0 or tgt.size == 0:
        raise PeriodicMatchingError(
            f"periodic pair {pair.source}->{pair.target}: a side has no faces")
    if src.size != tgt.size:
        raise PeriodicMatchingError(
            f"periodic pair {pair.source}->{pair.target}: side node counts "
            f"differ ({src.size} vs {tgt.size})")
    rot = rotation_matrix(pair.axis, pair.angle, mesh.dim)
    rotated = mesh.ref_coords[src] @ rot.T
    tol = 1e-6 * mesh.bbox_diagonal()
    dist, idx = cKDTree(mesh.ref_coords[tgt]).query(rotated)
    if np.any(dist > tol) or np.unique(idx).size != idx.size:
        raise PeriodicMatchingError(
            f"periodic pair {pair.source}->{pair.target}: no one-to-one match "
            f"within {tol:g}")
    return src, tgt[idx]


def evaluate_boundary_target(mesh: HighOrderMesh, model: GeometryModel
                             ) -> BoundaryTarget:
    """Project boundary nodes onto their entities, then apply periodicity.

    The result depends on the current node positions (the projection is a
    fixed-point map); callers freeze it while solving each subproblem.
    """
    ids, assigned = classify_boundary_nodes(mesh, model)
    positions = np.empty((ids.size, mesh.dim))
    order = {int(n): k for k, n in enumerate(ids)}
    by_entity: dict[str, list[int]] = {}
    for k, eid in enumerate(assigned):
        by_entity.setdefault(eid, []).append(k)
    for eid, rows in by_entity.items():
        rows = np.array(rows)
        positions[rows] = model.entities[eid].project(mesh.coords[ids[rows]])
    for pair in model.periodic:
        src, tgt = match_periodic_nodes(mesh, pair)
        rot = rotation_matrix(pair.axis, pair.angle, mesh.dim)
        src_rows = np.array([order[int(n)] for n in src])
        tgt_rows = np.array([order[int(n)] for n in tgt])
        positions[tgt_rows] = positions[src_rows] @ rot.T
    return BoundaryTarget(node_ids=ids, positions=positions)


def boundary_error_norm(mesh: HighOrderMesh, target: BoundaryTarget,
                        normalized: bool = True) -> float:
    """L2 norm of (trace of the map minus its target) over the initial boundary.

    With ``normalized`` the norm is divided by the L2 norm of the constant 1
    on the same boundary, giving a root-mean-square distance.
    """
    if mesh.num_boundary_faces == 0:
        return 0.0
    ref = reference_element(mesh.dim - 1, mesh.degree)
    rule = simplex_rule(mesh.dim - 1, 2 * mesh.degree)
    vals = ref.shape_values(rule.points)  # (Q, n)
    face_nodes = mesh.boundary_face_nodes()
    diff = mesh.coords[face_nodes] - target.full(mesh)[face_nodes]  # (F, n, d)
    err = np.einsum("qn,fnd->fqd", vals, diff)
    sq = np.einsum("fqd,fqd->fq", err, err)
    measures = linear_face_measures(mesh)
    scale = measures / _REF_FACE_MEASURE[mesh.dim]
    total = float(np.einsum("q,fq,f->", rule.weights, sq, scale))
    if not normalized:
        return float(np.sqrt(total))
    return float(np.sqrt(total / measures.sum()))
