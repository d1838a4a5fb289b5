"""Mesh container: lattice construction, map evaluation, degree interpolation."""

from __future__ import annotations

from math import comb

import numpy as np
import pytest

from hocurve.errors import DegenerateElementError, ParameterError
from hocurve.mesh import (
    evaluate_map,
    interpolate_to_degree,
    linear_face_measures,
    mesh_from_linear,
    total_boundary_measure,
    total_volume,
)


def square_mesh(degree=1):
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    cells = np.array([[0, 1, 2], [0, 2, 3]])
    faces = np.array([[0, 1], [1, 2], [2, 3], [3, 0]])
    markers = np.array([1, 2, 3, 4])
    return mesh_from_linear(vertices, cells, faces, markers, degree=degree)


def cube_pair_mesh(degree=1):
    # two tets forming a wedge of the unit cube
    vertices = np.array([
        [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0], [1.0, 1.0, 1.0],
    ])
    cells = np.array([[0, 1, 2, 3], [1, 2, 3, 4]])
    faces = np.array([[0, 1, 2], [0, 1, 3], [0, 2, 3],
                      [1, 2, 4], [1, 3, 4], [2, 3, 4]])
    markers = np.array([1, 1, 1, 2, 2, 2])
    return mesh_from_linear(vertices, cells, faces, markers, degree=degree)


@pytest.mark.parametrize("degree", [1, 2, 3, 4])
def test_square_node_counts(degree):
    mesh = square_mesh(degree)
    per_elem = comb(degree + 2, 2)
    shared_edge = degree + 1
    assert mesh.num_nodes == 2 * per_elem - shared_edge
    assert mesh.elements.shape == (2, per_elem)


@pytest.mark.parametrize("degree", [2, 3, 4])
def test_identity_init_matches_straight_mesh(degree):
    mesh = square_mesh(degree)
    assert np.array_equal(mesh.coords, mesh.ref_coords)


def test_measures():
    mesh = square_mesh(2)
    assert total_volume(mesh) == pytest.approx(1.0, rel=1e-14)
    assert total_boundary_measure(mesh) == pytest.approx(4.0, rel=1e-14)
    assert np.allclose(linear_face_measures(mesh), 1.0)
    tet = cube_pair_mesh()
    # second tet has twice the unit tet's volume
    assert total_volume(tet) == pytest.approx(0.5, rel=1e-14)


def test_evaluate_map_identity_jacobian():
    for mesh in (square_mesh(3), cube_pair_mesh(2)):
        pts = np.full((4, mesh.dim), 1.0 / (mesh.dim + 2))
        pts += np.linspace(0, 0.05, 4)[:, None]
        pos, jac = evaluate_map(mesh, pts, with_jacobian=True)
        eye = np.eye(mesh.dim)
        assert np.max(np.abs(jac - eye)) < 1e-12
        # identity map: physical position equals affine image of ref point
        corners = mesh.ref_coords[mesh.corner_vertices()]
        lam0 = 1 - pts.sum(axis=1)
        bary = np.column_stack([lam0, pts])
        affine = np.einsum("qc,ecd->eqd", bary, corners)
        assert np.max(np.abs(pos - affine)) < 1e-12


@pytest.mark.parametrize("dim,degree", [(2, 2), (2, 4), (3, 2), (3, 3)])
def test_jacobian_matches_finite_differences(dim, degree):
    mesh = square_mesh(degree) if dim == 2 else cube_pair_mesh(degree)
    rng = np.random.default_rng(degree * 7 + dim)
    coords = mesh.coords + 0.05 * rng.standard_normal(mesh.coords.shape)
    mesh = mesh.with_coords(coords)
    pts = np.full((3, dim), 1.0 / (dim + 2)) + np.linspace(0, 0.04, 3)[:, None]
    _, jac = evaluate_map(mesh, pts, with_jacobian=True)

    from hocurve.mesh import linear_jacobians
    a_lin_inv = np.linalg.inv(linear_jacobians(mesh))
    h = 1e-6
    cols = []
    for d in range(dim):
        shift = np.zeros(dim)
        shift[d] = h
        dpos = (evaluate_map(mesh, pts + shift) - evaluate_map(mesh, pts - shift)) / (2 * h)
        cols.append(dpos)  # d x / d xi_d, (E, Q, dim)
    dxdxi = np.stack(cols, axis=-1)  # (E, Q, r, d)
    fd_jac = np.einsum("eqrd,edc->eqrc", dxdxi, a_lin_inv)
    assert np.max(np.abs(fd_jac - jac)) < 1e-7


@pytest.mark.parametrize("source,target", [(2, 3), (2, 4), (3, 4)])
def test_interpolation_is_exact_for_polynomial_maps(source, target):
    rng = np.random.default_rng(source * 10 + target)
    for base in (square_mesh(source), cube_pair_mesh(source)):
        coords = base.coords + 0.08 * rng.standard_normal(base.coords.shape)
        curved = base.with_coords(coords)
        lifted = interpolate_to_degree(curved, target)
        pts = 0.8 * np.random.default_rng(3).dirichlet(
            np.ones(base.dim + 1), size=6)[:, 1:] + 0.02
        orig = evaluate_map(curved, pts)
        lift = evaluate_map(lifted, pts)
        assert np.max(np.abs(orig - lift)) < 1e-12
        assert np.array_equal(lifted.boundary_marker, curved.boundary_marker)


def test_interpolate_rejects_bad_degree():
    mesh = square_mesh(2)
    with pytest.raises(ParameterError):
        interpolate_to_degree(mesh, 5)
    with pytest.raises(ParameterError):
        interpolate_to_degree(mesh, 1)


def test_from_linear_rejects_inverted_element():
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    cells = np.array([[0, 2, 1]])  # negative orientation
    with pytest.raises(DegenerateElementError):
        mesh_from_linear(vertices, cells, np.empty((0, 2)), np.empty(0))


def test_from_linear_rejects_interior_face_as_boundary():
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    cells = np.array([[0, 1, 2], [0, 2, 3]])
    with pytest.raises(ParameterError):
        mesh_from_linear(vertices, cells, np.array([[0, 2]]), np.array([9]))


def test_boundary_nodes_lie_on_their_faces():
    mesh = square_mesh(3)
    face_nodes = mesh.boundary_face_nodes()
    for row, marker in zip(face_nodes, mesh.boundary_marker):
        pts = mesh.coords[row]
        if marker == 1:
            assert np.allclose(pts[:, 1], 0)
        elif marker == 3:
            assert np.allclose(pts[:, 1], 1)
