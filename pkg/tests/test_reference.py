"""Reference elements: lattice layout, basis properties, orderings."""

from __future__ import annotations

from math import comb

import numpy as np
import pytest

from hocurve.reference import (
    FACE_CORNERS,
    gmsh_node_order,
    lattice_exponents,
    reference_element,
)

DIMS_DEGREES = [(d, p) for d in (2, 3) for p in (1, 2, 3, 4)]


def random_interior_points(dim, n, rng):
    # rejection-free: scale random simplex barycentrics
    raw = rng.dirichlet(np.ones(dim + 1), size=n)
    return raw[:, 1:]


@pytest.mark.parametrize("dim,degree", DIMS_DEGREES)
def test_node_count(dim, degree):
    ref = reference_element(dim, degree)
    assert ref.nodes.shape == (comb(degree + dim, dim), dim)
    assert ref.num_nodes == ref.nodes.shape[0]


@pytest.mark.parametrize("dim,degree", DIMS_DEGREES)
def test_kronecker_at_lattice(dim, degree):
    ref = reference_element(dim, degree)
    vals = ref.shape_values(ref.nodes)
    assert np.max(np.abs(vals - np.eye(ref.num_nodes))) < 1e-12


@pytest.mark.parametrize("dim,degree", DIMS_DEGREES)
def test_partition_of_unity(dim, degree):
    ref = reference_element(dim, degree)
    rng = np.random.default_rng(degree * 10 + dim)
    pts = random_interior_points(dim, 200, rng)
    vals = ref.shape_values(pts)
    assert np.max(np.abs(vals.sum(axis=1) - 1.0)) < 1e-12
    grads = ref.shape_gradients(pts)
    assert np.max(np.abs(grads.sum(axis=1))) < 1e-12


@pytest.mark.parametrize("dim,degree", DIMS_DEGREES)
def test_gradients_match_finite_differences(dim, degree):
    ref = reference_element(dim, degree)
    rng = np.random.default_rng(degree + dim)
    pts = 0.9 * random_interior_points(dim, 20, rng) + 0.05 / (dim + 1)
    grads = ref.shape_gradients(pts)
    h = 1e-6
    for d in range(dim):
        shift = np.zeros(dim)
        shift[d] = h
        fd = (ref.shape_values(pts + shift) - ref.shape_values(pts - shift)) / (2 * h)
        assert np.max(np.abs(fd - grads[:, :, d])) < 1e-7


@pytest.mark.parametrize("dim,degree", DIMS_DEGREES)
def test_corners_are_lattice_extremes(dim, degree):
    ref = reference_element(dim, degree)
    corners = ref.nodes[ref.corners]
    expected = np.vstack([np.zeros(dim), np.eye(dim)])
    assert np.allclose(corners, expected)


@pytest.mark.parametrize("dim,degree", DIMS_DEGREES)
def test_face_tables_lie_on_faces(dim, degree):
    ref = reference_element(dim, degree)
    exps = lattice_exponents(dim, degree)
    for f, corners in enumerate(FACE_CORNERS[dim]):
        table = ref.face_node_table(f)
        off_face = [c for c in range(dim + 1) if c not in corners]
        for idx in table:
            assert all(exps[idx][c] == 0 for c in off_face)
        # face corners come out at the face-lattice corner slots
        face_ref = reference_element(dim - 1, degree) if dim == 3 else None
        if face_ref is not None:
            face_corner_rows = face_ref.corners
            for slot, corner in enumerate(corners):
                elem_idx = table[face_corner_rows[slot]]
                assert exps[elem_idx][corner] == degree


def test_gmsh_order_degree1_is_identity():
    for dim in (1, 2, 3):
        assert np.array_equal(gmsh_node_order(dim, 1), np.arange(dim + 1))


def test_gmsh_order_quadratic_triangle():
    # vertices, then midpoints of edges (0,1), (1,2), (2,0)
    assert gmsh_node_order(2, 2).tolist() == [0, 3, 1, 5, 4, 2]


def test_gmsh_order_is_permutation():
    for dim in (1, 2, 3):
        for degree in (2, 3, 4):
            perm = gmsh_node_order(dim, degree)
            assert sorted(perm.tolist()) == list(range(perm.size))
