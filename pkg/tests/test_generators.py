"""Tests for the structured annulus, sector, and shell generators."""

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from hocurve.generators import (
    _icosahedron,
    _split_prism,
    _subdivide_sphere,
    generate_annulus,
    generate_sector,
    generate_shell,
)
from hocurve.errors import ParameterError
from hocurve.geometry import GeometryModel
from hocurve.mesh import total_volume


def boundary_radii(mesh, marker):
    nodes = np.unique(mesh.boundary_face_nodes()[mesh.boundary_marker == marker])
    return np.linalg.norm(mesh.coords[nodes], axis=1)


class TestAnnulus:
    def test_cell_counts_scale_with_refinement(self):
        sizes = [generate_annulus(refinement=r)[0].num_elements for r in (1, 2, 3)]
        # 2 triangles per quad; each level quadruples the cell count
        assert sizes == [128, 512, 2048]

    def test_boundary_vertices_sit_on_circles(self):
        mesh, _ = generate_annulus(inner=1.0, outer=4.0, refinement=2)
        assert np.allclose(boundary_radii(mesh, 1), 1.0, atol=1e-12)
        assert np.allclose(boundary_radii(mesh, 2), 4.0, atol=1e-12)

    def test_marker_counts(self):
        mesh, _ = generate_annulus(refinement=2)
        assert np.sum(mesh.boundary_marker == 1) == 32
        assert np.sum(mesh.boundary_marker == 2) == 32

    def test_area_close_to_annulus(self):
        mesh, _ = generate_annulus(inner=1.0, outer=4.0, refinement=2)
        exact = np.pi * (16.0 - 1.0)
        # polygonal rings underestimate the area by O(h^2)
        assert abs(total_volume(mesh) - exact) < 0.02 * exact

    def test_geometry_config_is_valid(self):
        mesh, geo = generate_annulus(refinement=1)
        model = GeometryModel.from_dict(geo, mesh.dim)
        assert set(model.groups) == {1, 2}

    def test_bad_parameters(self):
        with pytest.raises(ParameterError):
            generate_annulus(inner=2.0, outer=1.0)
        with pytest.raises(ParameterError):
            generate_annulus(refinement=0)


class TestSector:
    def test_counts_and_markers(self):
        mesh, _ = generate_sector(refinement=1)
        present = set(np.unique(mesh.boundary_marker))
        assert present == {1, 2, 3, 4}

    def test_cut_faces_lie_on_their_planes(self):
        angle = np.pi / 6
        mesh, _ = generate_sector(refinement=2, angle=angle)
        faces = mesh.boundary_face_nodes()
        src = np.unique(faces[mesh.boundary_marker == 3])
        tgt = np.unique(faces[mesh.boundary_marker == 4])
        assert np.allclose(mesh.coords[src, 1], 0.0, atol=1e-12)
        normal = np.array([-np.sin(angle), np.cos(angle)])
        assert np.allclose(mesh.coords[tgt] @ normal, 0.0, atol=1e-12)

    def test_corner_vertices_present(self):
        angle = np.pi / 4
        mesh, _ = generate_sector(inner=1.0, outer=2.0, refinement=1, angle=angle)
        expect = np.array([
            [1.0, 0.0],
            [2.0, 0.0],
            [np.cos(angle), np.sin(angle)],
            [2 * np.cos(angle), 2 * np.sin(angle)],
        ])
        for corner in expect:
            d = np.linalg.norm(mesh.coords - corner, axis=1)
            assert d.min() < 1e-12

    def test_geometry_config_is_valid_and_periodic(self):
        mesh, geo = generate_sector(refinement=1)
        model = GeometryModel.from_dict(geo, mesh.dim)
        assert len(model.periodic) == 1
        assert model.periodic[0].source == 3
        assert len(model.junctions) == 4

    def test_angle_bounds(self):
        with pytest.raises(ParameterError):
            generate_sector(angle=0.0)
        with pytest.raises(ParameterError):
            generate_sector(angle=np.pi)


class TestIcosphere:
    def test_icosahedron_shape(self):
        verts, faces = _icosahedron()
        assert verts.shape == (12, 3)
        assert faces.shape == (20, 3)
        assert np.allclose(np.linalg.norm(verts, axis=1), 1.0, atol=1e-12)
        # outward orientation: triangle normal points away from origin
        a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
        outward = np.einsum("fd,fd->f", np.cross(b - a, c - a), a + b + c)
        assert np.all(outward > 0)

    def test_subdivision_counts_and_unit_norm(self):
        verts, faces = _subdivide_sphere(*_icosahedron(), levels=2)
        assert faces.shape == (320, 3)
        assert verts.shape == (162, 3)  # 10 * 4^2 + 2
        assert np.allclose(np.linalg.norm(verts, axis=1), 1.0, atol=1e-12)


class TestPrismSplit:
    def make_prism(self, rng):
        # planar-quad prism: top = s * bottom + t, convex for s > 0
        bottom = rng.normal(size=(3, 3))
        while abs(np.linalg.det(np.vstack([bottom[1] - bottom[0],
                                           bottom[2] - bottom[0],
                                           rng.normal(size=3)]))) < 0.1:
            bottom = rng.normal(size=(3, 3))
        s = rng.uniform(0.5, 1.5)
        normal = np.cross(bottom[1] - bottom[0], bottom[2] - bottom[0])
        normal /= np.linalg.norm(normal)
        t = rng.uniform(0.5, 1.5) * normal + 0.1 * rng.normal(size=3)
        top = s * bottom + t
        return np.vstack([bottom, top])

    def test_split_covers_prism_volume(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            pts = self.make_prism(rng)
            ids = rng.permutation(100)[:6]
            coords = np.zeros((100, 3))
            coords[ids] = pts
            tets = _split_prism(np.array(ids), coords)
            vol = 0.0
            for tet in tets:
                p = coords[tet]
                det = np.linalg.det(np.array([p[1] - p[0], p[2] - p[0],
                                              p[3] - p[0]]).T)
                assert det > 0
                vol += det / 6.0
            hull = ConvexHull(pts)
            assert vol == pytest.approx(hull.volume, rel=1e-9)

    def test_shared_quads_get_matching_diagonals(self):
        # two prisms stacked on the same quad must split it the same way,
        # which mesh_from_linear checks globally when building the shell
        rng = np.random.default_rng(3)
        pts = self.make_prism(rng)
        upper = 2 * pts[3:6] - pts[0:3]
        coords = np.vstack([pts, upper])
        ids = rng.permutation(9)
        coords = coords[np.argsort(ids)]  # scatter so global ids are shuffled
        inv = np.argsort(np.argsort(ids))
        lower_tets = _split_prism(inv[[0, 1, 2, 3, 4, 5]], coords)
        upper_tets = _split_prism(inv[[3, 4, 5, 6, 7, 8]], coords)

        def faces(tets):
            out = set()
            for tet in tets:
                for f in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
                    out.add(frozenset(tet[v] for v in f))
            return out

        shared = frozenset(inv[[3, 4, 5]])
        interface = [f for f in faces(lower_tets) if f <= set(inv[3:6])]
        assert interface and all(f in faces(upper_tets) for f in interface)


class TestShell:
    def test_cell_counts(self):
        mesh1, _ = generate_shell(refinement=1)
        assert mesh1.num_elements == 720
        mesh2, _ = generate_shell(refinement=2)
        assert mesh2.num_elements == 5760

    def test_boundary_vertices_on_spheres(self):
        mesh, _ = generate_shell(inner=1.0, outer=4.0, refinement=1)
        assert np.allclose(boundary_radii(mesh, 1), 1.0, atol=1e-12)
        assert np.allclose(boundary_radii(mesh, 2), 4.0, atol=1e-12)

    def test_volume_close_to_shell(self):
        mesh, _ = generate_shell(inner=1.0, outer=4.0, refinement=2)
        exact = 4.0 / 3.0 * np.pi * (64.0 - 1.0)
        assert abs(total_volume(mesh) - exact) < 0.05 * exact

    def test_geometry_config_is_valid(self):
        mesh, geo = generate_shell(refinement=1)
        model = GeometryModel.from_dict(geo, mesh.dim)
        assert set(model.groups) == {1, 2}
