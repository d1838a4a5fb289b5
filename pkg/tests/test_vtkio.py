"""Tests for the VTK subdivision writer."""

from math import comb

import numpy as np
import pytest

from hocurve.errors import ParameterError
from hocurve.generators import generate_annulus, generate_shell
from hocurve.mesh import interpolate_to_degree, mesh_from_linear
from hocurve.vtkio import _sub_cells, write_vtk


def read_vtk_arrays(path):
    """Minimal parse of the writer's own output for verification."""
    lines = path.read_text().splitlines()
    i = lines.index([l for l in lines if l.startswith("POINTS")][0])
    n_pts = int(lines[i].split()[1])
    pts = np.array([[float(v) for v in lines[i + 1 + k].split()]
                    for k in range(n_pts)])
    j = i + 1 + n_pts
    assert lines[j].startswith("CELLS")
    n_cells = int(lines[j].split()[1])
    cells = np.array([[int(v) for v in lines[j + 1 + k].split()[1:]]
                      for k in range(n_cells)])
    return pts, cells, lines


class TestSubCells:
    @pytest.mark.parametrize("dim,s", [(2, 1), (2, 2), (2, 3), (2, 4),
                                       (3, 1), (3, 2), (3, 3), (3, 4)])
    def test_counts_and_volume(self, dim, s):
        conn = _sub_cells(dim, s)
        assert conn.shape == (s ** dim, dim + 1)
        from hocurve.reference import reference_element
        pts = reference_element(dim, s).nodes
        vol = 0.0
        for row in conn:
            edges = pts[row[1:]] - pts[row[0]]
            v = (edges[0, 0] * edges[1, 1] - edges[0, 1] * edges[1, 0]
                 if dim == 2 else np.linalg.det(edges))
            assert v > 0
            vol += v / (2 if dim == 2 else 6)
        ref_measure = 0.5 if dim == 2 else 1 / 6
        assert vol == pytest.approx(ref_measure, rel=1e-12)

    def test_tet_split_counts_by_kind(self):
        # corner + octahedral + inverted cells tile the lattice
        for s in (2, 3, 4):
            n = comb(s + 2, 3) + 4 * comb(s + 1, 3) + comb(s, 3)
            assert _sub_cells(3, s).shape[0] == n == s ** 3


class TestWriter:
    def test_linear_square_structure(self, tmp_path):
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        cells = np.array([[0, 1, 2], [0, 2, 3]])
        faces = np.array([[0, 1], [1, 2], [2, 3], [3, 0]])
        mesh = mesh_from_linear(verts, cells, faces, np.array([1, 2, 3, 4]))
        path = tmp_path / "out.vtk"
        write_vtk(mesh, path, {"quality": np.array([1.0, 0.5])})
        pts, conn, lines = read_vtk_arrays(path)
        assert pts.shape == (6, 3)
        assert np.allclose(pts[:, 2], 0.0)
        assert conn.shape == (2, 3)
        k = lines.index("LOOKUP_TABLE default")
        values = [float(v) for v in lines[k + 1:k + 3]]
        assert values == [1.0, 0.5]

    def test_curved_annulus_points_sample_the_map(self, tmp_path):
        mesh, _ = generate_annulus(refinement=1)
        mesh = interpolate_to_degree(mesh, 3)
        path = tmp_path / "out.vtk"
        write_vtk(mesh, path, subdivisions=2)
        pts, conn, _ = read_vtk_arrays(path)
        per_elem = 6  # degree-2 lattice point count
        assert pts.shape[0] == mesh.num_elements * per_elem
        assert conn.shape[0] == mesh.num_elements * 4
        # straight elements keep all samples between the chords and radius 4
        radii = np.linalg.norm(pts[:, :2], axis=1)
        assert radii.min() > 0.97 and radii.max() <= 4.0 + 1e-12

    def test_shell_output_counts(self, tmp_path):
        mesh, _ = generate_shell(refinement=1)
        path = tmp_path / "out.vtk"
        write_vtk(mesh, path, {"f": np.zeros(mesh.num_elements)},
                  subdivisions=2)
        pts, conn, _ = read_vtk_arrays(path)
        assert pts.shape[0] == mesh.num_elements * 10
        assert conn.shape[0] == mesh.num_elements * 8

    def test_rejects_bad_fields(self, tmp_path):
        mesh, _ = generate_annulus(refinement=1)
        with pytest.raises(ParameterError):
            write_vtk(mesh, tmp_path / "x.vtk", {"bad name": np.zeros(2)})
        with pytest.raises(ParameterError):
            write_vtk(mesh, tmp_path / "x.vtk",
                      {"f": np.zeros(mesh.num_elements - 1)})
        with pytest.raises(ParameterError):
            write_vtk(mesh, tmp_path / "x.vtk", subdivisions=0)

    def test_deterministic_bytes(self, tmp_path):
        mesh, _ = generate_annulus(refinement=1)
        mesh = interpolate_to_degree(mesh, 2)
        a, b = tmp_path / "a.vtk", tmp_path / "b.vtk"
        write_vtk(mesh, a, {"q": np.linspace(0, 1, mesh.num_elements)})
        write_vtk(mesh, b, {"q": np.linspace(0, 1, mesh.num_elements)})
        assert a.read_bytes() == b.read_bytes()
