"""End-to-end command-line tests: generate/curve/quality flows, manifest
merging, validation failures, exit codes, and output determinism."""

import json
import math

import numpy as np
import pytest

from hocurve import cli
from hocurve.distortion import DistortionIntegrals
from hocurve.mshio import read_msh, write_msh


@pytest.fixture(scope="module")
def ring(tmp_path_factory):
    """Generated annulus demo pair (128 triangles)."""
    root = tmp_path_factory.mktemp("ring")
    code = cli.main(["generate", "--kind", "annulus",
                     "--out-prefix", str(root / "ring"),
                     "--refinement", "1"])
    assert code == 0
    return root


@pytest.fixture(scope="module")
def curved_ring(ring, tmp_path_factory):
    """One manifest-driven degree-2 curving run, shared by output checks."""
    out = tmp_path_factory.mktemp("curved")
    manifest = {
        "mesh": str(ring / "ring.msh"),
        "geometry": str(ring / "ring_geometry.json"),
        "degree": 2,
        "out_mesh": str(out / "curved.msh"),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest))
    code = cli.main(["curve", "--manifest", str(path)])
    assert code == 0
    return out


class TestGenerate:
    def test_annulus_pair(self, ring):
        assert (ring / "ring.msh").is_file()
        geo = json.loads((ring / "ring_geometry.json").read_text())
        kinds = {e["type"] for e in geo["entities"]}
        assert kinds == {"circle"}
        assert set(geo["groups"]) == {"1", "2"}

    def test_shell_sphere_radii(self, tmp_path):
        code = cli.main(["generate", "--kind", "shell",
                         "--out-prefix", str(tmp_path / "shell"),
                         "--refinement", "1"])
        assert code == 0
        geo = json.loads((tmp_path / "shell_geometry.json").read_text())
        radii = sorted(e["radius"] for e in geo["entities"]
                       if e["type"] == "sphere")
        assert radii == [1.0, 4.0]
        mesh = read_msh(tmp_path / "shell.msh")
        assert mesh.dim == 3 and mesh.degree == 1

    def test_sector_periodic_angle(self, tmp_path):
        code = cli.main(["generate", "--kind", "sector",
                         "--out-prefix", str(tmp_path / "sec"),
                         "--refinement", "1",
                         "--angle", str(math.pi / 6)])
        assert code == 0
        geo = json.loads((tmp_path / "sec_geometry.json").read_text())
        assert geo["periodic"][0]["angle"] == pytest.approx(math.pi / 6)

    def test_bad_parameters_exit_code(self, tmp_path):
        code = cli.main(["generate", "--kind", "annulus",
                         "--out-prefix", str(tmp_path / "x"),
                         "--inner", "5.0", "--outer", "4.0"])
        assert code == 2


class TestCurveOutputs:
    def test_all_outputs_written(self, curved_ring):
        for name in ("curved.msh", "curved.vtk", "curved_log.csv",
                     "curved_summary.json", "curved_history.png"):
            assert (curved_ring / name).is_file(), name

    def test_summary_contents(self, curved_ring):
        summary = json.loads((curved_ring / "curved_summary.json").read_text())
        assert summary["final_constraint_norm"] < 1.2e-11
        assert summary["final_gradient_norm"] < 1e-8
        assert 0.0 < summary["quality_min"] <= summary["quality_max"] <= 1.0 + 1e-12
        assert summary["iterations"]["penalty_total"] >= 1
        assert summary["wall_time_seconds"] > 0

    def test_csv_matches_iteration_count(self, curved_ring):
        summary = json.loads((curved_ring / "curved_summary.json").read_text())
        lines = (curved_ring / "curved_log.csv").read_text().splitlines()
        assert lines[0].startswith("degree,iteration,penalty")
        assert len(lines) - 1 == summary["iterations"]["penalty_total"]

    def test_figure_is_png(self, curved_ring):
        head = (curved_ring / "curved_history.png").read_bytes()[:4]
        assert head == b"\x89PNG"

    def test_vtk_has_quality_field(self, curved_ring):
        text = (curved_ring / "curved.vtk").read_text()
        assert text.startswith("# vtk DataFile")
        assert "one_minus_quality" in text

    def test_mesh_readable_and_curved(self, curved_ring):
        mesh = read_msh(curved_ring / "curved.msh")
        assert mesh.degree == 2
        quality = DistortionIntegrals(mesh).element_quality()
        assert quality.min() > 0.9

    def test_progress_lines_mirror_csv(self, ring, tmp_path, capsys):
        code = cli.main(["curve", "--mesh", str(ring / "ring.msh"),
                         "--geometry", str(ring / "ring_geometry.json"),
                         "--degree", "2", "--out", str(tmp_path / "p.msh")])
        assert code == 0
        printed = [line for line in capsys.readouterr().out.splitlines()
                   if line.startswith("p=")]
        rows = (tmp_path / "p_log.csv").read_text().splitlines()[1:]
        assert len(printed) == len(rows)
        for line, row in zip(printed, rows):
            degree, iteration = row.split(",")[:2]
            assert line.startswith(f"p={degree} k={iteration:>3}")
            assert "mu=" in line and "eps=" in line and "delta=" in line


class TestCurveDeterminism:
    def test_identical_runs_byte_identical(self, ring, tmp_path):
        args = ["curve", "--mesh", str(ring / "ring.msh"),
                "--geometry", str(ring / "ring_geometry.json"),
                "--degree", "2"]
        assert cli.main(args + ["--out", str(tmp_path / "a.msh")]) == 0
        assert cli.main(args + ["--out", str(tmp_path / "b.msh")]) == 0
        a_csv = (tmp_path / "a_log.csv").read_bytes()
        b_csv = (tmp_path / "b_log.csv").read_bytes()
        assert a_csv == b_csv
        assert (tmp_path / "a.msh").read_bytes() == \
            (tmp_path / "b.msh").read_bytes()


class TestManifest:
    def test_flags_override_manifest(self, ring, tmp_path):
        # manifest asks for the adaptive weight; the flag forces the fixed
        # ladder, visible as exact powers of ten in the log
        manifest = {
            "mesh": str(ring / "ring.msh"),
            "geometry": str(ring / "ring_geometry.json"),
            "degree": 2,
            "adaptive_penalty": True,
            "out_mesh": str(tmp_path / "o.msh"),
        }
        path = tmp_path / "m.json"
        path.write_text(json.dumps(manifest))
        code = cli.main(["curve", "--manifest", str(path), "--no-adapt-mu"])
        assert code == 0
        rows = (tmp_path / "o_log.csv").read_text().splitlines()[1:]
        for k, row in enumerate(rows):
            assert float(row.split(",")[2]) == 10.0 ** (k + 1)

    def test_relative_paths_resolve_against_manifest(self, ring, tmp_path):
        manifest = {"mesh": "ring.msh", "geometry": "ring_geometry.json",
                    "degree": 2, "out_mesh": "rel_out.msh"}
        path = ring / "rel_manifest.json"
        path.write_text(json.dumps(manifest))
        assert cli.main(["curve", "--manifest", str(path)]) == 0
        assert (ring / "rel_out.msh").is_file()

    def test_unknown_key_rejected(self, ring, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"mesh": "x", "geometry": "y",
                                    "typo_key": 1}))
        assert cli.main(["curve", "--manifest", str(path)]) == 2

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("{not json")
        assert cli.main(["curve", "--manifest", str(path)]) == 2

    def test_wrong_type_rejected(self, ring, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({
            "mesh": str(ring / "ring.msh"),
            "geometry": str(ring / "ring_geometry.json"),
            "degree": "four", "out_mesh": str(tmp_path / "o.msh")}))
        assert cli.main(["curve", "--manifest", str(path)]) == 2


class TestValidationAndExitCodes:
    def test_missing_mesh_file(self, ring, tmp_path):
        code = cli.main(["curve", "--mesh", str(tmp_path / "absent.msh"),
                         "--geometry", str(ring / "ring_geometry.json"),
                         "--degree", "2", "--out", str(tmp_path / "o.msh")])
        assert code == 2

    def test_missing_required_inputs(self, tmp_path):
        assert cli.main(["curve", "--out", str(tmp_path / "o.msh")]) == 2

    def test_unmapped_marker_writes_nothing(self, ring, tmp_path):
        geo = json.loads((ring / "ring_geometry.json").read_text())
        geo["groups"] = {"1": geo["groups"]["1"]}
        broken = tmp_path / "broken.json"
        broken.write_text(json.dumps(geo))
        out = tmp_path / "never.msh"
        code = cli.main(["curve", "--mesh", str(ring / "ring.msh"),
                         "--geometry", str(broken),
                         "--degree", "2", "--out", str(out)])
        assert code == 4
        assert not out.exists()
        assert not (tmp_path / "never_log.csv").exists()

    def test_garbage_mesh_file(self, ring, tmp_path):
        bad = tmp_path / "bad.msh"
        bad.write_text("$MeshFormat\n9.9 0 8\n$EndMeshFormat\n")
        code = cli.main(["curve", "--mesh", str(bad),
                         "--geometry", str(ring / "ring_geometry.json"),
                         "--degree", "2", "--out", str(tmp_path / "o.msh")])
        assert code == 3

    def test_budget_exhaustion_exit_code(self, ring, tmp_path, monkeypatch):
        import hocurve.optimizer as optimizer
        original = optimizer.CurvingConfig

        def tight(**kwargs):
            kwargs["max_penalty_iterations"] = 1
            return original(**kwargs)

        monkeypatch.setattr(optimizer, "CurvingConfig", tight)
        code = cli.main(["curve", "--mesh", str(ring / "ring.msh"),
                         "--geometry", str(ring / "ring_geometry.json"),
                         "--degree", "2", "--out", str(tmp_path / "o.msh")])
        assert code == 6
        # the partial convergence log is still written for diagnostics
        assert (tmp_path / "o_log.csv").is_file()
        assert not (tmp_path / "o.msh").exists()


class TestQuality:
    def test_reports_valid_mesh(self, curved_ring, capsys):
        code = cli.main(["quality", "--mesh",
                         str(curved_ring / "curved.msh")])
        assert code == 0
        out = capsys.readouterr().out
        assert "quality min" in out
        assert "invalid elements: 0" in out

    def test_writes_vtk(self, curved_ring, tmp_path, capsys):
        vtk = tmp_path / "q.vtk"
        code = cli.main(["quality", "--mesh",
                         str(curved_ring / "curved.msh"),
                         "--vtk", str(vtk)])
        assert code == 0
        assert vtk.is_file()

    def test_single_inverted_element(self, curved_ring, tmp_path, capsys):
        # push one boundary-edge midnode far out: exactly the owning
        # element inverts
        mesh = read_msh(curved_ring / "curved.msh")
        corners = set(mesh.corner_vertices().ravel().tolist())
        face = mesh.boundary_face_nodes()[0]
        mid = next(int(n) for n in face if int(n) not in corners)
        coords = mesh.coords.copy()
        coords[mid] *= 3.0
        write_msh(mesh.with_coords(coords), tmp_path / "inv.msh")
        code = cli.main(["quality", "--mesh", str(tmp_path / "inv.msh")])
        assert code == 0
        out = capsys.readouterr().out
        assert "invalid elements: 1" in out
        assert "quality min:  0.000000" in out


class TestAblationMatrix:
    @pytest.mark.parametrize("flags", [
        [],
        ["--assembled"],
        ["--no-adapt-delta"],
        ["--no-adapt-delta", "--assembled"],
        ["--no-adapt-mu"],
        ["--no-adapt-mu", "--assembled"],
        ["--no-adapt-mu", "--no-adapt-delta"],
        ["--no-adapt-mu", "--no-adapt-delta", "--assembled"],
    ])
    def test_switch_combinations_converge(self, ring, tmp_path, flags):
        code = cli.main(["curve", "--mesh", str(ring / "ring.msh"),
                         "--geometry", str(ring / "ring_geometry.json"),
                         "--degree", "2",
                         "--out", str(tmp_path / "c.msh")] + flags)
        assert code == 0
        summary = json.loads((tmp_path / "c_summary.json").read_text())
        assert summary["final_constraint_norm"] < 1.2e-11
