"""Command-line driver: curve, quality, generate.

Thread pinning has to happen before numpy first loads, so all heavy
imports live inside the command functions.  Configuration comes from an
optional JSON manifest plus flags; flags win.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path


def _pin_threads(n: int) -> None:
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS",
                "VECLIB_MAXIMUM_THREADS"):
        os.environ[var] = str(n)


@dataclass
class RunManifest:
    """Everything one curving run needs, resolvable before it starts."""

    mesh: Path
    geometry: Path
    degree: int = 4
    out_mesh: Path | None = None
    out_vtk: Path | None = None
    out_log: Path | None = None
    out_summary: Path | None = None
    out_figure: Path | None = None
    adaptive_penalty: bool = True
    adaptive_forcing: bool = True
    continuation: bool = True
    assembled: bool = False
    threads: int = 1
    seed: int = 0
    constraint_tol_rel: float = 1e-12
    gradient_tol: float = 1e-8

    def fill_output_paths(self) -> None:
        """Derive unset output paths from the mesh output path."""
        if self.out_mesh is None:
            raise _usage("an output mesh path is required (--out)")
        base = self.out_mesh.with_suffix("")
        if self.out_vtk is None:
            self.out_vtk = base.with_suffix(".vtk")
        if self.out_log is None:
            self.out_log = Path(f"{base}_log.csv")
        if self.out_summary is None:
            self.out_summary = Path(f"{base}_summary.json")
        if self.out_figure is None:
            self.out_figure = Path(f"{base}_history.png")

    def validate(self) -> None:
        if not self.mesh.is_file():
            raise _usage(f"mesh file not found: {self.mesh}")
        if not self.geometry.is_file():
            raise _usage(f"geometry config not found: {self.geometry}")
        if self.degree not in (2, 3, 4):
            raise _usage(f"degree must be 2, 3, or 4, got {self.degree}")
        if self.threads < 1:
            raise _usage(f"thread count must be at least 1, got {self.threads}")
        if not (self.constraint_tol_rel > 0 and self.gradient_tol > 0):
            raise _usage("tolerances must be positive")
        for path in (self.out_mesh, self.out_vtk, self.out_log,
                     self.out_summary, self.out_figure):
            parent = path.parent
            if not parent.is_dir():
                raise _usage(f"output directory not found: {parent}")


def _usage(message: str):
    from .errors import ParameterError
    return ParameterError(message)


_MANIFEST_KEYS = {
    "mesh", "geometry", "degree", "out_mesh", "out_vtk", "out_log",
    "out_summary", "out_figure", "adaptive_penalty", "adaptive_forcing",
    "continuation", "assembled", "threads", "seed", "constraint_tol_rel",
    "gradient_tol",
}

_PATH_KEYS = {"mesh", "geometry", "out_mesh", "out_vtk", "out_log",
              "out_summary", "out_figure"}


def _load_manifest_dict(path: str) -> dict:
    try:
        with open(path) as handle:
            data = json.load(handle)
    except OSError as err:
        raise _usage(f"cannot read manifest: {err}") from err
    except json.JSONDecodeError as err:
        raise _usage(f"manifest is not valid JSON: {err}") from err
    if not isinstance(data, dict):
        raise _usage("manifest must be a JSON object")
    unknown = set(data) - _MANIFEST_KEYS
    if unknown:
        raise _usage(f"unknown manifest keys: {sorted(unknown)}")
    base = Path(path).parent
    for key in _PATH_KEYS & set(data):
        value = Path(data[key])
        # relative paths resolve against the manifest's own directory
        data[key] = value if value.is_absolute() else base / value
    return data


def _build_run_manifest(args) -> RunManifest:
    data = _load_manifest_dict(args.manifest) if args.manifest else {}
    flags = {
        "mesh": args.mesh,
        "geometry": args.geometry,
        "degree": args.degree,
        "out_mesh": args.out,
        "out_vtk": args.vtk,
        "out_log": args.log,
        "out_summary": args.summary,
        "out_figure": args.figure,
        "threads": args.threads,
        "seed": args.seed,
        "constraint_tol_rel": args.constraint_tol,
        "gradient_tol": args.gradient_tol,
    }
    for key, value in flags.items():
        if value is not None:
            data[key] = Path(value) if key in _PATH_KEYS else value
    # negative switches only ever disable
    if args.no_adapt_mu:
        data["adaptive_penalty"] = False
    if args.no_adapt_delta:
        data["adaptive_forcing"] = False
    if args.no_continuation:
        data["continuation"] = False
    if args.assembled:
        data["assembled"] = True
    if "mesh" not in data or "geometry" not in data:
        raise _usage("a mesh and a geometry config are required "
                     "(--mesh/--geometry or manifest entries)")
    for key in ("degree", "threads", "seed"):
        if key in data and not isinstance(data[key], int):
            raise _usage(f"{key} must be an integer")
    for key in ("constraint_tol_rel", "gradient_tol"):
        if key in data and not isinstance(data[key], (int, float)):
            raise _usage(f"{key} must be a number")
    for key in ("adaptive_penalty", "adaptive_forcing", "continuation",
                "assembled"):
        if key in data and not isinstance(data[key], bool):
            raise _usage(f"{key} must be true or false")
    manifest = RunManifest(**data)
    manifest.fill_output_paths()
    manifest.validate()
    return manifest


def _progress_line(row) -> str:
    return (f"p={row.degree} k={row.iteration:>3} mu={row.penalty:.6e} "
            f"eps={row.constraint_norm:.6e} grad={row.gradient_norm:.6e} "
            f"delta={row.forcing:.3e} newton={row.newton_iterations} "
            f"linear={row.linear_outer}/{row.linear_inner}")


def cmd_curve(args) -> int:
    manifest = _build_run_manifest(args)
    from .distortion import DistortionIntegrals
    from .errors import CurvingFailedError, StagnationError
    from .geometry import GeometryModel
    from .mshio import read_msh, write_msh
    from .optimizer import CurvingConfig, curve_mesh
    from .report import (run_summary, write_convergence_csv,
                         write_history_figure, write_summary_json)
    from .vtkio import write_vtk

    mesh = read_msh(manifest.mesh)
    model = GeometryModel.from_json(manifest.geometry, mesh.dim)
    config = CurvingConfig(
        degree=manifest.degree,
        adaptive_penalty=manifest.adaptive_penalty,
        adaptive_forcing=manifest.adaptive_forcing,
        continuation=manifest.continuation,
        assembled_path=manifest.assembled,
        constraint_tol_rel=manifest.constraint_tol_rel,
        gradient_tol=manifest.gradient_tol,
    )
    eps_star = config.constraint_tol_rel * mesh.bbox_diagonal()
    print(f"curving {mesh.num_elements} elements ({mesh.dim}D) to degree "
          f"{config.degree}, error tolerance {eps_star:.3e}", flush=True)

    def report_row(row):
        print(_progress_line(row), flush=True)

    start = time.perf_counter()
    try:
        curved, log = curve_mesh(mesh, model, config, callback=report_row)
    except (CurvingFailedError, StagnationError) as err:
        partial = getattr(err, "log", None)
        if partial is not None and partial.rows:
            write_convergence_csv(partial, manifest.out_log)
            write_history_figure(partial, eps_star, manifest.out_figure)
        raise
    wall = time.perf_counter() - start

    write_msh(curved, manifest.out_mesh)
    quality = DistortionIntegrals(curved).element_quality()
    write_vtk(curved, manifest.out_vtk, {"one_minus_quality": 1.0 - quality})
    write_convergence_csv(log, manifest.out_log)
    summary = run_summary(curved, log, wall)
    summary["seed"] = manifest.seed
    summary["threads"] = manifest.threads
    write_summary_json(summary, manifest.out_summary)
    write_history_figure(log, eps_star, manifest.out_figure)

    print(f"converged: boundary error {log.final_constraint_norm:.3e}, "
          f"gradient {log.final_gradient_norm:.3e}, quality "
          f"[{summary['quality_min']:.4f}, {summary['quality_max']:.4f}], "
          f"{wall:.1f}s", flush=True)
    return 0


def cmd_quality(args) -> int:
    from .distortion import DistortionIntegrals
    from .mshio import read_msh
    from .vtkio import write_vtk

    mesh = read_msh(args.mesh)
    quality = DistortionIntegrals(mesh).element_quality()
    invalid = int((quality == 0.0).sum())
    print(f"elements: {mesh.num_elements} (degree {mesh.degree}, "
          f"{mesh.dim}D)")
    print(f"quality min:  {quality.min():.6f}")
    print(f"quality mean: {quality.mean():.6f}")
    print(f"quality max:  {quality.max():.6f}")
    print(f"invalid elements: {invalid}")
    if args.vtk:
        write_vtk(mesh, args.vtk, {"one_minus_quality": 1.0 - quality})
        print(f"wrote {args.vtk}")
    return 0


def cmd_generate(args) -> int:
    from .generators import generate_annulus, generate_sector, generate_shell
    from .mshio import write_msh

    if args.kind == "annulus":
        mesh, geometry = generate_annulus(args.inner, args.outer,
                                          args.refinement)
    elif args.kind == "shell":
        mesh, geometry = generate_shell(args.inner, args.outer,
                                        args.refinement)
    else:
        mesh, geometry = generate_sector(args.inner, args.outer,
                                         args.refinement, args.angle)

    mesh_path = Path(f"{args.out_prefix}.msh")
    geo_path = Path(f"{args.out_prefix}_geometry.json")
    write_msh(mesh, mesh_path)
    with open(geo_path, "w") as handle:
        json.dump(geometry, handle, indent=2)
        handle.write("\n")
    print(f"wrote {mesh_path} ({mesh.num_elements} elements, "
          f"{mesh.dim}D) and {geo_path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hocurve",
        description="Curve linear simplicial meshes to analytic geometry "
                    "at polynomial degrees 2 to 4.")
    sub = parser.add_subparsers(dest="command", required=True)

    curve = sub.add_parser(
        "curve", help="curve a linear mesh to a geometry config")
    curve.add_argument("--manifest", help="JSON run manifest; flags override")
    curve.add_argument("--mesh", help="input linear mesh (MSH)")
    curve.add_argument("--geometry", help="geometry config (JSON)")
    curve.add_argument("--degree", type=int, choices=(2, 3, 4))
    curve.add_argument("--out", help="output mesh path (MSH)")
    curve.add_argument("--vtk", help="output VTK path")
    curve.add_argument("--log", help="convergence CSV path")
    curve.add_argument("--summary", help="JSON summary path")
    curve.add_argument("--figure", help="convergence history figure path")
    curve.add_argument("--no-adapt-mu", action="store_true",
                       help="grow the penalty weight by a fixed factor")
    curve.add_argument("--no-adapt-delta", action="store_true",
                       help="always solve linear systems to the tight bound")
    curve.add_argument("--no-continuation", action="store_true",
                       help="start directly at the target degree")
    curve.add_argument("--assembled", action="store_true",
                       help="assemble the Hessian instead of the "
                            "matrix-free path")
    curve.add_argument("--threads", type=int)
    curve.add_argument("--seed", type=int)
    curve.add_argument("--constraint-tol", type=float,
                       help="boundary tolerance relative to the mesh size")
    curve.add_argument("--gradient-tol", type=float)
    curve.set_defaults(func=cmd_curve)

    quality = sub.add_parser(
        "quality", help="report element quality of a mesh")
    quality.add_argument("--mesh", required=True)
    quality.add_argument("--vtk", help="write per-element quality VTK")
    quality.add_argument("--threads", type=int)
    quality.set_defaults(func=cmd_quality)

    generate = sub.add_parser(
        "generate", help="write a demo mesh and its geometry config")
    generate.add_argument("--kind", required=True,
                          choices=("annulus", "shell", "sector"))
    generate.add_argument("--out-prefix", required=True)
    generate.add_argument("--inner", type=float, default=1.0)
    generate.add_argument("--outer", type=float, default=4.0)
    generate.add_argument("--refinement", type=int, default=1)
    generate.add_argument("--angle", type=float, default=math.pi / 6,
                          help="sector opening angle in radians")
    generate.add_argument("--seed", type=int, default=0)
    generate.add_argument("--threads", type=int)
    generate.set_defaults(func=cmd_generate)
    return parser


def _error_exit_code(err) -> tuple[int, str] | None:
    from . import errors
    table = (
        (errors.ParameterError, 2, "parameter"),
        (errors.MeshFormatError, 3, "mesh-format"),
        ((errors.GeometryConfigError, errors.ProjectionSingularityError,
          errors.PeriodicMatchingError), 4, "geometry-config"),
        ((errors.DegenerateElementError, errors.InvalidConfigurationError),
         5, "invalid-mesh"),
        ((errors.CurvingFailedError, errors.StagnationError,
          errors.NoConvergenceError, errors.SingularSmootherError),
         6, "no-convergence"),
    )
    for classes, code, category in table:
        if isinstance(err, classes):
            return code, category
    if isinstance(err, errors.HocurveError):
        return 1, "error"
    return None


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        threads = args.threads
        manifest_path = getattr(args, "manifest", None)
        if threads is None and manifest_path:
            # the manifest may set the thread count; flags win
            threads = _load_manifest_dict(manifest_path).get("threads")
        try:
            threads = 1 if threads is None else int(threads)
        except (TypeError, ValueError):
            raise _usage(f"thread count must be an integer, got {threads!r}")
        _pin_threads(threads)
        return args.func(args)
    except Exception as err:
        mapped = _error_exit_code(err)
        if mapped is None:
            raise
        code, category = mapped
        print(f"error ({category}): {err}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
