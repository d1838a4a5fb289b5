"""Curve linear simplicial meshes to analytic geometry at degrees 2 to 4.

Attributes resolve lazily so that importing the package (e.g. through the
command-line entry point) does not load numpy before the CLI has pinned
the thread count.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    # mesh types and I/O
    "HighOrderMesh": ".mesh",
    "mesh_from_linear": ".mesh",
    "interpolate_to_degree": ".mesh",
    "read_msh": ".mshio",
    "write_msh": ".mshio",
    "write_vtk": ".vtkio",
    # geometry configs and boundary targets
    "GeometryModel": ".geometry",
    "BoundaryTarget": ".geometry",
    "classify_boundary_nodes": ".geometry",
    "evaluate_boundary_target": ".geometry",
    "boundary_error_norm": ".geometry",
    "match_periodic_nodes": ".geometry",
    # distortion and the penalized objective
    "DistortionIntegrals": ".distortion",
    "pointwise_distortion": ".distortion",
    "PenaltyFunctional": ".functional",
    # the curving driver
    "CurvingConfig": ".optimizer",
    "curve_mesh": ".optimizer",
    "newton_solve": ".optimizer",
    "ConvergenceLog": ".optimizer",
    "LogRow": ".optimizer",
    # demo meshes
    "generate_annulus": ".generators",
    "generate_sector": ".generators",
    "generate_shell": ".generators",
    # reporting
    "write_convergence_csv": ".report",
    "run_summary": ".report",
    "write_summary_json": ".report",
    "write_history_figure": ".report",
    # errors
    "HocurveError": ".errors",
    "ParameterError": ".errors",
    "MeshFormatError": ".errors",
    "UnsupportedFeatureError": ".errors",
    "DegenerateElementError": ".errors",
    "InvalidConfigurationError": ".errors",
    "GeometryConfigError": ".errors",
    "ProjectionSingularityError": ".errors",
    "PeriodicMatchingError": ".errors",
    "NoConvergenceError": ".errors",
    "StagnationError": ".errors",
    "CurvingFailedError": ".errors",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    try:
        module = _EXPORTS[name]
    except KeyError:
        raise AttributeError(f"module 'hocurve' has no attribute {name!r}")
    value = getattr(importlib.import_module(module, __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(set(globals()) | set(_EXPORTS))
