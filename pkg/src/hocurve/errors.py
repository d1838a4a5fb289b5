"""Exception hierarchy shared across the package.

Every error raised by library code derives from :class:`HocurveError` so
callers (and the CLI) can map failures to exit categories without matching
on message strings.
"""

from __future__ import annotations


class HocurveError(Exception):
    """Base class for all library errors."""


class ParameterError(HocurveError):
    """A caller-supplied parameter is out of range or inconsistent."""


class MeshFormatError(HocurveError):
    """A mesh file violates the supported format subset.

    Carries the offending 1-based line number when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnsupportedFeatureError(MeshFormatError):
    """The file is syntactically valid but uses features outside the subset."""


class DegenerateElementError(HocurveError):
    """An element of the initial linear mesh has a singular affine map."""


class InvalidConfigurationError(HocurveError):
    """Derivatives were requested at a configuration with non-positive
    Jacobian determinant somewhere, where they are undefined."""


class GeometryConfigError(HocurveError):
    """The geometry description is malformed or inconsistent with the mesh."""


class ProjectionSingularityError(HocurveError):
    """Closest-point projection is not unique (e.g. the center of a sphere)."""


class PeriodicMatchingError(HocurveError):
    """Periodic node pairing failed to find a one-to-one match."""


class SingularSmootherError(HocurveError):
    """A relaxation sweep hit a zero diagonal entry."""


class NoConvergenceError(HocurveError):
    """An iterative solver exhausted its iteration budget.

    The best iterate found and the solve statistics are attached so callers
    can decide whether the partial result is still usable.
    """

    def __init__(self, message: str, best=None, stats=None):
        super().__init__(message)
        self.best = best
        self.stats = stats


class StagnationError(HocurveError):
    """A line search could not find an acceptable step."""

    def __init__(self, message: str, mesh=None, stats=None):
        super().__init__(message)
        self.mesh = mesh
        self.stats = stats


class CurvingFailedError(HocurveError):
    """The outer penalty loop ran out of iterations.

    The convergence log collected so far is attached for diagnostics.
    """

    def __init__(self, message: str, log=None, mesh=None):
        super().__init__(message)
        self.log = log
        self.mesh = mesh
