"""The penalized objective driving mesh curving.

For node coordinates x and frozen boundary targets g the objective is

    F(x) = E(x) / V  +  mu * P(x) / B

where E integrates the squared pointwise distortion over the straight
mesh, P is the squared L2 boundary mismatch ||Tr x - g||^2 on the straight
boundary, and V, B are the straight volume and boundary measure (the norms
of the constant 1), making both terms dimensionless and mesh-size
independent.

P is evaluated through an assembled boundary mass matrix, so the penalty
gradient is a sparse product and its Hessian is the constant block-diagonal
(2 mu / B) M repeated per coordinate.  Flat vectors use the component-major
layout of :mod:`hocurve.distortion`.

The optimization variable is the displacement from an anchor configuration
rather than absolute coordinates.  At large mu the minimizer sits within a
few ulp of the targets, and forming ``coords - target`` from absolute
positions cannot resolve it: one ulp of a coordinate times the penalty
curvature already exceeds usable gradient tolerances.  Keeping the state as
a small displacement and the targets as the small offset ``target - anchor``
makes the mismatch arithmetic exact at the scale where it matters.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .distortion import DistortionIntegrals, HessianFactors
from .errors import ParameterError
from .geometry import BoundaryTarget
from .mesh import HighOrderMesh, linear_face_measures, total_volume
from .quadrature import simplex_rule
from .reference import reference_element

_REF_FACE_MEASURE = {2: 1.0, 3: 0.5}


def boundary_mass_matrix(mesh: HighOrderMesh) -> sp.csr_matrix:
    """Mass matrix of the straight boundary faces, N x N with entries only
    on boundary nodes."""
    if mesh.num_boundary_faces == 0:
        return sp.csr_matrix((mesh.num_nodes, mesh.num_nodes))
    ref = reference_element(mesh.dim - 1, mesh.degree)
    rule = simplex_rule(mesh.dim - 1, 2 * mesh.degree)
    vals = ref.shape_values(rule.points)  # (Q, n)
    local = np.einsum("q,qi,qj->ij", rule.weights, vals, vals)
    scale = linear_face_measures(mesh) / _REF_FACE_MEASURE[mesh.dim]
    face_nodes = mesh.boundary_face_nodes()
    n = ref.num_nodes
    rows = np.repeat(face_nodes, n, axis=1).ravel()
    cols = np.tile(face_nodes, (1, n)).ravel()
    data = (scale[:, None, None] * local[None, :, :]).ravel()
    mat = sp.coo_matrix((data, (rows, cols)),
                        shape=(mesh.num_nodes, mesh.num_nodes))
    return mat.tocsr()


class HessianSystem:
    """Hessian of the objective at one iterate: matrix-free product plus
    the per-component diagonal blocks used for preconditioning."""

    def __init__(self, functional: "PenaltyFunctional", fac: HessianFactors,
                 coords: np.ndarray):
        self._f = functional
        self._fac = fac
        self._coords = coords
        self.size = functional.mesh.dim * functional.mesh.num_nodes

    def matvec(self, v: np.ndarray) -> np.ndarray:
        f = self._f
        N = f.mesh.num_nodes
        u = v.reshape(f.mesh.dim, N).T
        out = f.integrals.apply_hessian(self._fac, u) / f.volume
        out = out.T.copy()
        out += (2 * f.mu / f.boundary_measure) * (f.mass @ u).T
        return out.ravel()

    def diagonal_blocks(self) -> list[sp.csr_matrix]:
        f = self._f
        penalty = (2 * f.mu / f.boundary_measure) * f.mass
        return [blk / f.volume + penalty
                for blk in f.integrals.diagonal_blocks(self._fac)]

    def assembled(self) -> sp.csr_matrix:
        """Full sparse Hessian; intended for small problems and checks."""
        f = self._f
        H = f.integrals.hessian(self._coords) / f.volume
        penalty = (2 * f.mu / f.boundary_measure) * f.mass
        return (H + sp.block_diag([penalty] * f.mesh.dim, format="csr")).tocsr()


class PenaltyFunctional:
    """Objective, gradient, and Hessian access at a fixed penalty weight."""

    def __init__(self, mesh: HighOrderMesh, mu: float = 1.0):
        if mu < 0:
            raise ParameterError(f"penalty weight must be nonnegative, got {mu}")
        self.mesh = mesh
        self.integrals = DistortionIntegrals(mesh)
        self.mass = boundary_mass_matrix(mesh)
        self.volume = total_volume(mesh)
        self.boundary_measure = float(linear_face_measures(mesh).sum())
        if self.boundary_measure <= 0:
            raise ParameterError("mesh has no boundary faces to constrain")
        self.mu = float(mu)
        self.anchor = mesh.coords.copy()  # displacements are measured from here
        self.target = mesh.coords.copy()  # (N, dim); zero mismatch initially
        self.offset = np.zeros_like(self.anchor)  # target - anchor, kept small

    def set_target(self, target: BoundaryTarget):
        self.target = target.full(self.mesh)
        self.offset = self.target - self.anchor

    def rebase(self, coords: np.ndarray):
        """Measure displacements from these coordinates from now on."""
        self.anchor = coords.copy()
        self.offset = self.target - self.anchor

    def set_penalty(self, mu: float):
        if mu < 0:
            raise ParameterError(f"penalty weight must be nonnegative, got {mu}")
        self.mu = float(mu)

    # flat component-major displacement vector <-> (N, dim) coordinates
    def to_coords(self, u: np.ndarray) -> np.ndarray:
        return self.anchor + self._displacement(u)

    def to_vector(self, coords: np.ndarray) -> np.ndarray:
        return (coords - self.anchor).T.ravel()

    def _displacement(self, u: np.ndarray) -> np.ndarray:
        return u.reshape(self.mesh.dim, self.mesh.num_nodes).T

    def penalty_quadratic(self, coords: np.ndarray) -> float:
        """P(x): squared boundary mismatch through the mass matrix."""
        diff = coords - self.target
        return float(np.einsum("nr,nr->", diff, self.mass @ diff))

    def constraint_norm(self, coords: np.ndarray) -> float:
        """Root mean square boundary mismatch, the epsilon the solver tracks."""
        return float(np.sqrt(self.penalty_quadratic(coords)
                             / self.boundary_measure))

    def value_parts(self, u: np.ndarray) -> tuple[float, float]:
        """Shape term E/V and mismatch term P/B at the displacement u.

        The mismatch is formed from the displacement and the small target
        offset, never from absolute positions, so it stays exact well below
        coordinate ulp resolution.
        """
        disp = self._displacement(u)
        diff = disp - self.offset
        mismatch = float(np.einsum("nr,nr->", diff, self.mass @ diff))
        return (self.integrals.energy(self.anchor + disp) / self.volume,
                mismatch / self.boundary_measure)

    def value(self, u: np.ndarray) -> float:
        shape, mismatch = self.value_parts(u)
        return shape + self.mu * mismatch

    def gradient(self, u: np.ndarray) -> np.ndarray:
        disp = self._displacement(u)
        g = self.integrals.gradient(self.anchor + disp) / self.volume
        diff = disp - self.offset
        g = g + (2 * self.mu / self.boundary_measure) * (self.mass @ diff)
        return g.T.ravel()

    def hessian_system(self, u: np.ndarray) -> HessianSystem:
        coords = self.to_coords(u)
        fac = self.integrals.factors(coords)
        return HessianSystem(self, fac, coords.copy())
