"""Pointwise shape distortion of the curved map and its derivatives.

The distortion of a Jacobian J (physical map differentiated against the
straight-sided element) is

    eta(J) = ||J||_F^2 / (n * det0(J)^(2/n)),   det0(d) = (d + |d|) / 2

in n dimensions: 1 for a conformal map, growing without bound as the
element degenerates, and +infinity wherever the orientation is lost.  The
curving functional integrates eta^2 over the straight-sided mesh.

:class:`DistortionIntegrals` evaluates that integral and its first two
derivatives with respect to the node coordinates.  Everything is expressed
through two per-point matrices, the Jacobian ``J`` and its cofactor ``K``,
contracted against the fixed shape-gradient tables, so derivative
evaluation vectorizes across elements and quadrature points.  The Hessian
is available three ways: assembled sparse, as stored factors applied
matrix-free, and as per-component diagonal blocks for preconditioning.

Node layout for flat vectors is component major: dof r * N + i is
coordinate r of node i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidConfigurationError
from .mesh import HighOrderMesh, linear_jacobians
from .quadrature import simplex_rule
from .reference import reference_element

_REF_MEASURE = {2: 0.5, 3: 1.0 / 6.0}


def regularized_det(d):
    """Half-rectified determinant: d for positive arguments, else 0."""
    d = np.asarray(d, dtype=float)
    return (d + np.abs(d)) / 2


def cofactor(jac: np.ndarray) -> np.ndarray:
    """Cofactor matrix (gradient of det) for batches of 2x2 or 3x3."""
    n = jac.shape[-1]
    if n == 2:
        out = np.empty_like(jac)
        out[..., 0, 0] = jac[..., 1, 1]
        out[..., 0, 1] = -jac[..., 1, 0]
        out[..., 1, 0] = -jac[..., 0, 1]
        out[..., 1, 1] = jac[..., 0, 0]
        return out
    return np.cross(jac[..., [1, 2, 0], :], jac[..., [2, 0, 1], :])


def _det_from_cofactor(jac, cof):
    return np.einsum("...c,...c->...", jac[..., 0, :], cof[..., 0, :])


def pointwise_distortion(jac: np.ndarray) -> np.ndarray:
    """eta for a batch of Jacobians, +inf where the determinant is not positive."""
    n = jac.shape[-1]
    frob = np.einsum("...rc,...rc->...", jac, jac)
    det = np.linalg.det(jac)
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = frob / (n * regularized_det(det) ** (2.0 / n))
    return np.where(det > 0, eta, np.inf)


@dataclass
class HessianFactors:
    """State captured at one configuration for matrix-free products."""

    jac: np.ndarray      # (E, Q, dim, dim)
    cof: np.ndarray      # (E, Q, dim, dim)
    frob: np.ndarray     # (E, Q)
    det: np.ndarray      # (E, Q)
    coef: np.ndarray     # (E, Q) quadrature weight * straight volume scale


class DistortionIntegrals:
    """Integrals of eta^2 over the straight-sided mesh and their derivatives."""

    def __init__(self, mesh: HighOrderMesh):
        self.mesh = mesh
        dim = mesh.dim
        self.dim = dim
        self.ref = reference_element(dim, mesh.degree)
        self.rule = simplex_rule(dim, 2 * mesh.degree)
        self.grads = self.ref.shape_gradients(self.rule.points)  # (Q, n, dim)
        lin = linear_jacobians(mesh)
        self.det_lin = np.linalg.det(lin)  # > 0, validated by the mesh
        self.inv_lin = np.linalg.inv(lin)
        self.element_volumes = self.det_lin * _REF_MEASURE[dim]
        self.c0 = 1.0 / dim ** 2
        self.expo = 4.0 / dim
        n = self.ref.num_nodes
        q = self.rule.weights.size
        self._chunk = max(1, int(4_000_000 / (q * n * dim)))

    def _chunks(self):
        E = self.mesh.num_elements
        for start in range(0, E, self._chunk):
            yield start, min(start + self._chunk, E)

    def _jacobians(self, coords, lo, hi):
        """J and the ref-gradient tensor J0 for one element chunk.

        J0[c,q,r,d] contracts node coordinates against raw shape gradients;
        J folds in the inverse straight-element map.
        """
        cells = self.mesh.elements[lo:hi]
        x = coords[cells]  # (C, n, dim)
        j0 = np.einsum("cnr,qnd->cqrd", x, self.grads, optimize=True)
        jac = np.einsum("cqrd,cde->cqre", j0, self.inv_lin[lo:hi],
                        optimize=True)
        return x, jac

    def element_values(self, coords: np.ndarray) -> np.ndarray:
        """Integral of eta^2 over each straight element (+inf if inverted)."""
        out = np.empty(self.mesh.num_elements)
        w = self.rule.weights
        for lo, hi in self._chunks():
            _, jac = self._jacobians(coords, lo, hi)
            frob = np.einsum("cqre,cqre->cq", jac, jac)
            det = _det_from_cofactor(jac, cofactor(jac))
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                dens = self.c0 * frob ** 2 * det ** -self.expo
            dens = np.where(det > 0, dens, np.inf)
            vals = (dens * w).sum(axis=1) * self.det_lin[lo:hi]
            out[lo:hi] = vals
        return out

    def energy(self, coords: np.ndarray) -> float:
        return float(self.element_values(coords).sum())

    def element_distortion(self, coords: np.ndarray | None = None) -> np.ndarray:
        """Root mean square of eta over each element."""
        coords = self.mesh.coords if coords is None else coords
        vals = self.element_values(coords)
        return np.sqrt(vals / self.element_volumes)

    def element_quality(self, coords: np.ndarray | None = None) -> np.ndarray:
        """Inverse RMS distortion in (0, 1], 0 for inverted elements."""
        eta = self.element_distortion(coords)
        with np.errstate(divide="ignore"):
            q = 1.0 / eta
        return np.where(np.isfinite(eta), q, 0.0)

    def _require_valid(self, det):
        if not np.all(det > 0):
            raise InvalidConfigurationError(
                "derivatives requested on a configuration with non-positive "
                "Jacobian determinant")

    def gradient(self, coords: np.ndarray) -> np.ndarray:
        """d(energy)/d(coords) as an (N, dim) array."""
        out = np.zeros_like(coords)
        w = self.rule.weights
        c0, m = self.c0, self.expo
        for lo, hi in self._chunks():
            _, jac = self._jacobians(coords, lo, hi)
            cof = cofactor(jac)
            det = _det_from_cofactor(jac, cof)
            self._require_valid(det)
            frob = np.einsum("cqre,cqre->cq", jac, jac)
            coef = (4 * c0) * w[None, :] * self.det_lin[lo:hi, None] \
                * det ** -m
            s_j = coef * frob
            s_k = -coef * frob ** 2 / (self.dim * det)
            # g_ir = sum_q G_qid * Ainv_de * (s_j J_re + s_k K_re)
            r = s_j[..., None, None] * jac + s_k[..., None, None] * cof
            r = np.einsum("cde,cqre->cqdr", self.inv_lin[lo:hi], r,
                          optimize=True)
            local = np.einsum("qid,cqdr->cir", self.grads, r, optimize=True)
            np.add.at(out, self.mesh.elements[lo:hi], local)
        return out

    def factors(self, coords: np.ndarray) -> HessianFactors:
        """Capture the per-point state the Hessian product needs."""
        E = self.mesh.num_elements
        q = self.rule.weights.size
        dim = self.dim
        jac = np.empty((E, q, dim, dim))
        for lo, hi in self._chunks():
            _, jac[lo:hi] = self._jacobians(coords, lo, hi)
        cof = cofactor(jac)
        det = _det_from_cofactor(jac, cof)
        self._require_valid(det)
        frob = np.einsum("eqrc,eqrc->eq", jac, jac)
        coef = self.c0 * self.rule.weights[None, :] * self.det_lin[:, None] \
            * det ** -self.expo
        return HessianFactors(jac=jac, cof=cof, frob=frob, det=det, coef=coef)

    def apply_hessian(self, fac: HessianFactors, u: np.ndarray) -> np.ndarray:
        """Product of the energy Hessian with a direction, (N, dim) in and out."""
        out = np.zeros_like(u)
        m = self.expo
        for lo, hi in self._chunks():
            cells = self.mesh.elements[lo:hi]
            ue = u[cells]
            jac = fac.jac[lo:hi]
            cof = fac.cof[lo:hi]
            det = fac.det[lo:hi]
            frob = fac.frob[lo:hi]
            coef = fac.coef[lo:hi]
            w0 = np.einsum("cjs,qjd->cqsd", ue, self.grads, optimize=True)
            w = np.einsum("cqsd,cde->cqse", w0, self.inv_lin[lo:hi],
                          optimize=True)
            alpha = np.einsum("cqse,cqse->cq", jac, w)
            beta = np.einsum("cqse,cqse->cq", cof, w)
            sod = frob / det
            s_j = coef * (8 * alpha - 4 * m * sod * beta)
            s_k = coef * m * sod * (m * sod * beta - 4 * alpha)
            r = s_j[..., None, None] * jac + s_k[..., None, None] * cof
            r += (4 * coef * frob)[..., None, None] * w
            # the cofactor-derivative term couples components:
            # sum_s k_is V_sr with V_sr = sum_e W_se K_re
            v = np.einsum("cqse,cqre->cqsr", w, cof)
            r += (coef * m * sod ** 2)[..., None, None] \
                * np.einsum("cqsr,cqse->cqre", v, cof)
            r = np.einsum("cde,cqre->cqdr", self.inv_lin[lo:hi], r,
                          optimize=True)
            local = np.einsum("qid,cqdr->cir", self.grads, r, optimize=True)
            np.add.at(out, cells, local)
        return out

    def _local_hessians(self, fac, lo, hi):
        """Dense per-element Hessians (C, n, dim, n, dim) for one chunk."""
        m = self.expo
        jac = fac.jac[lo:hi]
        cof = fac.cof[lo:hi]
        det = fac.det[lo:hi]
        frob = fac.frob[lo:hi]
        coef = fac.coef[lo:hi]
        d = np.einsum("qnd,cde->cqne", self.grads, self.inv_lin[lo:hi],
                      optimize=True)
        a = np.einsum("cqne,cqre->cqnr", d, jac, optimize=True)
        k = np.einsum("cqne,cqre->cqnr", d, cof, optimize=True)
        sod = frob / det
        h = np.einsum("cq,cqir,cqjs->cirjs", 8 * coef, a, a, optimize=True)
        t = np.einsum("cq,cqir,cqjs->cirjs", 4 * m * coef * sod, a, k,
                      optimize=True)
        h -= t + t.transpose(0, 3, 4, 1, 2)
        h += np.einsum("cq,cqir,cqjs->cirjs", coef * (m * sod) ** 2, k, k,
                       optimize=True)
        h += np.einsum("cq,cqis,cqjr->cirjs", coef * m * sod ** 2, k, k,
                       optimize=True)
        dd = np.einsum("cq,cqie,cqje->cij", 4 * coef * frob, d, d,
                       optimize=True)
        for r in range(self.dim):
            h[:, :, r, :, r] += dd
        return h

    def hessian(self, coords: np.ndarray) -> sp.csr_matrix:
        """Assembled sparse Hessian, component-major (dim*N square)."""
        fac = self.factors(coords)
        N = self.mesh.num_nodes
        dim = self.dim
        n = self.ref.num_nodes
        rows, cols, vals = [], [], []
        for lo, hi in self._chunks():
            h = self._local_hessians(fac, lo, hi)
            cells = self.mesh.elements[lo:hi]
            dofs = (np.arange(dim)[None, None, :] * N
                    + cells[:, :, None])  # (C, n, dim)
            flat = dofs.reshape(hi - lo, n * dim)
            rows.append(np.repeat(flat, n * dim, axis=1).ravel())
            cols.append(np.tile(flat, (1, n * dim)).ravel())
            vals.append(h.reshape(hi - lo, n * dim, n * dim).ravel())
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(dim * N, dim * N))
        return mat.tocsr()

    def diagonal_blocks(self, fac: HessianFactors) -> list[sp.csr_matrix]:
        """Per-component diagonal blocks H_rr as N x N sparse matrices."""
        m = self.expo
        N = self.mesh.num_nodes
        n = self.ref.num_nodes
        blocks = []
        chunks = []
        for lo, hi in self._chunks():
            jac = fac.jac[lo:hi]
            cof = fac.cof[lo:hi]
            det = fac.det[lo:hi]
            frob = fac.frob[lo:hi]
            coef = fac.coef[lo:hi]
            d = np.einsum("qnd,cde->cqne", self.grads, self.inv_lin[lo:hi],
                          optimize=True)
            a = np.einsum("cqne,cqre->cqnr", d, jac, optimize=True)
            k = np.einsum("cqne,cqre->cqnr", d, cof, optimize=True)
            sod = frob / det
            dd = np.einsum("cq,cqie,cqje->cij", 4 * coef * frob, d, d,
                           optimize=True)
            per_r = []
            for r in range(self.dim):
                ar = a[..., r]
                kr = k[..., r]
                h = np.einsum("cq,cqi,cqj->cij", 8 * coef, ar, ar,
                              optimize=True)
                t = np.einsum("cq,cqi,cqj->cij", 4 * m * coef * sod, ar, kr,
                              optimize=True)
                h -= t + t.transpose(0, 2, 1)
                h += np.einsum("cq,cqi,cqj->cij",
                               coef * (m ** 2 + m) * sod ** 2, kr, kr,
                               optimize=True)
                h += dd
                per_r.append(h)
            chunks.append(per_r)
        cells = self.mesh.elements
        for r in range(self.dim):
            rows, cols, vals = [], [], []
            for (lo, hi), per_r in zip(self._chunks(), chunks):
                c = cells[lo:hi]
                rows.append(np.repeat(c, n, axis=1).ravel())
                cols.append(np.tile(c, (1, n)).ravel())
                vals.append(per_r[r].reshape(hi - lo, n * n).ravel())
            mat = sp.coo_matrix(
                (np.concatenate(vals),
                 (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
            blocks.append(mat.tocsr())
        return blocks
