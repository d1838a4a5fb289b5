"""Iterative linear algebra for the curving Newton systems.

The Newton systems are solved matrix-free: the Hessian is applied element by
element, only its diagonal component blocks are ever assembled, and those
blocks drive a forward block-substitution preconditioner whose inner solves
are themselves small GMRES runs smoothed by symmetric Gauss-Seidel sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from .errors import NoConvergenceError, ParameterError, SingularSmootherError
from .functional import HessianSystem, PenaltyFunctional


@dataclass
class LinearOperator:
    """A square operator given by its action, optionally with assembled storage."""

    size: int
    apply: Callable[[np.ndarray], np.ndarray]
    matrix: sp.csr_matrix | None = None

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.apply(v)


def _as_apply(op) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(op, LinearOperator):
        return op.apply
    if sp.issparse(op) or isinstance(op, np.ndarray):
        return lambda v: op @ v
    if callable(op):
        return op
    raise ParameterError(f"cannot interpret {type(op).__name__} as an operator")


@dataclass
class SolveStats:
    """Iteration accounting for one outer solve."""

    outer_iterations: int = 0
    inner_iterations: int = 0
    relative_residual: float = 0.0
    matvecs: int = 0
    # per-iteration relative residual estimates plus the index where each
    # restart cycle begins, so monotonicity per cycle can be checked
    residual_history: list[float] = field(default_factory=list)
    cycle_starts: list[int] = field(default_factory=list)


def gmres(op, b: np.ndarray, precond=None, rel_tol: float = 1e-8,
          restart: int = 20, max_iter: int = 200) -> tuple[np.ndarray, SolveStats]:
    """Restarted GMRES with right preconditioning.

    Right preconditioning keeps the monitored quantity equal to the true
    residual of the original system, so the convergence test ``norm(b - A x)
    <= rel_tol * norm(b)`` is checked directly.  Raises
    :class:`NoConvergenceError` carrying the best iterate when the iteration
    budget runs out.
    """
    if not 0.0 < rel_tol < 1.0:
        raise ParameterError(f"relative tolerance must be in (0, 1), got {rel_tol}")
    if restart < 1 or max_iter < 1:
        raise ParameterError("restart and max_iter must be positive")
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise ParameterError("right-hand side must be finite")

    apply_op = _as_apply(op)
    apply_pre = _as_apply(precond) if precond is not None else None
    inner_start = getattr(precond, "inner_iterations", 0)

    stats = SolveStats()
    n = b.size
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return np.zeros(n), stats
    target = rel_tol * norm_b

    x = np.zeros(n)
    best_x, best_norm = x, norm_b

    while True:
        r = b - apply_op(x)
        stats.matvecs += 1
        r_norm = float(np.linalg.norm(r))
        if r_norm < best_norm:
            best_x, best_norm = x.copy(), r_norm
        if r_norm <= target:
            stats.relative_residual = r_norm / norm_b
            stats.inner_iterations = getattr(precond, "inner_iterations",
                                             inner_start) - inner_start
            return x, stats
        if stats.outer_iterations >= max_iter:
            stats.relative_residual = best_norm / norm_b
            stats.inner_iterations = getattr(precond, "inner_iterations",
                                             inner_start) - inner_start
            raise NoConvergenceError(
                f"gmres stalled at relative residual {stats.relative_residual:.3e} "
                f"after {stats.outer_iterations} iterations (target {rel_tol:.3e})",
                best=best_x, stats=stats)

        stats.cycle_starts.append(stats.outer_iterations)
        basis = np.empty((restart + 1, n))
        directions = np.empty((restart, n))
        hess = np.zeros((restart + 1, restart))
        cos_g = np.empty(restart)
        sin_g = np.empty(restart)
        rhs = np.zeros(restart + 1)
        rhs[0] = r_norm
        basis[0] = r / r_norm

        k = 0
        while k < restart and stats.outer_iterations < max_iter:
            z = apply_pre(basis[k]) if apply_pre is not None else basis[k]
            directions[k] = z
            w = apply_op(z)
            stats.matvecs += 1
            for i in range(k + 1):  # modified Gram-Schmidt
                hess[i, k] = basis[i] @ w
                w -= hess[i, k] * basis[i]
            h_next = float(np.linalg.norm(w))
            hess[k + 1, k] = h_next

            for i in range(k):
                hi, hj = hess[i, k], hess[i + 1, k]
                hess[i, k] = cos_g[i] * hi + sin_g[i] * hj
                hess[i + 1, k] = -sin_g[i] * hi + cos_g[i] * hj
            denom = float(np.hypot(hess[k, k], hess[k + 1, k]))
            if denom == 0.0:
                # singular projection; drop the column but keep counting so
                # a defective operator cannot loop forever
                stats.outer_iterations += 1
                stats.residual_history.append(abs(rhs[k]) / norm_b)
                break
            cos_g[k] = hess[k, k] / denom
            sin_g[k] = hess[k + 1, k] / denom
            hess[k, k] = denom
            hess[k + 1, k] = 0.0
            rhs[k + 1] = -sin_g[k] * rhs[k]
            rhs[k] = cos_g[k] * rhs[k]

            stats.outer_iterations += 1
            estimate = abs(rhs[k + 1])
            stats.residual_history.append(estimate / norm_b)
            k += 1
            if h_next == 0.0 or estimate <= target:
                break
            basis[k] = w / h_next

        if k > 0:
            y = np.zeros(k)
            for i in range(k - 1, -1, -1):
                y[i] = (rhs[i] - hess[i, i + 1:k] @ y[i + 1:k]) / hess[i, i]
            x = x + directions[:k].T @ y


def ssor_apply(matrix, residual: np.ndarray, sweeps: int = 2,
               omega: float = 1.0) -> np.ndarray:
    """Apply symmetric successive over-relaxation sweeps once, from zero."""
    return SSORSmoother(matrix, sweeps=sweeps, omega=omega)(residual)


class SSORSmoother:
    """Symmetric Gauss-Seidel relaxation reused as a stationary preconditioner.

    Each sweep performs one forward and one backward substitution against the
    scaled triangular parts of the matrix, starting from the zero vector.
    """

    def __init__(self, matrix, sweeps: int = 2, omega: float = 1.0):
        mat = sp.csr_matrix(matrix)
        if mat.shape[0] != mat.shape[1]:
            raise ParameterError(f"smoother needs a square matrix, got {mat.shape}")
        if sweeps < 1:
            raise ParameterError("sweeps must be positive")
        if not 0.0 < omega < 2.0:
            raise ParameterError(f"relaxation factor must be in (0, 2), got {omega}")
        diag = mat.diagonal()
        if np.any(diag == 0.0):
            hit = int(np.flatnonzero(diag == 0.0)[0])
            raise SingularSmootherError(f"zero diagonal entry at row {hit}")
        scaled = sp.diags(diag / omega)
        self.matrix = mat
        self.lower = (sp.tril(mat, k=-1) + scaled).tocsr()
        self.upper = (sp.triu(mat, k=1) + scaled).tocsr()
        self.sweeps = sweeps

    def __call__(self, residual: np.ndarray) -> np.ndarray:
        z = np.zeros_like(residual, dtype=float)
        for _ in range(self.sweeps):
            z += spsolve_triangular(self.lower, residual - self.matrix @ z,
                                    lower=True)
            z += spsolve_triangular(self.upper, residual - self.matrix @ z,
                                    lower=False)
        return z


class BlockPreconditioner:
    """One forward block-substitution pass over the spatial components.

    Unknowns are ordered component-major.  Component blocks below the
    diagonal act through the full matrix-free operator on a partially filled
    vector; each diagonal block is solved by GMRES with SSOR smoothing at the
    same relative tolerance as the outer solve (floored to avoid chasing
    noise) and the same iteration cap.
    """

    def __init__(self, diag_blocks, full_apply, rel_tol: float,
                 restart: int = 20, max_iter: int = 200, sweeps: int = 2):
        self.blocks = [sp.csr_matrix(b) for b in diag_blocks]
        size = self.blocks[0].shape[0]
        for blk in self.blocks:
            if blk.shape != (size, size):
                raise ParameterError("diagonal blocks must be square and equal-sized")
        if len(self.blocks) > 1 and full_apply is None:
            raise ParameterError("coupled components need the full operator")
        self.block_size = size
        self.full_apply = _as_apply(full_apply) if full_apply is not None else None
        self.rel_tol = max(float(rel_tol), 1e-10)
        if not self.rel_tol < 1.0:
            raise ParameterError(f"relative tolerance must be below 1, got {rel_tol}")
        self.restart = restart
        self.max_iter = max_iter
        self.smoothers = [SSORSmoother(b, sweeps=sweeps) for b in self.blocks]
        self.inner_iterations = 0

    @property
    def stored_nonzeros(self) -> int:
        return sum(b.nnz for b in self.blocks)

    def __call__(self, residual: np.ndarray) -> np.ndarray:
        n_comp, size = len(self.blocks), self.block_size
        if residual.shape != (n_comp * size,):
            raise ParameterError(
                f"expected vector of length {n_comp * size}, got {residual.shape}")
        z = np.zeros(n_comp * size)
        for i, (block, smoother) in enumerate(zip(self.blocks, self.smoothers)):
            rhs = residual[i * size:(i + 1) * size].copy()
            if i > 0:
                # components >= i of z are still zero, so the full product
                # returns exactly the sum of the sub-diagonal couplings
                coupled = self.full_apply(z)
                rhs -= coupled[i * size:(i + 1) * size]
            if not rhs.any():
                continue
            solution, stats = gmres(block, rhs, precond=smoother,
                                    rel_tol=self.rel_tol, restart=self.restart,
                                    max_iter=self.max_iter)
            self.inner_iterations += stats.outer_iterations
            z[i * size:(i + 1) * size] = solution
        return z


def hessian_solver_pair(system: HessianSystem, rel_tol: float,
                        restart: int = 20, max_iter: int = 200
                        ) -> tuple[LinearOperator, BlockPreconditioner]:
    """Operator and block preconditioner for one Newton system."""
    op = LinearOperator(system.size, system.matvec)
    precond = BlockPreconditioner(system.diagonal_blocks(), system.matvec,
                                  rel_tol, restart=restart, max_iter=max_iter)
    return op, precond


def penalty_hessian_operator(mesh, mu: float = 1.0, target=None,
                             coords: np.ndarray | None = None) -> LinearOperator:
    """Matrix-free Hessian of the penalized objective at given coordinates.

    Acts on component-major stacked coordinate vectors; equals the assembled
    Hessian product without ever storing the full matrix.
    """
    functional = PenaltyFunctional(mesh, mu=mu)
    if target is not None:
        functional.set_target(target)
    pos = mesh.coords if coords is None else coords
    system = functional.hessian_system(functional.to_vector(pos))
    return LinearOperator(pos.size, system.matvec)
