"""Penalty-method curving driver.

The driver walks through polynomial degrees, and within each degree runs a
penalty loop: project the boundary onto the geometry, freeze that target,
minimize the penalized distortion with Newton plus Armijo backtracking, then
grow the penalty weight.  The linear tolerance handed to GMRES is loosened
early and tightened as the boundary error approaches its goal, and at the
final degree the penalty growth factor is adapted from the observed response
of the boundary error to previous increases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    CurvingFailedError,
    NoConvergenceError,
    ParameterError,
    StagnationError,
)
from .functional import PenaltyFunctional
from .geometry import (
    GeometryModel,
    classify_boundary_nodes,
    evaluate_boundary_target,
    boundary_error_norm,
)
from .linsolve import SSORSmoother, gmres, hessian_solver_pair
from .mesh import HighOrderMesh, interpolate_to_degree


@dataclass
class CurvingConfig:
    """Tunable knobs of the curving run; defaults match the reference setup."""

    degree: int = 4
    penalty_init: float = 10.0
    growth_init: float = 10.0
    early_factor: float = 2.0          # boundary-error margin for moving up a degree
    constraint_tol_rel: float = 1e-12  # scaled by the mesh bounding-box diagonal
    gradient_tol: float = 1e-8
    forcing_max: float = 1e-3
    forcing_min: float = 1e-8
    newton_reduction: float = 0.1      # relative gradient target mid-run
    armijo_slope: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 30
    max_newton_iterations: int = 50
    max_penalty_iterations: int = 100
    restart: int = 20
    max_linear_iterations: int = 400
    adaptive_penalty: bool = True      # False: always grow by growth_init
    adaptive_forcing: bool = True      # False: always solve at forcing_min
    continuation: bool = True          # False: start directly at `degree`
    assembled_path: bool = False       # True: assembled Hessian with SSOR only
    literal_optimal_factor: bool = False  # printed, uncorrected growth cap

    def __post_init__(self):
        if self.degree not in (2, 3, 4):
            raise ParameterError(f"target degree must be 2, 3, or 4, got {self.degree}")
        for name in ("penalty_init", "growth_init", "early_factor",
                     "constraint_tol_rel", "gradient_tol", "forcing_max",
                     "forcing_min", "newton_reduction", "armijo_slope"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ParameterError("backtrack_factor must be in (0, 1)")
        if self.forcing_min > self.forcing_max:
            raise ParameterError("forcing_min must not exceed forcing_max")
        for name in ("max_backtracks", "max_newton_iterations",
                     "max_penalty_iterations", "restart",
                     "max_linear_iterations"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be at least 1")


@dataclass
class NewtonStats:
    iterations: int = 0
    linear_outer: int = 0
    linear_inner: int = 0
    gradient_norm: float = 0.0
    converged: bool = False


@dataclass
class LogRow:
    """One penalty iteration: state at its start, work done by its solve."""

    degree: int
    iteration: int
    penalty: float
    constraint_norm: float
    gradient_norm: float
    forcing: float
    newton_iterations: int
    linear_outer: int
    linear_inner: int


@dataclass
class ConvergenceLog:
    rows: list[LogRow] = field(default_factory=list)
    # reprojected boundary error and subproblem gradient norm at convergence
    final_constraint_norm: float = math.nan
    final_gradient_norm: float = math.nan

    def iterations_for_degree(self, degree: int) -> int:
        return sum(1 for row in self.rows if row.degree == degree)

    def total_linear(self, degrees=None) -> tuple[int, int]:
        """(outer, inner) linear iteration totals, optionally per degree set."""
        rows = self.rows if degrees is None else \
            [r for r in self.rows if r.degree in degrees]
        return (sum(r.linear_outer for r in rows),
                sum(r.linear_inner for r in rows))


def forcing_progress(eps_k: float, eps_0: float, eps_star: float,
                     m_k: float) -> float:
    """Progress estimate in [0, 1]: 0 far from the boundary goal, 1 at it.

    The numerator looks one step ahead, taking the current boundary error
    divided by the growth factor as the expected error after the next solve.
    """
    if eps_0 <= eps_star:
        return 1.0
    predicted = eps_k / m_k if math.isfinite(m_k) else 0.0
    if predicted <= 0.0:
        return 1.0
    t = math.log(eps_0 / predicted) / math.log(eps_0 / eps_star)
    return min(max(t, 0.0), 1.0)


def compute_forcing_term(eps_k: float, eps_0: float, eps_star: float,
                         m_k: float, delta_max: float = 1e-3,
                         delta_min: float = 1e-8) -> float:
    """Relative linear tolerance interpolated between the loose and tight ends."""
    t = forcing_progress(eps_k, eps_0, eps_star, m_k)
    return delta_max ** (1.0 - t) * delta_min ** t


def first_iteration_penalty_parameter(eps_cur: float, eps_next: float,
                                      mu: float) -> float:
    """Penalty weight to start the next degree with, keeping mu*eps steady."""
    if eps_next <= 0.0 or eps_cur <= 0.0:
        # no information to transfer; a zero weight would also break every
        # later multiplicative update
        return mu
    return mu * (eps_cur / eps_next)


def penalty_parameter_adaption(mu_prev: float, mu_k: float, eps_prev: float,
                               eps_k: float, eps_star: float,
                               literal_optimal_factor: bool = False
                               ) -> tuple[float, float]:
    """Next penalty weight and the growth factor actually applied.

    The observed sensitivity s compares how the boundary error responded to
    the last weight increase; s near one means the error shrinks in lockstep
    with the weight, so the weight can jump straight to the value predicted
    to reach the goal.  A cap derived from the sensitivity error protects
    against overshooting when the response was weaker.
    """
    if eps_k <= 0.0:
        return mu_k, 1.0
    s = (mu_prev / mu_k) * (eps_prev / eps_k)
    err = max(s, 1.0 / s) - 1.0
    m_model = math.inf if err < 1e-12 else max(10.0, 1.0 / err)
    if literal_optimal_factor:
        m_goal = 1.01 * (eps_star / eps_k)
    else:
        m_goal = 1.01 * (eps_k / eps_star)
    factor = max(min(m_goal, m_model), 1.0)  # never shrink within a degree
    return mu_k * factor, factor


def newton_solve(problem, u0: np.ndarray, delta: float, config: CurvingConfig,
                 gradient_tol: float | None = None
                 ) -> tuple[np.ndarray, NewtonStats]:
    """Backtracking Newton minimization of ``problem`` starting at ``u0``.

    ``problem`` provides value/gradient/hessian_system.  ``gradient_tol``
    None means the mid-run criterion: reduce the gradient infinity norm by
    the configured relative factor; a number means converge to it absolutely.
    Hitting the iteration cap is reported via ``stats.converged``, not raised;
    an exhausted line search raises :class:`StagnationError`.

    When the problem exposes ``value_parts`` and ``mu``, the Armijo test
    compares the shape and mismatch terms separately: near convergence at
    stiff penalty weights a step changes the mismatch term at scales far
    below one ulp of the total objective, and only the split comparison can
    still observe the decrease.
    """
    stats = NewtonStats()
    u = np.asarray(u0, dtype=float).copy()
    grad = problem.gradient(u)
    grad_norm = float(np.abs(grad).max()) if grad.size else 0.0
    # no subproblem needs to be solved beyond the global stationarity goal
    tol = max(config.newton_reduction * grad_norm, config.gradient_tol) \
        if gradient_tol is None else float(gradient_tol)
    stats.gradient_norm = grad_norm
    if grad_norm <= tol:
        stats.converged = True
        return u, stats

    split = hasattr(problem, "value_parts") and hasattr(problem, "mu")
    if split:
        shape, mismatch = problem.value_parts(u)
    else:
        value = problem.value(u)
    for _ in range(config.max_newton_iterations):
        system = problem.hessian_system(u)
        if config.assembled_path:
            operator = system.assembled()
            precond = SSORSmoother(operator)
        else:
            operator, precond = hessian_solver_pair(
                system, delta, restart=config.restart,
                max_iter=config.max_linear_iterations)
        try:
            direction, solve_stats = gmres(
                operator, -grad, precond=precond, rel_tol=delta,
                restart=config.restart, max_iter=config.max_linear_iterations)
        except NoConvergenceError as err:  # partial solve still usable
            direction, solve_stats = err.best, err.stats
        stats.linear_outer += solve_stats.outer_iterations
        stats.linear_inner += solve_stats.inner_iterations

        slope = float(grad @ direction)
        if not np.all(np.isfinite(direction)) or slope >= 0.0:
            direction = -grad
            slope = float(grad @ direction)

        step = 1.0
        accepted = False
        for _ in range(config.max_backtracks):
            candidate = u + step * direction
            if split:
                trial_shape, trial_mismatch = problem.value_parts(candidate)
                decrease = (trial_shape - shape) + \
                    problem.mu * (trial_mismatch - mismatch)
                accepted = math.isfinite(trial_shape) and \
                    decrease <= config.armijo_slope * step * slope
            else:
                trial = problem.value(candidate)
                accepted = math.isfinite(trial) and \
                    trial <= value + config.armijo_slope * step * slope
            if accepted:
                break
            step *= config.backtrack_factor
        if not accepted:
            if stats.iterations > 0:
                # the solve made progress before hitting resolution limits;
                # hand the partial iterate back like an iteration-budget
                # exit, the caller refreezes and retries on fresh footing
                break
            raise StagnationError(
                f"line search exhausted after {config.max_backtracks} "
                f"halvings at gradient norm {grad_norm:.3e}", stats=stats)

        u = candidate
        if split:
            shape, mismatch = trial_shape, trial_mismatch
        else:
            value = trial
        stats.iterations += 1
        grad = problem.gradient(u)
        grad_norm = float(np.abs(grad).max())
        stats.gradient_norm = grad_norm
        if grad_norm <= tol:
            stats.converged = True
            break
    return u, stats


def degree_converged(mesh: HighOrderMesh, degree: int, degree_max: int,
                     eps_star: float, omega_star: float, mu: float, target,
                     model: GeometryModel | None = None,
                     early_factor: float = 2.0) -> bool:
    """Is this degree done: fully converged at the top degree, or close
    enough that the next degree's fresh boundary error dominates."""
    if degree == degree_max:
        functional = PenaltyFunctional(mesh, mu=mu)
        functional.set_target(target)
        eps = functional.constraint_norm(mesh.coords)
        grad = functional.gradient(functional.to_vector(mesh.coords))
        return eps < eps_star and float(np.abs(grad).max()) < omega_star
    if model is None:
        raise ParameterError("intermediate-degree check needs the geometry model")
    err_cur = boundary_error_norm(mesh, target, normalized=False)
    lifted = interpolate_to_degree(mesh, degree + 1)
    err_next = boundary_error_norm(
        lifted, evaluate_boundary_target(lifted, model), normalized=False)
    return early_factor * err_cur < err_next


def curve_mesh(linear_mesh: HighOrderMesh, model: GeometryModel,
               config: CurvingConfig | None = None,
               callback: Callable[[LogRow], None] | None = None
               ) -> tuple[HighOrderMesh, ConvergenceLog]:
    """Curve a linear mesh to the geometry at the configured degree.

    Returns the curved mesh together with the per-iteration log.  Raises
    :class:`CurvingFailedError` when a degree exhausts its iteration budget
    and propagates :class:`StagnationError` with the current mesh attached.
    """
    config = config or CurvingConfig()
    if linear_mesh.degree != 1:
        raise ParameterError(
            f"expected a linear input mesh, got degree {linear_mesh.degree}")
    if model.dim != linear_mesh.dim:
        raise ParameterError(
            f"geometry is {model.dim}D but the mesh is {linear_mesh.dim}D")
    classify_boundary_nodes(linear_mesh, model)  # fail fast on unmapped markers

    eps_star = config.constraint_tol_rel * linear_mesh.bbox_diagonal()
    degrees = range(2 if config.continuation else config.degree,
                    config.degree + 1)
    log = ConvergenceLog()

    mu = config.penalty_init
    growth = config.growth_init
    eps_0: float | None = None
    # (weight, fresh boundary error after solving with it), latest last;
    # carried across degrees so the adaption can fire on its first chance
    response: list[tuple[float, float]] = []

    mesh = interpolate_to_degree(linear_mesh, degrees[0])
    target = None
    eps_now = 0.0
    for degree in degrees:
        functional = PenaltyFunctional(mesh, mu=mu)
        advanced = False

        for iteration in range(config.max_penalty_iterations):
            if target is None:  # entering a degree; otherwise carried over
                target = evaluate_boundary_target(mesh, model)
                eps_now = boundary_error_norm(mesh, target)
            functional.set_target(target)
            functional.rebase(mesh.coords)
            functional.set_penalty(mu)
            if eps_0 is None:
                eps_0 = eps_now

            progress = forcing_progress(eps_now, eps_0, eps_star, growth)
            if config.adaptive_forcing:
                delta = config.forcing_max ** (1.0 - progress) * \
                    config.forcing_min ** progress
            else:
                delta = config.forcing_min
            absolute = config.gradient_tol \
                if degree == config.degree and progress >= 1.0 else None

            u0 = np.zeros(mesh.dim * mesh.num_nodes)
            grad_norm = float(np.abs(functional.gradient(u0)).max())
            try:
                u_new, newton_stats = newton_solve(functional, u0, delta,
                                                   config, absolute)
            except StagnationError as err:
                err.mesh = mesh
                raise
            mesh = mesh.with_coords(functional.to_coords(u_new))

            row = LogRow(degree=degree, iteration=iteration, penalty=mu,
                         constraint_norm=eps_now, gradient_norm=grad_norm,
                         forcing=delta,
                         newton_iterations=newton_stats.iterations,
                         linear_outer=newton_stats.linear_outer,
                         linear_inner=newton_stats.linear_inner)
            log.rows.append(row)
            if callback is not None:
                callback(row)

            # reproject the moved boundary; this is also the next frozen target
            target = evaluate_boundary_target(mesh, model)
            eps_now = boundary_error_norm(mesh, target)
            response.append((mu, eps_now))
            del response[:-2]

            if degree == config.degree:
                # converged: the reprojected boundary sits on the geometry to
                # tolerance and the solve reached stationarity on its frozen
                # subproblem (the fixed point leaves a tangential gradient
                # proportional to eps when measured against fresh targets)
                if eps_now < eps_star \
                        and newton_stats.gradient_norm < config.gradient_tol:
                    log.final_constraint_norm = eps_now
                    log.final_gradient_norm = newton_stats.gradient_norm
                    advanced = True
                    break
            else:
                err_cur = boundary_error_norm(mesh, target, normalized=False)
                lifted = interpolate_to_degree(mesh, degree + 1)
                lifted_target = evaluate_boundary_target(lifted, model)
                err_next = boundary_error_norm(lifted, lifted_target,
                                               normalized=False)
                # advance when the next degree's fresh error dominates, or
                # when this degree already meets the final standard (covers
                # boundaries that start exactly on the geometry)
                if config.early_factor * err_cur < err_next or \
                        (eps_now < eps_star and
                         newton_stats.gradient_norm < config.gradient_tol):
                    mu = first_iteration_penalty_parameter(err_cur, err_next, mu)
                    mesh = lifted
                    target = None
                    advanced = True
                    break

            # the convergence check failed: raise the weight and go again
            if degree == config.degree and config.adaptive_penalty \
                    and len(response) == 2:
                (mu_a, eps_a), (mu_b, eps_b) = response
                mu, growth = penalty_parameter_adaption(
                    mu_a, mu_b, eps_a, eps_b, eps_star,
                    config.literal_optimal_factor)
            else:
                mu = growth * mu

        if not advanced:
            raise CurvingFailedError(
                f"degree {degree} used all {config.max_penalty_iterations} "
                f"penalty iterations without meeting its goal", log=log,
                mesh=mesh)

    # every accepted step kept the objective finite, so this cannot trip;
    # still, validity at the quadrature points is part of the contract
    if not np.all(np.isfinite(functional.integrals.element_values(mesh.coords))):
        raise CurvingFailedError("final mesh has invalid quadrature points",
                                 log=log, mesh=mesh)
    return mesh, log
