"""Optimal boundary-flux control: cost, gradient, fixed point, reduced system.

The cost is the quadrature-evaluated tracking term plus a boundary penalty
M/2 on the control.  Its gradient has the boundary representation
M q - (trace of adjoint); dividing the adjoint trace by M gives the control
update map whose fixed point is the optimal control, a contraction whenever
M exceeds the square of the trace norm over the squared coercivity floor.

Two independent routes compute the optimum: iterating the update map, and
solving the dense reduced normal system assembled column by column from unit
trace excitations.  The second path exists to cross-check the first, so the
two must never share their formulation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import scipy.linalg

from . import assembly, pde
from .linsolve import ConvergenceError, DiscreteConstants, factorize
from .mesh import BoundaryTag, Mesh, NodalField, TraceField, dof_partition, zero_trace


@dataclass(frozen=True)
class OptimalSolution:
    """Optimal control with its state, adjoint and solve diagnostics."""

    q_opt: TraceField
    u_opt: NodalField
    p_opt: NodalField
    cost: float
    gradient_norm: float
    iterations: int
    contraction_ratios: List[float]


def cost(mesh: Mesh, spec: pde.ProblemSpec, q: TraceField) -> float:
    """Half the quadrature tracking misfit plus M/2 times the squared control norm."""
    u = pde.solve_state(mesh, spec, q)
    return _cost_of_state(spec, u, q)


def _cost_of_state(spec, u, q) -> float:
    track = assembly.l2_misfit_sq(u, spec.z_d)
    return 0.5 * track + 0.5 * spec.M * assembly.norm(q, "Q") ** 2


def gradient(mesh: Mesh, spec: pde.ProblemSpec, q: TraceField) -> TraceField:
    """Boundary representation M q - (adjoint trace) of the cost derivative.

    The boundary mass matrix cancels between the two terms of the derivative,
    so the nodal combination below is the exact representer of the derivative
    in the boundary inner product.
    """
    u = pde.solve_state(mesh, spec, q)
    p = pde.solve_adjoint(mesh, spec, u)
    return _gradient_of_adjoint(spec, q, p)


def _gradient_of_adjoint(spec, q, p) -> TraceField:
    return TraceField(q.mesh, spec.M * q.coefficients - assembly.trace_restrict(p).coefficients)


def fixed_point_map(mesh: Mesh, spec: pde.ProblemSpec, q: TraceField) -> TraceField:
    """Control update map: adjoint trace divided by M."""
    u = pde.solve_state(mesh, spec, q)
    p = pde.solve_adjoint(mesh, spec, u)
    return TraceField(q.mesh, assembly.trace_restrict(p).coefficients / spec.M)


def solve_optimal_fixed_point(
    mesh: Mesh,
    spec: pde.ProblemSpec,
    q0: Optional[TraceField] = None,
    tol: float = 1e-10,
    max_iter: int = 10000,
    constants: Optional[DiscreteConstants] = None,
) -> OptimalSolution:
    """Iterate the control update map to its fixed point.

    Stops when the boundary-norm step drops below tol * max(1, |q|).  When
    discrete constants are supplied and M sits at or below the contraction
    threshold, a warning is issued and the iteration proceeds anyway.
    """
    if constants is not None:
        bound = constants.contraction_bound(spec.alpha)
        if spec.M <= bound:
            warnings.warn(
                f"penalty weight M={spec.M:g} is not above the contraction bound "
                f"{bound:g}; the control iteration may diverge",
                stacklevel=2,
            )
    q = q0 if q0 is not None else zero_trace(mesh)
    if q.mesh is not mesh:
        raise ValueError("start control lives on a different mesh")
    ratios: List[float] = []
    prev_step = None
    iterations = 0
    for iterations in range(1, max_iter + 1):
        q_new = fixed_point_map(mesh, spec, q)
        step = assembly.norm(q_new - q, "Q")
        if prev_step is not None and prev_step > 1e-300:
            ratios.append(step / prev_step)
        q = q_new
        if step <= tol * max(1.0, assembly.norm(q, "Q")):
            break
        prev_step = step
    else:
        last = f"{ratios[-1]:.3g}" if ratios else "n/a"
        raise ConvergenceError(
            f"control iteration did not converge in {max_iter} steps (last step ratio {last})"
        )

    u = pde.solve_state(mesh, spec, q)
    p = pde.solve_adjoint(mesh, spec, u)
    grad = _gradient_of_adjoint(spec, q, p)
    return OptimalSolution(
        q_opt=q,
        u_opt=u,
        p_opt=p,
        cost=_cost_of_state(spec, u, q),
        gradient_norm=assembly.norm(grad, "Q"),
        iterations=iterations,
        contraction_ratios=ratios,
    )


def reduced_normal_system(mesh: Mesh, spec: pde.ProblemSpec, max_trace_dofs: int = 2000):
    """Dense normal operator, linear term and constant of the reduced cost.

    The cost as a function of the control alone is
    1/2 q' G q - L' q + c0.  G couples unit trace excitations through the
    state response and adds M times the boundary mass; it is symmetric
    positive definite, so a factorization failure downstream signals an
    assembly bug.  Columns are built with a direct factorization of the one
    system matrix, independent of the iterative path.
    """
    part = dof_partition(mesh)
    g2 = part.gamma2_trace_dofs
    m = len(g2)
    if m > max_trace_dofs:
        raise ValueError(f"reduced system guard: {m} trace vertices exceed the cap {max_trace_dofs}")

    stiff = assembly.assemble_stiffness(mesh)
    mass = assembly.assemble_mass(mesh)
    b2 = assembly.assemble_boundary_mass(mesh, BoundaryTag.GAMMA2)
    b2_cols = np.asarray(b2[:, g2].todense())
    load_g = assembly.assemble_load(mesh, spec.g)
    nvert = len(mesh.vertices)

    if spec.alpha is None:
        free = part.free_dofs
        matrix = stiff[free][:, free].tocsr()
        solve = factorize(matrix)
        lift = np.zeros(nvert)
        lift[part.gamma1_dofs] = spec.b
        rhs0 = load_g - stiff @ lift
        u0 = lift.copy()
        u0[free] = solve(rhs0[free])
        response = np.zeros((nvert, m))
        response[free, :] = solve(-b2_cols[free, :])
    else:
        b1 = assembly.assemble_boundary_mass(mesh, BoundaryTag.GAMMA1)
        matrix = (stiff + spec.alpha * b1).tocsr()
        solve = factorize(matrix)
        rhs0 = load_g + spec.alpha * spec.b * (b1 @ np.ones(nvert))
        u0 = solve(rhs0)
        response = solve(-b2_cols)

    trace_mass = np.asarray(b2[g2][:, g2].todense())
    gmat = response.T @ (mass @ response) + spec.M * trace_mass
    gmat = 0.5 * (gmat + gmat.T)
    lvec = response.T @ (assembly.assemble_load(mesh, spec.z_d) - mass @ u0)
    u0_field = NodalField(mesh, u0)
    c0 = 0.5 * assembly.l2_misfit_sq(u0_field, spec.z_d)
    return gmat, lvec, c0


def solve_optimal_reduced(
    mesh: Mesh, spec: pde.ProblemSpec, max_trace_dofs: int = 2000
) -> OptimalSolution:
    """Solve the dense reduced normal system directly; the oracle route."""
    gmat, lvec, _ = reduced_normal_system(mesh, spec, max_trace_dofs)
    try:
        chol = scipy.linalg.cho_factor(gmat)
    except scipy.linalg.LinAlgError as exc:
        raise ConvergenceError(f"reduced operator is not positive definite: {exc}") from exc
    q = TraceField(mesh, scipy.linalg.cho_solve(chol, lvec))
    u = pde.solve_state(mesh, spec, q)
    p = pde.solve_adjoint(mesh, spec, u)
    grad = _gradient_of_adjoint(spec, q, p)
    return OptimalSolution(
        q_opt=q,
        u_opt=u,
        p_opt=p,
        cost=_cost_of_state(spec, u, q),
        gradient_norm=assembly.norm(grad, "Q"),
        iterations=0,
        contraction_ratios=[],
    )
