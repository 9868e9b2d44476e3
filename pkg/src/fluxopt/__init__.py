"""Finite element study of boundary-flux control with a clamped/Robin pair.

Two families of discrete optimal control problems posed on nested structured
triangulations of the unit square: one clamps the controlled boundary value
directly, the other enforces it through a Robin transfer term.  The package
provides the mesh and assembly layers, deterministic linear solvers with
discrete constant estimation, the two solver families, the optimizer pair
(contraction iteration and dense reduced solve), and experiment runners that
measure both limits and their commutation.
"""

from .assembly import norm, v_error_vs_exact
from .harness import (
    ConvergenceReport,
    ExperimentConfig,
    config_from_dict,
    default_config,
    run,
    write_csv,
)
from .linsolve import ConvergenceError, DiscreteConstants, estimate_constants, solve_spd
from .mesh import (
    BoundaryTag,
    Mesh,
    NodalField,
    TraceField,
    build_structured_mesh,
    interpolate_nodal,
    interpolate_trace,
    prolongate,
    prolongate_trace,
    refine,
    restrict_trace,
)
from .optctl import (
    OptimalSolution,
    cost,
    fixed_point_map,
    gradient,
    reduced_normal_system,
    solve_optimal_fixed_point,
    solve_optimal_reduced,
)
from .pde import ProblemSpec, solve_adjoint, solve_state

__all__ = [
    "BoundaryTag",
    "ConvergenceError",
    "ConvergenceReport",
    "DiscreteConstants",
    "ExperimentConfig",
    "Mesh",
    "NodalField",
    "OptimalSolution",
    "ProblemSpec",
    "TraceField",
    "build_structured_mesh",
    "config_from_dict",
    "cost",
    "default_config",
    "estimate_constants",
    "fixed_point_map",
    "gradient",
    "interpolate_nodal",
    "interpolate_trace",
    "norm",
    "prolongate",
    "prolongate_trace",
    "reduced_normal_system",
    "refine",
    "restrict_trace",
    "run",
    "solve_adjoint",
    "solve_optimal_fixed_point",
    "solve_optimal_reduced",
    "solve_spd",
    "solve_state",
    "v_error_vs_exact",
    "write_csv",
]
