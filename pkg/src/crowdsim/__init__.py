"""Crowd evacuation simulator: reflected SDE dynamics in polygonal rooms."""
from __future__ import annotations

from .errors import (
    AmbiguousProjection,
    ConfigError,
    CrowdsimError,
    EmptyCone,
    NumericalError,
    OutsideDomain,
    ParseError,
    SolveFailed,
    StuckInCorner,
    TransformRange,
    ValidationError,
)
from .geometry import Domain, ExitSegment, NormalCone, SphereReport
from .integrator import (
    BASE_LEVEL,
    SchemeConfig,
    SimulationProblem,
    TrajectoryRecord,
    brownian_increments,
    convergence_experiment,
    fold_increments,
    holder_quotient,
    run_trajectory,
    simulate,
    stability_experiment,
    step,
)
from .model import (
    CrowdState,
    DriftDiffusion,
    ModelParams,
    SmokeField,
    beta_gate,
    discomfort,
    drift_and_diffusion,
    morse_omega,
    upsilon,
)
from .navfield import Grid, NavigationField, build_grid, grad_at, solve_navigation
from .nondim import ReferenceScales, compute_kappa, dimensionless_groups
from .scenario import OutputSpec, Scenario, dumps_canonical, load_scenario, scenario_from_dict
from .skorohod import DrivingPath, SkorohodSolution, gamma_1d, reflect_increment, solve_path

__version__ = "0.1.0"

__all__ = [
    "AmbiguousProjection",
    "BASE_LEVEL",
    "ConfigError",
    "CrowdState",
    "CrowdsimError",
    "Domain",
    "DriftDiffusion",
    "DrivingPath",
    "EmptyCone",
    "ExitSegment",
    "Grid",
    "ModelParams",
    "NavigationField",
    "NormalCone",
    "NumericalError",
    "OutputSpec",
    "OutsideDomain",
    "ParseError",
    "ReferenceScales",
    "Scenario",
    "SchemeConfig",
    "SimulationProblem",
    "SkorohodSolution",
    "SmokeField",
    "SolveFailed",
    "SphereReport",
    "StuckInCorner",
    "TrajectoryRecord",
    "TransformRange",
    "ValidationError",
    "beta_gate",
    "brownian_increments",
    "build_grid",
    "compute_kappa",
    "convergence_experiment",
    "dimensionless_groups",
    "discomfort",
    "drift_and_diffusion",
    "dumps_canonical",
    "fold_increments",
    "gamma_1d",
    "grad_at",
    "holder_quotient",
    "load_scenario",
    "morse_omega",
    "reflect_increment",
    "run_trajectory",
    "scenario_from_dict",
    "simulate",
    "solve_navigation",
    "solve_path",
    "stability_experiment",
    "step",
    "upsilon",
    "__version__",
]
