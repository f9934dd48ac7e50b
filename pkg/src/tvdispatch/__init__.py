"""Time-varying economic dispatch with one-iteration-per-step ADMM."""

from .model import (DispatchInstance, QuadraticObjective, Scenario, curvature_bounds,
                    eval_gradient, eval_objective, quadratic_instance, validate_instance)
from .projection import ProjectionTask, project_box, project_polyhedron, solve_reduced_qp
from .coop import run_coop_projection
from .engines import PartialFeasibilityEngine, TotalFeasibilityEngine, select_rho
from .oracle import drift_stats, solve_instance
from .scenario import ScenarioConfig, build_scenario
from .runner import simulate

__version__ = "0.1.0"

__all__ = [
    "DispatchInstance", "QuadraticObjective", "Scenario", "curvature_bounds",
    "eval_gradient", "eval_objective", "quadratic_instance", "validate_instance",
    "ProjectionTask", "project_box", "project_polyhedron", "solve_reduced_qp",
    "run_coop_projection", "PartialFeasibilityEngine", "TotalFeasibilityEngine",
    "select_rho", "drift_stats", "solve_instance", "ScenarioConfig", "build_scenario",
    "simulate",
]
