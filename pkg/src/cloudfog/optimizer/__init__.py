"""MILP formulation, exact search, exhaustive oracle and feasibility checks."""

from .problem import (
    InfeasibleError,
    ObjectiveCase,
    PlacementProblem,
    PlacementSolution,
    TaskRequest,
    UnsupportedError,
    Weights,
    baseline_cloud,
    case_weights,
    evaluate,
)
from .milp import MilpModel, formulate
from .lp import emit_lp, parse_lp
from .exact import brute_force, solve_exact
from .feasibility import check_feasible

__all__ = [
    "InfeasibleError",
    "MilpModel",
    "ObjectiveCase",
    "PlacementProblem",
    "PlacementSolution",
    "TaskRequest",
    "UnsupportedError",
    "Weights",
    "baseline_cloud",
    "brute_force",
    "case_weights",
    "check_feasible",
    "emit_lp",
    "evaluate",
    "formulate",
    "parse_lp",
    "solve_exact",
]
