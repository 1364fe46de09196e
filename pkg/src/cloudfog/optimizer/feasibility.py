"""Numerical re-check of a solution against every row of the formulation."""

from __future__ import annotations

from typing import List, Mapping, Union

from .milp import formulate
from .problem import PlacementProblem, PlacementSolution

TOL = 1e-6


def check_feasible(
    solution: Union[PlacementSolution, Mapping[str, float]],
    problem: PlacementProblem,
    tol: float = TOL,
) -> List[str]:
    """Violated rows, bounds and integrality; empty means feasible.

    ``solution`` may be a solver result or a raw variable assignment.  For a
    solver result the model objective at the implied point must also match the
    reported objective.
    """
    model = formulate(problem)
    if isinstance(solution, PlacementSolution):
        values = solution.variable_values(problem)
    else:
        values = dict(solution)
    report = model.violations(values, tol)
    if isinstance(solution, PlacementSolution):
        obj = model.objective_value(values)
        if abs(obj - solution.objective) > tol * max(1.0, abs(solution.objective)):
            report.append(f"objective: model value {obj!r} != reported {solution.objective!r}")
    return report
