"""Convergence guardrails for the optimization loop.

The main function is converged(), which runs every check and only lets the
optimizer stop when ALL of them pass.
"""

from guardrails.convergence_checks import (
    check_min_iterations,
    check_objective_plateau,
    check_volume_feasible,
    converged,
    run_convergence_checks,
)

__all__ = [
    "converged",
    "run_convergence_checks",
    "check_min_iterations",
    "check_objective_plateau",
    "check_volume_feasible",
]
