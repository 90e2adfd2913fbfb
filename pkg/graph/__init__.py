"""LangGraph orchestration of the optimization loop.

Files in this directory:
- optimization_workflow.py: Optimization state, graph nodes and the run driver
"""

from typing import List

from graph.optimization_workflow import (
    DesignFields,
    OptimizationError,
    OptimizationResult,
    OptimizationState,
    WorkflowCounters,
    create_optimization_workflow,
    mesh_and_model,
    run_optimization,
    solve_equilibrium,
)

__all__: List[str] = [
    "DesignFields",
    "OptimizationError",
    "OptimizationResult",
    "OptimizationState",
    "WorkflowCounters",
    "create_optimization_workflow",
    "mesh_and_model",
    "run_optimization",
    "solve_equilibrium",
]
