"""Distortion-aware topology optimization workflow.

The optimization loop is a LangGraph state machine. One pass through the
graph is one optimization iteration:

    NODE 1: equilibrium_node()
        - Static solve of the structure with the ersatz stiffness of phi
    NODE 2: build_node()
        - Layer-by-layer AM build of the current design
    NODE 3: objectives_node()
        - F_MC, F_AM, F and the volume; appends the history record
    NODE 4: check_node()
        - Convergence guardrails and iteration cap
    NODE 5: sensitivity_node()
        - Compliance derivative; adjoints and distortion derivative when gamma > 0;
          normalized combination
    NODE 6: update_node()
        - Volume-controlled reaction-diffusion step of phi

EXECUTION FLOW:
    equilibrium -> build -> objectives -> check -> (END | sensitivities -> update -> equilibrium)

The design starts from phi = 1 (full material). The volume target follows
max(V_max, V (1 - volume_shrink_rate)) so the full design shrinks gradually.

Example:
    >>> from config import load_config
    >>> from graph import run_optimization
    >>> result = run_optimization(load_config("runs/cantilever.json"))
    >>> print(result.history.termination_reason, len(result.history))
    converged 87
"""

import dataclasses
import functools
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from langgraph.graph import END, StateGraph
from typing_extensions import TypedDict

from config.settings import get_settings
from data_models.history import IterationRecord, ObjectiveValues, OptHistory
from data_models.run_config import LevelSetConfig, RunConfig, StructureConfig
from guardrails.convergence_checks import converged
from tools.am_build import BuildResult, simulate_build
from tools.fem import (
    ElasticityModel,
    FEMSolverError,
    LinearSystem,
    TractionBC,
    assemble_stiffness,
    plane_stress_model,
    support_dofs,
    traction_load,
)
from tools.levelset import (
    LevelSetField,
    RdeOperator,
    RdeParams,
    VolumeControlError,
    ersatz_scale,
    element_phi,
    volume_controlled_step,
)
from tools.mesh import Mesh2D, build_structured_mesh, select_boundary
from tools.sensitivity import (
    SensitivityField,
    adjoint_load_density,
    combined_objective,
    compliance,
    distortion_objective,
    normalize_combine,
    solve_adjoints,
    td_compliance,
    td_distortion,
)


# Configure logger
logger = logging.getLogger(__name__)

# Keep step factorizations for the adjoints while dofs x layers stays below this
FACTORIZATION_CACHE_LIMIT = 200_000

# Graph nodes visited per iteration
NODES_PER_ITERATION = 6


class OptimizationError(Exception):
    """Raised when an iteration cannot be completed.

    Attributes:
        iteration: Iteration (1-based) that failed
        cause: Underlying exception, if any
    """

    def __init__(self, iteration: int, message: str, cause: Optional[Exception] = None):
        self.iteration = iteration
        self.cause = cause
        super().__init__(f"Iteration {iteration}: {message}")


# ============================================================================
# RESULTS AND CONTEXT
# ============================================================================


@dataclass
class WorkflowCounters:
    """Instrumentation counters of one run."""

    equilibrium_solves: int = 0
    forward_layer_solves: int = 0
    adjoint_layer_solves: int = 0
    rde_steps: int = 0

    def as_dict(self) -> Dict[str, int]:
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class DesignFields:
    """Fields of one evaluated design.

    Attributes:
        phi: (N,) level set
        h_nodes: (N,) H(phi) at the nodes
        h_elements: (E,) H at the element mean phi
        v: (2N,) structural displacement
        u_build: (2N,) accumulated AM distortion
        sigma_build: (E, 3) accumulated residual stress
        sensitivity: (N,) normalized derivative of the last update (None before any)
    """

    phi: np.ndarray
    h_nodes: np.ndarray
    h_elements: np.ndarray
    v: np.ndarray
    u_build: np.ndarray
    sigma_build: np.ndarray
    sensitivity: Optional[np.ndarray] = None

    def point_data(self) -> Dict[str, np.ndarray]:
        u = self.u_build.reshape(-1, 2)
        data = {
            "phi": self.phi,
            "H": self.h_nodes,
            "v": self.v.reshape(-1, 2),
            "u_build": u,
            "u_build_magnitude": np.linalg.norm(u, axis=1),
        }
        if self.sensitivity is not None:
            data["sensitivity"] = self.sensitivity
        return data

    def cell_data(self) -> Dict[str, np.ndarray]:
        return {
            "H": self.h_elements,
            "sigma_xx": self.sigma_build[:, 0],
            "sigma_yy": self.sigma_build[:, 1],
            "sigma_xy": self.sigma_build[:, 2],
        }


SnapshotCallback = Callable[[int, DesignFields, bool], None]


@dataclass
class RunContext:
    """Run-wide objects shared by the nodes (built once per run)."""

    config: RunConfig
    mesh: Mesh2D
    model: ElasticityModel
    traction: TractionBC
    fixed_dofs: np.ndarray
    params: RdeParams
    operator: RdeOperator
    threads: int
    snapshot_every: int
    snapshot_callback: Optional[SnapshotCallback] = None
    counters: WorkflowCounters = field(default_factory=WorkflowCounters)
    history: OptHistory = field(default_factory=OptHistory)


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    """Outcome of `run_optimization`.

    Attributes:
        field: Final level set (the last evaluated design)
        history: Iteration records with the termination reason
        fields: Fields of the final design
        objectives: Objective values of the final design
        counters: Solve counters
    """

    field: LevelSetField
    history: OptHistory
    fields: DesignFields
    objectives: ObjectiveValues
    counters: WorkflowCounters


# ============================================================================
# STATE DEFINITION
# ============================================================================


class OptimizationState(TypedDict, total=False):
    """State passed through the optimization graph.

    Attributes:
        context: Run-wide objects (mesh, model, boundary data, history)
        iteration: Current iteration, 1-based
        level_set: Design being evaluated
        lam: Volume shift that produced the current design
        v: Structural displacement of the current design
        build: AM build of the current design
        objectives: Objective values of the current design
        sensitivity: Derivatives of the current design
        termination_reason: Set by check_node when the run stops
        last_record_time: perf_counter() of the previous history record
    """

    context: RunContext
    iteration: int
    level_set: LevelSetField
    lam: float
    v: np.ndarray
    build: BuildResult
    objectives: ObjectiveValues
    sensitivity: Optional[SensitivityField]
    termination_reason: Optional[str]
    last_record_time: float


# ============================================================================
# EQUILIBRIUM
# ============================================================================


def structure_boundary(mesh: Mesh2D, structure: StructureConfig):
    """Return (fixed dofs, traction) of the static compliance problem."""
    fixed = support_dofs(mesh, structure.supports)
    selection = select_boundary(mesh, structure.traction.selector)
    return fixed, TractionBC.from_selection(selection, structure.traction.traction)


def solve_equilibrium(
    mesh: Mesh2D,
    model: ElasticityModel,
    phi: np.ndarray,
    structure: StructureConfig,
    levelset: LevelSetConfig,
) -> np.ndarray:
    """Static displacement of the design phi under the structural loads.

    Args:
        mesh: Structured mesh
        model: Material model
        phi: (N,) level set
        structure: Supports and traction
        levelset: Heaviside width and void ratio

    Returns:
        np.ndarray: (2N,) displacement v

    Raises:
        SingularSystemError: If the supports leave rigid body modes
    """
    fixed, traction = structure_boundary(mesh, structure)
    return _equilibrium(mesh, model, phi, levelset, fixed, traction)


def _equilibrium(
    mesh: Mesh2D,
    model: ElasticityModel,
    phi: np.ndarray,
    levelset: LevelSetConfig,
    fixed: np.ndarray,
    traction: TractionBC,
) -> np.ndarray:
    scale = ersatz_scale(element_phi(mesh, phi), levelset.width, levelset.void_ratio)
    system = LinearSystem(mesh, assemble_stiffness(mesh, scale, model), fixed)
    return system.solve(traction_load(mesh, traction))


# ============================================================================
# NODES
# ============================================================================


def _guarded(stage: str):
    """Turn solver failures inside a node into OptimizationError."""

    def decorator(node):
        @functools.wraps(node)
        def wrapper(state: OptimizationState) -> OptimizationState:
            try:
                return node(state)
            except (FEMSolverError, VolumeControlError, FloatingPointError) as e:
                iteration = state.get("iteration", 0)
                logger.error(f"[ITER {iteration}] {stage} failed: {e}")
                raise OptimizationError(iteration, f"{stage} failed: {e}", e) from e

        return wrapper

    return decorator


@_guarded("equilibrium")
def equilibrium_node(state: OptimizationState) -> OptimizationState:
    """Solve the static structural problem of the current design."""
    ctx = state["context"]
    v = _equilibrium(
        ctx.mesh,
        ctx.model,
        state["level_set"].phi,
        ctx.config.levelset,
        ctx.fixed_dofs,
        ctx.traction,
    )
    ctx.counters.equilibrium_solves += 1
    return {**state, "v": v}


@_guarded("AM build")
def build_node(state: OptimizationState) -> OptimizationState:
    """Simulate the layer-by-layer build of the current design."""
    ctx = state["context"]
    mesh = ctx.mesh
    gamma = ctx.config.optimization.gamma
    keep = gamma > 0 and mesh.n_dofs * mesh.m <= FACTORIZATION_CACHE_LIMIT
    build = simulate_build(
        mesh,
        ctx.model,
        ctx.config.build,
        state["level_set"].element_scale(mesh),
        threads=ctx.threads,
        keep_systems=keep,
    )
    ctx.counters.forward_layer_solves += mesh.m
    return {**state, "build": build}


def objectives_node(state: OptimizationState) -> OptimizationState:
    """Evaluate the objectives and append the history record."""
    ctx = state["context"]
    cfg = ctx.config.optimization
    mesh = ctx.mesh
    iteration = state["iteration"]
    level_set = state["level_set"]

    h = level_set.element_heaviside(mesh)
    volume = float(np.sum(h) * mesh.element_area / mesh.domain_area)
    f_mc = compliance(mesh, ctx.traction, state["v"])
    f_am = distortion_objective(mesh, state["build"].u, cfg.beta, h)
    f = combined_objective(f_mc, f_am, cfg.gamma)

    if not np.all(np.isfinite([f_mc, f_am, f])):
        raise OptimizationError(
            iteration, f"Non-finite objective (F_MC={f_mc}, F_AM={f_am})"
        )
    objectives = ObjectiveValues(F_MC=f_mc, F_AM=f_am, F=f, G=volume - cfg.volume_max)

    now = time.perf_counter()
    ctx.history.append(
        IterationRecord(
            iter=iteration,
            F=f,
            F_MC=f_mc,
            F_AM=f_am,
            volume=min(max(volume, 0.0), 1.0),
            lam=state.get("lam", 0.0),
            wall_ms=1000.0 * (now - state["last_record_time"]),
        )
    )
    logger.info(
        f"[ITER {iteration}] F={f:.6e} F_MC={f_mc:.6e} F_AM={f_am:.6e} "
        f"vol={volume:.4f} lambda={state.get('lam', 0.0):.4e}"
    )

    new_state = {**state, "objectives": objectives, "last_record_time": now}
    if ctx.snapshot_callback is not None and iteration % ctx.snapshot_every == 0:
        ctx.snapshot_callback(iteration, design_fields(new_state), False)
    return new_state


def check_node(state: OptimizationState) -> OptimizationState:
    """Stop on convergence or at the iteration cap."""
    ctx = state["context"]
    cfg = ctx.config.optimization
    reason = None
    if converged(
        ctx.history,
        cfg.convergence_window,
        cfg.convergence_tol,
        cfg.volume_max,
        cfg.min_iterations,
    ):
        reason = "converged"
    elif state["iteration"] >= cfg.max_iterations:
        reason = "max_iterations"
    return {**state, "termination_reason": reason}


@_guarded("sensitivity analysis")
def sensitivity_node(state: OptimizationState) -> OptimizationState:
    """Topological derivatives and their normalized combination."""
    ctx = state["context"]
    cfg = ctx.config.optimization
    mesh, model = ctx.mesh, ctx.model
    build = state["build"]

    d_mc = td_compliance(mesh, model, state["v"])
    if cfg.gamma > 0.0:
        h = state["level_set"].element_heaviside(mesh)
        f_am = state["objectives"].F_AM
        density = adjoint_load_density(mesh, build.u, cfg.beta, f_am)
        adjoints = solve_adjoints(mesh, model, build, density, h, threads=ctx.threads)
        ctx.counters.adjoint_layer_solves += build.m
        d_am = td_distortion(mesh, model, build, adjoints, cfg.beta, f_am)
    else:
        d_am = np.zeros(mesh.n_nodes)
    build.release_systems()

    combined = normalize_combine(mesh, d_mc, d_am, cfg.gamma)
    sensitivity = SensitivityField(d_mc=d_mc, d_am=d_am, combined=combined)
    if not sensitivity.is_finite():
        raise FloatingPointError("Non-finite topological derivative")
    return {**state, "sensitivity": sensitivity}


@_guarded("level set update")
def update_node(state: OptimizationState) -> OptimizationState:
    """Volume-controlled reaction-diffusion step; starts the next iteration."""
    ctx = state["context"]
    cfg = ctx.config.optimization
    level_set = state["level_set"]

    volume = ctx.history.records[-1].volume
    v_target = max(cfg.volume_max, volume * (1.0 - cfg.volume_shrink_rate))
    phi, lam = volume_controlled_step(
        ctx.mesh,
        level_set.phi,
        state["sensitivity"].combined,
        ctx.params,
        v_target,
        level_set.width,
        ctx.operator,
        cfg.volume_tolerance,
    )
    ctx.counters.rde_steps += 1
    return {
        **state,
        "level_set": dataclasses.replace(level_set, phi=phi),
        "lam": lam,
        "iteration": state["iteration"] + 1,
    }


def route_after_check(state: OptimizationState) -> str:
    return "stop" if state.get("termination_reason") else "continue"


# ============================================================================
# WORKFLOW CREATION
# ============================================================================


def create_optimization_workflow():
    """Create the compiled optimization graph.

    Returns:
        Compiled LangGraph workflow over OptimizationState
    """
    workflow = StateGraph(OptimizationState)

    workflow.add_node("equilibrium", equilibrium_node)
    workflow.add_node("build", build_node)
    workflow.add_node("objectives", objectives_node)
    workflow.add_node("check", check_node)
    workflow.add_node("sensitivities", sensitivity_node)
    workflow.add_node("update", update_node)

    workflow.set_entry_point("equilibrium")
    workflow.add_edge("equilibrium", "build")
    workflow.add_edge("build", "objectives")
    workflow.add_edge("objectives", "check")
    workflow.add_conditional_edges(
        "check", route_after_check, {"continue": "sensitivities", "stop": END}
    )
    workflow.add_edge("sensitivities", "update")
    workflow.add_edge("update", "equilibrium")

    return workflow.compile()


def design_fields(state: OptimizationState) -> DesignFields:
    """Collect the fields of the design evaluated in `state`."""
    ctx = state["context"]
    level_set = state["level_set"]
    build = state["build"]
    sensitivity = state.get("sensitivity")
    return DesignFields(
        phi=level_set.phi,
        h_nodes=level_set.nodal_heaviside(),
        h_elements=level_set.element_heaviside(ctx.mesh),
        v=state["v"],
        u_build=build.u,
        sigma_build=build.sigma,
        sensitivity=None if sensitivity is None else sensitivity.combined,
    )


# ============================================================================
# MAIN EXECUTION
# ============================================================================


def mesh_and_model(config: RunConfig) -> Tuple[Mesh2D, ElasticityModel]:
    """Structured mesh and plane-stress material of a run configuration."""
    mesh = build_structured_mesh(
        config.mesh.width, config.mesh.height, config.mesh.nx, config.mesh.ny, config.mesh.layers
    )
    return mesh, plane_stress_model(config.material.young_modulus, config.material.poisson_ratio)


def create_context(
    config: RunConfig,
    snapshot_callback: Optional[SnapshotCallback] = None,
    snapshot_every: Optional[int] = None,
    threads: Optional[int] = None,
) -> RunContext:
    """Build the mesh, material, boundary data and RDE operator of a run."""
    settings = get_settings()
    mesh, model = mesh_and_model(config)
    fixed, traction = structure_boundary(mesh, config.structure)
    params = RdeParams.from_config(config.levelset, mesh)
    return RunContext(
        config=config,
        mesh=mesh,
        model=model,
        traction=traction,
        fixed_dofs=fixed,
        params=params,
        operator=RdeOperator(mesh, params),
        threads=threads or settings.DISTOPT_THREADS,
        snapshot_every=snapshot_every
        or config.output.snapshot_every
        or settings.DISTOPT_SNAPSHOT_EVERY,
        snapshot_callback=snapshot_callback,
    )


def run_optimization(
    config: RunConfig,
    snapshot_callback: Optional[SnapshotCallback] = None,
    snapshot_every: Optional[int] = None,
    threads: Optional[int] = None,
) -> OptimizationResult:
    """Run the optimization from the full-material design.

    Args:
        config: Resolved run configuration
        snapshot_callback: Called as (iteration, fields, final) every
            `snapshot_every` iterations and once at the end with final=True
        snapshot_every: Snapshot cadence (defaults to the config, then to
            DISTOPT_SNAPSHOT_EVERY)
        threads: Worker count for layer and adjoint solves (defaults to
            DISTOPT_THREADS)

    Returns:
        OptimizationResult: Final design, history, fields and counters

    Raises:
        OptimizationError: If an iteration fails (carries the iteration index)
        MeshError: If a boundary selector selects nothing
        SingularSystemError: If the supports leave rigid body modes
    """
    ctx = create_context(config, snapshot_callback, snapshot_every, threads)
    cfg = config.optimization

    logger.info("=" * 70)
    logger.info(
        f" Starting {config.problem} optimization: {ctx.mesh.nx}x{ctx.mesh.ny} elements, "
        f"m={ctx.mesh.m}, gamma={cfg.gamma}, V_max={cfg.volume_max}"
    )
    logger.info("=" * 70)

    app = create_optimization_workflow()
    initial_state = OptimizationState(
        context=ctx,
        iteration=1,
        level_set=LevelSetField.full(ctx.mesh, config.levelset),
        lam=0.0,
        sensitivity=None,
        termination_reason=None,
        last_record_time=time.perf_counter(),
    )
    final_state = app.invoke(
        initial_state,
        config={"recursion_limit": NODES_PER_ITERATION * cfg.max_iterations + 10},
    )

    ctx.history.termination_reason = final_state["termination_reason"]
    fields = design_fields(final_state)
    if snapshot_callback is not None:
        snapshot_callback(final_state["iteration"], fields, True)

    logger.info(
        f"[OK] Optimization finished after {len(ctx.history)} iteration(s) "
        f"({ctx.history.termination_reason}); counters: {ctx.counters.as_dict()}"
    )
    return OptimizationResult(
        field=final_state["level_set"],
        history=ctx.history,
        fields=fields,
        objectives=final_state["objectives"],
        counters=ctx.counters,
    )
