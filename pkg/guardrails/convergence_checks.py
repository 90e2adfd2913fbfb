"""Convergence checks for the optimization loop.

Each check inspects the optimization history and returns (passed, message).
`converged` runs all of them and only declares convergence when every
check passes:

1. Enough iterations have run (at least `min_iterations`)
2. The objective has settled: the relative spread of F over the last
   `window` records is at most `tol`
3. The volume constraint is met: |volume - V_max| <= 0.5% of V_max

Example:
    >>> from guardrails import converged
    >>> if converged(history, window=5, tol=1e-3, volume_max=0.5):
    ...     print("Stop")
"""

import logging
from typing import List, Tuple

import numpy as np

from data_models.history import OptHistory


# Configure logger
logger = logging.getLogger(__name__)

# Relative band around V_max accepted as feasible
VOLUME_FEASIBILITY = 0.005


# ============================================================================
# INDIVIDUAL CHECKS
# ============================================================================


def check_min_iterations(history: OptHistory, min_iterations: int) -> Tuple[bool, str]:
    """Check that enough iterations have run.

    Args:
        history: Optimization history
        min_iterations: Required number of records

    Returns:
        Tuple[bool, str]: (passed, message)
    """
    if len(history) >= min_iterations:
        return True, f"{len(history)} iteration(s) >= {min_iterations}"
    return False, f"Only {len(history)} iteration(s), need {min_iterations}"


def check_objective_plateau(history: OptHistory, window: int, tol: float) -> Tuple[bool, str]:
    """Check that F changed by at most `tol` (relative) over the last `window` records.

    The spread is (max - min) / mean(|F|) over the window.

    Example:
        >>> passed, msg = check_objective_plateau(history, 5, 1e-3)
        >>> print(msg)
        Objective spread 2.1e-04 <= 1.0e-03 over 5 iteration(s)
    """
    if window < 2:
        raise ValueError(f"Convergence window must be at least 2 (got {window})")
    if len(history) < window:
        return False, f"History shorter than the window ({len(history)} < {window})"

    recent = history.objectives[-window:]
    scale = float(np.mean(np.abs(recent)))
    if scale == 0.0:
        return True, "Objective identically zero over the window"
    spread = float(np.max(recent) - np.min(recent)) / scale
    if spread <= tol:
        return True, f"Objective spread {spread:.1e} <= {tol:.1e} over {window} iteration(s)"
    return False, f"Objective spread {spread:.1e} > {tol:.1e} over {window} iteration(s)"


def check_volume_feasible(history: OptHistory, volume_max: float) -> Tuple[bool, str]:
    """Check that the latest volume lies within 0.5% of V_max."""
    if len(history) == 0:
        return False, "No iterations recorded"
    volume = history.records[-1].volume
    gap = abs(volume - volume_max)
    if gap <= VOLUME_FEASIBILITY * volume_max:
        return True, f"Volume {volume:.4f} within 0.5% of {volume_max:.4f}"
    return False, f"Volume {volume:.4f} off target {volume_max:.4f} by {gap:.4f}"


# ============================================================================
# AGGREGATE
# ============================================================================


def run_convergence_checks(
    history: OptHistory,
    window: int,
    tol: float,
    volume_max: float,
    min_iterations: int = 30,
) -> List[Tuple[str, bool, str]]:
    """Run every check and return (name, passed, message) triples."""
    return [
        ("min_iterations", *check_min_iterations(history, min_iterations)),
        ("objective_plateau", *check_objective_plateau(history, window, tol)),
        ("volume_feasible", *check_volume_feasible(history, volume_max)),
    ]


def converged(
    history: OptHistory,
    window: int,
    tol: float,
    volume_max: float,
    min_iterations: int = 30,
) -> bool:
    """True iff every convergence check passes.

    Args:
        history: Optimization history
        window: Trailing records compared (>= 2)
        tol: Relative spread tolerance of F
        volume_max: Allowed volume fraction
        min_iterations: Iterations required before convergence may be declared

    Returns:
        bool: Whether the run may stop
    """
    results = run_convergence_checks(history, window, tol, volume_max, min_iterations)
    failed = [f"{name}: {message}" for name, passed, message in results if not passed]
    if failed:
        logger.debug(f"Not converged ({'; '.join(failed)})")
        return False
    logger.info(f"[OK] Converged after {len(history)} iteration(s)")
    return True
