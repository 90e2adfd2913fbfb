"""Level set design representation and reaction-diffusion update.

The design is a nodal level set function phi clamped to [-1, 1]; material
occupies phi >= 0. Stiffness is interpolated through a smoothed Heaviside
H(phi; w) into an ersatz multiplier d + (1 - d) H, evaluated at the mean
nodal phi of each element.

The update solves one semi-implicit step of the reaction-diffusion equation

    d(phi)/dt = -K (F' + lambda - tau l^2 laplacian(phi))

with the finite element mass matrix M and Laplacian stiffness L:

    (M + dt K tau l^2 L) phi' = M (phi - dt K (F' + lambda))

followed by clamping. Natural boundary conditions hold on the whole domain
edge. The uniform shift lambda enforces the volume target by bisection.

Example:
    >>> from tools.levelset import RdeOperator, RdeParams, volume_controlled_step
    >>> params = RdeParams.from_config(config.levelset, mesh)
    >>> operator = RdeOperator(mesh, params)
    >>> phi, lam = volume_controlled_step(mesh, phi, sens, params, 0.97, 0.5, operator)
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage
from scipy.sparse.linalg import splu

from data_models.run_config import LevelSetConfig
from tools.fem import assemble_scalar_laplacian, assemble_scalar_mass
from tools.mesh import Mesh2D


# Configure logger
logger = logging.getLogger(__name__)

MAX_BRACKET_EXPANSIONS = 60
MAX_BISECTIONS = 60
# Absolute volume band accepted when bisection runs out of iterations
VOLUME_BAND = 0.005
# Round-off allowance of the "already feasible" test
VOLUME_ROUNDOFF = 1e-12


class VolumeControlError(Exception):
    """Raised when the volume shift cannot be bracketed or located.

    Attributes:
        target: Volume fraction that was requested
    """

    def __init__(self, message: str, target: float):
        self.target = target
        super().__init__(message)


# ============================================================================
# Projection
# ============================================================================


def heaviside(phi, w: float) -> np.ndarray:
    """Smoothed Heaviside of width 2w.

    H = 0 for phi < -w, 1 for phi > w, and in between, with x = phi / w,
        H = 1/2 + x (15/16 - x^2 (5/8 - 3/16 x^2))

    Example:
        >>> heaviside(-0.25, 0.5)
        array(0.10351562)
    """
    if w <= 0:
        raise ValueError(f"Heaviside width must be positive (got {w})")
    phi = np.asarray(phi, dtype=float)
    x = phi / w
    ramp = 0.5 + x * (15.0 / 16.0 - x**2 * (5.0 / 8.0 - 3.0 / 16.0 * x**2))
    return np.where(phi > w, 1.0, np.where(phi < -w, 0.0, ramp))


def ersatz_scale(phi_element, w: float, d: float) -> np.ndarray:
    """Stiffness multiplier (1 - d) H + d of element level set values."""
    return d + (1.0 - d) * heaviside(phi_element, w)


def characteristic(phi) -> np.ndarray:
    """1 where phi >= 0, else 0."""
    return np.where(np.asarray(phi) >= 0.0, 1, 0)


def element_phi(mesh: Mesh2D, phi: np.ndarray) -> np.ndarray:
    return mesh.node_to_element(phi)


def volume_fraction(mesh: Mesh2D, phi: np.ndarray, w: float) -> float:
    """Material fraction sum_e H_e area_e / |D|."""
    h = heaviside(element_phi(mesh, phi), w)
    return float(np.sum(h) * mesh.element_area / mesh.domain_area)


def count_void_regions(mesh: Mesh2D, phi: np.ndarray, w: float) -> int:
    """Number of 4-connected void regions (H < 1/2) on the element grid."""
    void = mesh.element_grid(heaviside(element_phi(mesh, phi), w) < 0.5)
    _, count = ndimage.label(void)
    return int(count)


@dataclass
class LevelSetField:
    """Nodal level set with its projection settings.

    Attributes:
        phi: (N,) nodal values in [-1, 1]
        width: Heaviside half-width w
        void_ratio: Ersatz ratio d
    """

    phi: np.ndarray
    width: float
    void_ratio: float

    @classmethod
    def full(cls, mesh: Mesh2D, config: LevelSetConfig) -> "LevelSetField":
        """All-material design, phi = 1 everywhere."""
        return cls(phi=np.ones(mesh.n_nodes), width=config.width, void_ratio=config.void_ratio)

    def element_heaviside(self, mesh: Mesh2D) -> np.ndarray:
        return heaviside(element_phi(mesh, self.phi), self.width)

    def element_scale(self, mesh: Mesh2D) -> np.ndarray:
        return ersatz_scale(element_phi(mesh, self.phi), self.width, self.void_ratio)

    def nodal_heaviside(self) -> np.ndarray:
        return heaviside(self.phi, self.width)

    def volume(self, mesh: Mesh2D) -> float:
        return volume_fraction(mesh, self.phi, self.width)


# ============================================================================
# Reaction-diffusion update
# ============================================================================


@dataclass(frozen=True)
class RdeParams:
    """Reaction-diffusion step parameters.

    Attributes:
        K: Update gain (> 0)
        tau: Regularization parameter (>= 0, dimensionless)
        dt: Fictitious time step (> 0)
        length: Characteristic length scaling the diffusion term
    """

    K: float
    tau: float
    dt: float
    length: float

    def __post_init__(self) -> None:
        if self.K <= 0 or self.dt <= 0 or self.tau < 0 or self.length <= 0:
            raise ValueError(
                f"Invalid RDE parameters: K={self.K}, tau={self.tau}, dt={self.dt}, "
                f"length={self.length}"
            )

    @classmethod
    def from_config(cls, config: LevelSetConfig, mesh: Mesh2D) -> "RdeParams":
        length = config.characteristic_length or max(mesh.width, mesh.height)
        return cls(K=config.K, tau=config.tau, dt=config.dt, length=length)

    @property
    def diffusion(self) -> float:
        """Coefficient of L in the implicit operator."""
        return self.dt * self.K * self.tau * self.length**2


class RdeOperator:
    """Factorized implicit operator M + dt K tau l^2 L of one mesh and parameter set."""

    def __init__(self, mesh: Mesh2D, params: RdeParams):
        self.params = params
        self.mass = assemble_scalar_mass(mesh)
        self.laplacian = assemble_scalar_laplacian(mesh)
        self._lu = splu((self.mass + params.diffusion * self.laplacian).tocsc())

    def unclamped(self, phi: np.ndarray, sensitivity: np.ndarray, lam: float = 0.0) -> np.ndarray:
        p = self.params
        rhs = self.mass @ (np.asarray(phi, dtype=float) - p.dt * p.K * (np.asarray(sensitivity) + lam))
        return self._lu.solve(rhs)

    def step(self, phi: np.ndarray, sensitivity: np.ndarray, lam: float = 0.0) -> np.ndarray:
        return np.clip(self.unclamped(phi, sensitivity, lam), -1.0, 1.0)


def rde_step(
    mesh: Mesh2D,
    phi: np.ndarray,
    sensitivity: np.ndarray,
    params: RdeParams,
    lam: float = 0.0,
    operator: Optional[RdeOperator] = None,
) -> np.ndarray:
    """One clamped reaction-diffusion step.

    Args:
        mesh: Structured mesh
        phi: (N,) current level set
        sensitivity: (N,) normalized topological derivative
        params: Step parameters
        lam: Uniform volume shift added to the sensitivity
        operator: Cached operator for `params` (built when omitted)

    Returns:
        np.ndarray: (N,) updated level set in [-1, 1]
    """
    operator = operator or RdeOperator(mesh, params)
    phi_new = operator.step(phi, sensitivity, lam)
    if not np.all(np.isfinite(phi_new)):
        raise FloatingPointError("Reaction-diffusion step produced non-finite values")
    return phi_new


def volume_controlled_step(
    mesh: Mesh2D,
    phi: np.ndarray,
    sensitivity: np.ndarray,
    params: RdeParams,
    v_target: float,
    w: float,
    operator: Optional[RdeOperator] = None,
    tolerance: float = 1e-3,
) -> Tuple[np.ndarray, float]:
    """Reaction-diffusion step whose volume meets `v_target`.

    If the unshifted step is already feasible (volume <= target) it is
    returned with lambda = 0. Otherwise lambda >= 0 is bracketed by doubling
    from [0, 1] and located by bisection until the volume is within
    `tolerance * v_target` of the target.

    Args:
        mesh: Structured mesh
        phi: (N,) current level set
        sensitivity: (N,) normalized topological derivative
        params: Step parameters
        v_target: Target volume fraction in (0, 1]
        w: Heaviside width used for the volume
        operator: Cached operator for `params`
        tolerance: Relative volume tolerance

    Returns:
        Tuple[np.ndarray, float]: (updated phi, lambda)

    Raises:
        VolumeControlError: If the bracket cannot be established or the
            bisection ends outside the accepted band
    """
    if not 0.0 < v_target <= 1.0:
        raise VolumeControlError(f"Volume target must be in (0, 1], got {v_target}", v_target)
    operator = operator or RdeOperator(mesh, params)

    def trial(lam: float) -> Tuple[np.ndarray, float]:
        candidate = rde_step(mesh, phi, sensitivity, params, lam, operator)
        return candidate, volume_fraction(mesh, candidate, w)

    candidate, volume = trial(0.0)
    if volume <= v_target + VOLUME_ROUNDOFF:
        return candidate, 0.0

    lo, hi = 0.0, 1.0
    for _ in range(MAX_BRACKET_EXPANSIONS):
        high_candidate, high_volume = trial(hi)
        if high_volume <= v_target:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise VolumeControlError(
            f"Could not bracket the volume shift for target {v_target:.4f} "
            f"(volume {high_volume:.4f} at lambda={hi:.3e})",
            v_target,
        )

    best, best_volume, best_lam = high_candidate, high_volume, hi
    for iteration in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        candidate, volume = trial(mid)
        if abs(volume - v_target) < abs(best_volume - v_target):
            best, best_volume, best_lam = candidate, volume, mid
        if abs(volume - v_target) <= tolerance * v_target:
            break
        if volume > v_target:
            lo = mid
        else:
            hi = mid

    if abs(best_volume - v_target) > VOLUME_BAND:
        raise VolumeControlError(
            f"Bisection ended at volume {best_volume:.4f} for target {v_target:.4f}",
            v_target,
        )
    logger.debug(
        f"Volume control: target={v_target:.4f} volume={best_volume:.4f} "
        f"lambda={best_lam:.4e} after {iteration + 1} bisection(s)"
    )
    return best, best_lam
