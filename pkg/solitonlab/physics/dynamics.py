# Soliton Lab - Dynamics
# Conservative time stepping of i u_t + Delta u + beta(|u|^2) u = 0 on the radial grid

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from solitonlab.shared.errors import BlowUpError, ConfigError, NonConvergenceError

from .linearization import LinearizedSystem
from .model import NonlinearitySpec, RadialGrid, lift, sigma1

logger = logging.getLogger(__name__)

CRANK_NICOLSON = "crank_nicolson"
STRANG_SPLIT = "strang_split"
ABSORBER_POWER = 3
MAX_FIXED_POINT_ITER = 50
LARGE_Z0 = 0.3
# dt max beta accepted at t = 0, and the value past which the run is treated as collapsing.
STABILITY_LIMIT = 0.5
BLOW_UP_STABILITY = 1.0


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    final_time: float
    output_stride: int = 1
    scheme: str = CRANK_NICOLSON
    absorber_width: float = 0.15
    absorber_strength: float = 2.0
    fixed_point_sweeps: int = 2
    fixed_point_tol: float = 1e-12

    @classmethod
    def from_settings(cls, settings) -> 'EvolutionConfig':
        return cls(settings.dt, settings.final_time, settings.output_stride, settings.scheme,
                   settings.absorber_width, settings.absorber_strength, settings.fixed_point_sweeps,
                   settings.fixed_point_tol)

    @property
    def steps(self) -> int:
        return int(round(self.final_time / self.dt))

    def validate(self, spec: NonlinearitySpec, u0: np.ndarray):
        if self.scheme not in (CRANK_NICOLSON, STRANG_SPLIT):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if not 0.0 <= self.absorber_width <= 0.25:
            raise ConfigError("absorber width must lie in [0, 0.25]")
        if self.dt <= 0 or self.final_time < 0:
            raise ConfigError("dt must be positive and the final time nonnegative")
        if self.stability_number(spec, u0) > STABILITY_LIMIT:
            raise ConfigError(f"dt={self.dt:g} too large for the nonlinear fixed point "
                              f"(dt max beta = {self.stability_number(spec, u0):.3f} > 0.5)")

    def stability_number(self, spec: NonlinearitySpec, u0: np.ndarray) -> float:
        """dt * max |beta(|u0|^2)|; the midpoint fixed point contracts when this is small."""
        return float(self.dt * np.max(np.abs(spec.derivative(np.abs(u0) ** 2, 0))))


def absorber_profile(grid: RadialGrid, width: float, strength: float) -> np.ndarray:
    """Damping rate W(r) = strength * x^3 on the outer layer, x = (r - r0) / (R - r0)."""
    if width <= 0.0:
        return np.zeros(grid.points)
    start = grid.radius * (1.0 - width)
    x = np.clip((grid.nodes - start) / (grid.radius - start), 0.0, 1.0)
    return strength * x ** ABSORBER_POWER


def mass(grid: RadialGrid, u: np.ndarray, region: Optional[np.ndarray] = None) -> float:
    density = np.abs(u) ** 2
    if region is not None:
        density = density * region
    return float(grid.integrate(density))


def energy(spec: NonlinearitySpec, grid: RadialGrid, u: np.ndarray) -> float:
    """E(u) = <-Delta_h u, u> - int G(|u|^2)."""
    kinetic = grid.integrate(np.conj(u) * (grid.neg_laplacian @ u)).real
    return float(kinetic - grid.integrate(spec.primitive(np.abs(u) ** 2)))


@dataclass
class Trajectory:
    """Stride-sampled snapshots plus scalar diagnostics per output time."""
    grid: RadialGrid
    dt: float
    scheme: str
    times: List[float] = field(default_factory=list)
    snapshots: List[np.ndarray] = field(default_factory=list)
    mass: List[float] = field(default_factory=list)
    interior_mass: List[float] = field(default_factory=list)
    energy: List[float] = field(default_factory=list)
    origin_modulus: List[float] = field(default_factory=list)
    max_modulus: List[float] = field(default_factory=list)
    max_fixed_point_iterations: int = 0

    def record(self, t: float, u: np.ndarray, spec: NonlinearitySpec, interior: np.ndarray):
        self.times.append(t)
        self.snapshots.append(u.copy())
        self.mass.append(mass(self.grid, u))
        self.interior_mass.append(mass(self.grid, u, interior))
        self.energy.append(energy(spec, self.grid, u))
        self.origin_modulus.append(abs(self.grid.origin_value(u)))
        self.max_modulus.append(float(np.max(np.abs(u))))

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]

    def mass_drift(self) -> float:
        return abs(self.mass[-1] - self.mass[0]) / self.mass[0]

    def energy_drift(self) -> float:
        return abs(self.energy[-1] - self.energy[0]) / max(abs(self.energy[0]), 1e-300)

    def diagnostics_table(self) -> np.ndarray:
        """Columns t, mass, interior mass, energy, |u(t,0)|, max |u|."""
        return np.column_stack([self.times, self.mass, self.interior_mass, self.energy,
                                self.origin_modulus, self.max_modulus])

    def __iter__(self):
        return iter(zip(self.times, self.snapshots))

    def __len__(self):
        return len(self.times)


class _Stepper:
    """One time step of the chosen scheme with the linear part factored once."""

    def __init__(self, spec: NonlinearitySpec, grid: RadialGrid, config: EvolutionConfig):
        self.spec = spec
        self.config = config
        dt = config.dt
        damping = absorber_profile(grid, config.absorber_width, config.absorber_strength)
        generator = 1j * grid.neg_laplacian + sp.diags(damping)
        identity = sp.identity(grid.points, format='csc')
        self.implicit = spla.splu((identity + 0.5 * dt * generator).tocsc())
        self.explicit = (identity - 0.5 * dt * generator).tocsr()
        self.iterations = 0

    def _quotient(self, u0: np.ndarray, u1: np.ndarray) -> np.ndarray:
        return self.spec.secant_average(np.abs(u0) ** 2, np.abs(u1) ** 2)

    def crank_nicolson(self, u0: np.ndarray, step: int) -> np.ndarray:
        dt, config = self.config.dt, self.config
        base = self.explicit @ u0
        u1 = self.implicit.solve(base + 1j * dt * self.spec.derivative(np.abs(u0) ** 2, 0) * u0)
        for sweep in range(1, MAX_FIXED_POINT_ITER + 1):
            midpoint = 0.5 * (u0 + u1)
            updated = self.implicit.solve(base + 1j * dt * self._quotient(u0, u1) * midpoint)
            change = float(np.max(np.abs(updated - u1)))
            u1 = updated
            if sweep >= config.fixed_point_sweeps and change <= config.fixed_point_tol * max(1.0, float(np.max(np.abs(u1)))):
                self.iterations = max(self.iterations, sweep)
                return u1
        raise NonConvergenceError(f"Crank-Nicolson fixed point did not converge at step {step}")

    def nonlinear_phase(self, u: np.ndarray, tau: float) -> np.ndarray:
        return u * np.exp(1j * tau * self.spec.derivative(np.abs(u) ** 2, 0))

    def strang(self, u0: np.ndarray, step: int) -> np.ndarray:
        half = 0.5 * self.config.dt
        u = self.nonlinear_phase(u0, half)
        u = self.implicit.solve(self.explicit @ u)
        return self.nonlinear_phase(u, half)


def evolve(spec: NonlinearitySpec, u0: np.ndarray, grid: RadialGrid, config: EvolutionConfig,
           callback: Optional[Callable[[float, np.ndarray], None]] = None) -> Trajectory:
    """
    Integrate the radial NLS from u0 to config.final_time.

    Crank-Nicolson uses the Delfour-Fortin-Payre midpoint quotient, which conserves the
    discrete mass and energy up to the fixed-point tolerance; Strang splitting alternates
    exact nonlinear phase rotations with a linear Crank-Nicolson step.

    Args:
        spec: Nonlinearity
        u0: Initial field on the grid
        grid: Radial grid
        config: Time stepping parameters
        callback: Called with (t, u) at every output time

    Returns:
        Trajectory sampled every output_stride steps, t = 0 included
    """
    u = np.array(u0, dtype=complex)
    if u.shape != (grid.points,):
        raise ConfigError(f"initial data has shape {u.shape}, grid has {grid.points} points")
    config.validate(spec, u)
    stepper = _Stepper(spec, grid, config)
    advance = stepper.crank_nicolson if config.scheme == CRANK_NICOLSON else stepper.strang
    interior = (grid.nodes < grid.radius * (1.0 - config.absorber_width)).astype(float)
    trajectory = Trajectory(grid=grid, dt=config.dt, scheme=config.scheme)
    trajectory.record(0.0, u, spec, interior)
    if callback:
        callback(0.0, u)
    steps = config.steps
    peak = float(np.max(np.abs(u)))
    for step in range(1, steps + 1):
        try:
            updated = advance(u, step)
        except NonConvergenceError as e:
            if config.stability_number(spec, u) > STABILITY_LIMIT:
                raise BlowUpError(f"max |u| grew from {peak:.4g} to {np.max(np.abs(u)):.4g} before step {step}; "
                                  f"likely finite-time blow-up", (step - 1) * config.dt) from e
            raise
        u = updated
        if not np.all(np.isfinite(u)):
            raise BlowUpError(f"solution became non-finite at step {step}", step * config.dt)
        if config.stability_number(spec, u) > BLOW_UP_STABILITY:
            raise BlowUpError(f"max |u| grew from {peak:.4g} to {np.max(np.abs(u)):.4g} by t={step * config.dt:g}; "
                              f"likely finite-time blow-up", step * config.dt)
        if step % config.output_stride == 0 or step == steps:
            t = step * config.dt
            trajectory.record(t, u, spec, interior)
            if callback:
                callback(t, u)
        if step % max(1, steps // 10) == 0:
            logger.debug("step %d/%d mass %.12g", step, steps, trajectory.mass[-1])
    trajectory.max_fixed_point_iterations = stepper.iterations
    return trajectory


def make_initial_data(system: LinearizedSystem, z0: complex, f0: Optional[np.ndarray] = None) -> np.ndarray:
    """
    u0 = phi_omega + first component of (z0 xi + conj(z0) sigma1 xi + F0).

    f0 is a scalar field lifted to (f0, conj f0); a lift outside L^2_c is projected with a warning.
    """
    system.require_mode()
    if abs(z0) > LARGE_Z0:
        logger.warning("|z0| = %.3g is not small; the modulation decomposition may not exist", abs(z0))
    R = z0 * system.xi.astype(complex) + np.conj(z0) * sigma1(system.xi).astype(complex)
    if f0 is not None:
        F0 = lift(f0)
        projected = system.project_continuous(F0)
        defect = system.norm(F0 - projected)
        if defect > 1e-10 * max(system.norm(F0), 1e-300):
            logger.warning("f0 not in L^2_c (defect %.2e); projected", defect)
        R = R + projected
    return system.state.phi + R[0]


def free_gaussian_peak(t: float) -> float:
    """|u(t)|_inf for the free evolution of exp(-r^2 / 2) in d = 3."""
    return (1.0 + 4.0 * t * t) ** -0.75


def summary(trajectory: Trajectory) -> Dict:
    return {
        'samples': len(trajectory),
        'final_time': trajectory.times[-1],
        'mass_drift': trajectory.mass_drift(),
        'energy_drift': trajectory.energy_drift(),
        'max_fixed_point_iterations': trajectory.max_fixed_point_iterations,
        'scheme': trajectory.scheme,
        'dt': trajectory.dt,
    }
