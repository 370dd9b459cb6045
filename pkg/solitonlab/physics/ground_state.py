# Soliton Lab - Ground States
# Newton/shooting solver for Delta u - omega u + beta(u^2) u = 0, continuation in omega and (H3)-(H5) checks

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from solitonlab.shared.errors import EigensolverError, NoGroundStateError, NonConvergenceError

from .model import NonlinearitySpec, RadialGrid, start_vector

logger = logging.getLogger(__name__)

NEWTON_MAX_ITER = 60


@dataclass
class GroundState:
    """Converged ground state phi_omega with its omega-derivatives."""
    spec: NonlinearitySpec
    grid: RadialGrid
    omega: float
    phi: np.ndarray
    d_omega: np.ndarray
    d2_omega: np.ndarray
    residual: float
    newton_iterations: int = 0

    @property
    def Phi(self) -> np.ndarray:
        """The spinor (phi, phi)."""
        return np.stack([self.phi, self.phi]).astype(complex)

    @property
    def d_Phi(self) -> np.ndarray:
        return np.stack([self.d_omega, self.d_omega]).astype(complex)

    @property
    def d2_Phi(self) -> np.ndarray:
        return np.stack([self.d2_omega, self.d2_omega]).astype(complex)

    @property
    def mass(self) -> float:
        return float(self.grid.integrate(self.phi ** 2))

    @property
    def mass_slope(self) -> float:
        """dM/domega = <2 phi, d_omega phi>."""
        return float(2.0 * self.grid.integrate(self.phi * self.d_omega))

    @property
    def peak(self) -> float:
        return float(self.grid.origin_value(self.phi))

    def summary(self) -> Dict:
        return {
            'omega': self.omega,
            'phi0': self.peak,
            'mass': self.mass,
            'mass_slope': self.mass_slope,
            'residual': self.residual,
            'newton_iterations': self.newton_iterations,
        }


@dataclass
class H5Report:
    """Spectral facts about L+ on radial functions."""
    negative_count: int
    kernel_gap: float
    eigenvalues: List[float]
    quadratic_form_phi: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.negative_count == 1 and self.kernel_gap > 10.0 * self.tolerance

    def to_dict(self) -> Dict:
        return {
            'negative_count': self.negative_count,
            'kernel_gap': self.kernel_gap,
            'eigenvalues': self.eigenvalues,
            'quadratic_form_phi': self.quadratic_form_phi,
            'passed': self.passed,
        }


@dataclass
class GroundStateBranch:
    """Ground states sampled along omega, possibly truncated."""
    omegas: List[float] = field(default_factory=list)
    states: List[GroundState] = field(default_factory=list)
    truncated_at: Optional[float] = None
    truncation_reason: str = ""
    slope_tolerance: float = 1e-4

    @property
    def masses(self) -> np.ndarray:
        return np.array([s.mass for s in self.states])

    @property
    def slopes(self) -> np.ndarray:
        return np.array([s.mass_slope for s in self.states])

    @property
    def slopes_fd(self) -> np.ndarray:
        """Finite-difference dM/domega from the sampled masses."""
        if len(self.states) < 3:
            return np.full(len(self.states), np.nan)
        return np.gradient(self.masses, np.array(self.omegas), edge_order=2)

    def slope_agreement(self) -> float:
        """Largest relative difference between analytic and centred-difference slopes (interior samples)."""
        if len(self.states) < 3:
            return float('nan')
        analytic, fd = self.slopes[1:-1], self.slopes_fd[1:-1]
        return float(np.max(np.abs(analytic - fd) / np.maximum(np.abs(analytic), 1e-300)))

    @property
    def h4_passed(self) -> bool:
        """(H4): dM/domega > 0 at every sample."""
        return bool(self.states) and bool(np.all(self.slopes > 0))

    def state_at(self, omega: float) -> GroundState:
        index = int(np.argmin(np.abs(np.array(self.omegas) - omega)))
        return self.states[index]

    def profile_table(self) -> np.ndarray:
        """Columns r, phi_omega for every sample."""
        grid = self.states[0].grid
        return np.column_stack([grid.nodes] + [s.phi for s in self.states])

    def to_dict(self) -> Dict:
        fd = self.slopes_fd
        return {
            'samples': [dict(s.summary(), mass_slope_fd=float(fd[i])) for i, s in enumerate(self.states)],
            'truncated_at': self.truncated_at,
            'truncation_reason': self.truncation_reason,
            'slope_agreement': self.slope_agreement(),
            'h4_passed': self.h4_passed,
        }


def _residual_vector(spec: NonlinearitySpec, grid: RadialGrid, omega: float, phi: np.ndarray) -> np.ndarray:
    return grid.neg_laplacian @ phi + omega * phi - spec.derivative(phi * phi, 0) * phi


def _relative_residual(spec, grid, omega, phi) -> float:
    res = _residual_vector(spec, grid, omega, phi)
    denom = math.sqrt(grid.integrate(phi * phi))
    return math.sqrt(grid.integrate(res * res)) / denom if denom > 0 else float('inf')


def l_plus(spec: NonlinearitySpec, grid: RadialGrid, omega: float, phi: np.ndarray) -> sp.csr_matrix:
    """L+ = -Delta + omega - beta(phi^2) - 2 beta'(phi^2) phi^2 on u-samples."""
    s = phi * phi
    potential = omega - spec.derivative(s, 0) - 2.0 * spec.derivative(s, 1) * s
    return (grid.neg_laplacian + sp.diags(potential)).tocsc()


def _newton(spec, grid, omega, guess, tol) -> Tuple[np.ndarray, int, float]:
    phi = np.array(guess, dtype=float)
    residual = _relative_residual(spec, grid, omega, phi)
    for iteration in range(1, NEWTON_MAX_ITER + 1):
        step = spla.spsolve(l_plus(spec, grid, omega, phi), -_residual_vector(spec, grid, omega, phi))
        if not np.all(np.isfinite(step)):
            raise NonConvergenceError(f"Newton step not finite at omega={omega}")
        damping = 1.0
        while damping > 1e-4:
            trial = phi + damping * step
            trial_residual = _relative_residual(spec, grid, omega, trial)
            if trial_residual < residual or trial_residual <= tol:
                break
            damping *= 0.5
        else:
            raise NonConvergenceError(f"Newton line search stalled at omega={omega} (residual {residual:.3e})")
        previous = residual
        phi, residual = trial, trial_residual
        logger.debug("newton omega=%g it=%d damping=%g residual=%.3e", omega, iteration, damping, residual)
        if residual <= tol and (residual <= 0.1 * tol or residual > 0.5 * previous):
            return phi, iteration, residual
    if residual <= tol:
        return phi, NEWTON_MAX_ITER, residual
    raise NonConvergenceError(f"Newton did not reach residual {tol:g} at omega={omega} (got {residual:.3e})")


def _shoot(spec: NonlinearitySpec, dimension: int, omega: float, amplitude: float, r_max: float):
    """
    Integrate the radial ODE from the origin with phi(0) = amplitude.

    Returns:
        ('over' | 'under', solution) where 'over' means phi crossed zero
    """
    beta0 = float(spec.derivative(amplitude ** 2, 0))
    curvature = (omega - beta0) * amplitude / dimension
    if curvature >= 0:
        return 'under', None
    r0 = 1e-6
    y0 = [amplitude + 0.5 * curvature * r0 ** 2, curvature * r0]

    def rhs(r, y):
        u, du = y
        return [du, -(dimension - 1) / r * du + omega * u - spec.derivative(u * u, 0) * u]

    def crossed_zero(r, y):
        return y[0]
    crossed_zero.terminal, crossed_zero.direction = True, -1

    def turned_up(r, y):
        return y[1]
    turned_up.terminal, turned_up.direction = True, 1

    sol = solve_ivp(rhs, (r0, r_max), y0, method='DOP853', rtol=1e-11, atol=1e-14,
                    events=(crossed_zero, turned_up), dense_output=True)
    if sol.t_events[0].size:
        return 'over', sol
    if sol.t_events[1].size:
        return 'under', sol
    u, du = sol.y[0, -1], sol.y[1, -1]
    return ('under' if du + math.sqrt(omega) * u > 0 else 'over'), sol


def amplitude_scan(spec: NonlinearitySpec, omega: float, points: int = 400) -> np.ndarray:
    """
    Trial values of phi(0), ascending, through the band where beta(A^2) > omega.

    Only there is phi''(0) < 0. When the band is bounded above by A_top, the overshoot window
    (A*, A_top) can be narrow, so the band is sampled linearly and refined geometrically toward A_top.

    Raises:
        NoGroundStateError: beta(A^2) never exceeds omega
    """
    def excess(a):
        return float(spec.derivative(a * a, 0)) - omega

    trial = np.geomspace(1e-4, 1e4, 801)
    above = np.asarray(spec.derivative(trial ** 2, 0)) - omega > 0
    if not above.any():
        raise NoGroundStateError(f"no ground state found at omega={omega}: beta(s) never exceeds omega")
    first = int(np.argmax(above))
    a_low = trial[0] if first == 0 else brentq(excess, trial[first - 1], trial[first])
    below_again = ~above[first:]
    if not below_again.any():
        return a_low * np.geomspace(1.0 + 1e-6, 1e3, points)
    last = first + int(np.argmax(below_again))
    a_top = brentq(excess, trial[last - 1], trial[last])
    width = a_top - a_low
    interior = np.linspace(a_low, a_top, points + 2)[1:-1]
    approach = a_top - width * np.geomspace(1e-3, 1e-12, 40)
    return np.unique(np.concatenate([interior, approach]))


def shooting_guess(spec: NonlinearitySpec, grid: RadialGrid, omega: float,
                   amplitudes: Optional[Sequence[float]] = None) -> np.ndarray:
    """
    Initial guess from shooting on phi(0) with bisection between undershoot and overshoot.

    Raises:
        NoGroundStateError: when no amplitude overshoots, i.e. no positive decaying
            solution separates the two behaviours
    """
    r_max = min(grid.radius, 40.0 / math.sqrt(omega))
    scan = amplitudes if amplitudes is not None else amplitude_scan(spec, omega)
    previous, bracket = None, None
    kinds = []
    for amplitude in scan:
        kind, _ = _shoot(spec, grid.dimension, omega, amplitude, r_max)
        kinds.append(kind)
        if kind == 'over' and previous is not None:
            bracket = (previous, amplitude)
            break
        if kind == 'under':
            previous = amplitude
    if bracket is None:
        raise NoGroundStateError(
            f"no ground state found at omega={omega}: no overshoot among {len(kinds)} amplitudes "
            f"in [{scan[0]:g}, {scan[-1]:g}] (all {'undershoot' if set(kinds) == {'under'} else 'mixed'})")

    low, high = bracket
    for _ in range(200):
        mid = 0.5 * (low + high)
        if mid in (low, high) or high - low < 1e-14 * high:
            break
        kind, _ = _shoot(spec, grid.dimension, omega, mid, r_max)
        if kind == 'under':
            low = mid
        else:
            high = mid
    _, sol = _shoot(spec, grid.dimension, omega, low, r_max)
    logger.debug("shooting omega=%g phi(0)=%.12g", omega, low)

    r = grid.nodes
    if sol is None:
        return low * np.exp(-math.sqrt(omega) * r)
    r_turn = sol.t_events[1][0] if sol.t_events[1].size else sol.t[-1]
    r_cut = 0.7 * r_turn
    guess = np.empty_like(r)
    inside = r <= r_cut
    guess[inside] = sol.sol(r[inside])[0]
    edge = float(sol.sol(r_cut)[0])
    outside = ~inside
    guess[outside] = edge * (r_cut / r[outside]) ** (0.5 * (grid.dimension - 1)) \
        * np.exp(-math.sqrt(omega) * (r[outside] - r_cut))
    return guess


def count_nodes(phi: np.ndarray) -> int:
    """Sign changes of phi ignoring round-off level values."""
    significant = phi[np.abs(phi) > 1e-10 * np.max(np.abs(phi))]
    return int(np.sum(np.diff(np.sign(significant)) != 0))


def omega_derivatives(spec: NonlinearitySpec, grid: RadialGrid, omega: float, phi: np.ndarray):
    """Solve L+ d phi = -phi and L+ d2 phi = -2 d phi + 2 (3 beta' + 2 beta'' s) phi (d phi)^2."""
    solver = spla.splu(l_plus(spec, grid, omega, phi))
    d1 = solver.solve(-phi)
    s = phi * phi
    source = -2.0 * d1 + 2.0 * (3.0 * spec.derivative(s, 1) + 2.0 * spec.derivative(s, 2) * s) * phi * d1 ** 2
    d2 = solver.solve(source)
    return d1, d2


def solve_ground_state(spec: NonlinearitySpec, omega: float, grid: RadialGrid,
                       initial_guess: Optional[np.ndarray] = None,
                       residual_tol: float = 1e-10) -> GroundState:
    """
    Positive, nodeless, decaying solution of Delta u - omega u + beta(u^2) u = 0.

    Args:
        spec: Nonlinearity
        omega: Frequency > 0
        grid: Radial grid
        initial_guess: Newton starting point; shooting supplies one when missing or failing
        residual_tol: Relative L2 residual to reach

    Returns:
        GroundState with d_omega phi and d2_omega phi
    """
    if omega <= 0:
        raise NoGroundStateError(f"no ground state found at omega={omega}: omega must be positive")
    phi, iterations, residual = None, 0, float('inf')
    if initial_guess is not None:
        try:
            phi, iterations, residual = _newton(spec, grid, omega, initial_guess, residual_tol)
        except NonConvergenceError as e:
            logger.debug("Newton from supplied guess failed (%s); falling back to shooting", e)
            phi = None
    if phi is None or not _acceptable(phi):
        guess = shooting_guess(spec, grid, omega)
        try:
            phi, iterations, residual = _newton(spec, grid, omega, guess, residual_tol)
        except NonConvergenceError as e:
            raise NoGroundStateError(f"no ground state found at omega={omega}: {e}")
    if not _acceptable(phi):
        raise NoGroundStateError(
            f"no ground state found at omega={omega}: converged solution has {count_nodes(phi)} node(s) "
            f"or vanishes")
    d1, d2 = omega_derivatives(spec, grid, omega, phi)
    logger.debug("ground state omega=%g phi(0)=%.10g residual=%.2e", omega, grid.origin_value(phi), residual)
    return GroundState(spec, grid, omega, phi, d1, d2, residual, iterations)


def _acceptable(phi: np.ndarray) -> bool:
    return np.max(phi) > 1e-8 and phi[0] > 0 and count_nodes(phi) == 0


def continue_branch(spec: NonlinearitySpec, omegas: Sequence[float], grid: RadialGrid,
                    residual_tol: float = 1e-10, slope_tolerance: float = 1e-4) -> GroundStateBranch:
    """
    Ground states along omega, each solve warm-started from the previous sample.

    The first sample must succeed; later failures truncate the branch with a reason.
    """
    branch = GroundStateBranch(slope_tolerance=slope_tolerance)
    guess = None
    for omega in omegas:
        try:
            state = solve_ground_state(spec, float(omega), grid, guess, residual_tol)
        except (NoGroundStateError, NonConvergenceError) as e:
            if not branch.states:
                raise
            branch.truncated_at, branch.truncation_reason = float(omega), str(e)
            logger.warning("branch truncated at omega=%g: %s", omega, e)
            break
        branch.omegas.append(float(omega))
        branch.states.append(state)
        guess = state.phi
    if len(branch.states) >= 3 and branch.slope_agreement() > slope_tolerance:
        logger.warning("analytic and finite-difference mass slopes differ by %.2e", branch.slope_agreement())
    return branch


def check_H5(spec: NonlinearitySpec, phi: np.ndarray, grid: RadialGrid, omega: float,
             eigen_tol: float = 1e-10, count: int = 6) -> H5Report:
    """
    Lowest eigenvalues of L+ on radial functions.

    L+ is similar to the symmetric v-space operator T + diag(potential), which is what is diagonalised.
    """
    s = phi * phi
    potential = omega - spec.derivative(s, 0) - 2.0 * spec.derivative(s, 1) * s
    symmetric = (grid.symmetric_kinetic() + sp.diags(potential)).tocsc()
    shift = float(np.min(potential)) - 1.0
    k = min(count, grid.points - 2)
    while True:
        try:
            values = spla.eigsh(symmetric, k=k, sigma=shift, which='LM', tol=eigen_tol,
                                v0=start_vector(grid.points), return_eigenvectors=False)
        except spla.ArpackError as e:
            raise EigensolverError(f"L+ eigensolve failed: {e}")
        values = np.sort(values)
        if values[-1] >= 0 or k >= grid.points - 2:
            break
        k = min(2 * k, grid.points - 2)
    negative = int(np.sum(values < 0))
    quadratic = float(grid.integrate(phi * (l_plus(spec, grid, omega, phi) @ phi)))
    return H5Report(negative, float(np.min(np.abs(values))), values.tolist(), quadratic, eigen_tol)


def decay_rate(state: GroundState) -> float:
    """Fitted exponential decay rate of r^((d-1)/2) phi on [R/2, 3R/4]."""
    grid = state.grid
    r = grid.nodes
    window = (r >= 0.5 * grid.radius) & (r <= 0.75 * grid.radius) & (state.phi > 0)
    slope, _ = np.polyfit(r[window], np.log(state.phi[window] * grid.symmetrizer[window]), 1)
    return float(-slope)
