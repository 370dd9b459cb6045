# Soliton Lab - Modulation Tracker
# Splits a trajectory into frequency, phase, internal-mode amplitude and radiation

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import curve_fit

from solitonlab.shared.errors import (FitUnreliableError, NoGroundStateError, NonConvergenceError,
                                      NumericalError, TubeExitError)

from .dynamics import Trajectory
from .ground_state import solve_ground_state
from .linearization import LinearizedSystem, assemble_H, attach_mode, potentials, refine_mode
from .model import RadialGrid, lift, sigma1, sigma3
from .normal_form import compose_perturbation, modulation_rhs

logger = logging.getLogger(__name__)

TUBE_RADIUS = 0.5
NEWTON_TOL = 1e-12
STEP_TOL = 1e-10
NEWTON_MAX_ITER = 30
UNIQUENESS_OFFSET = (0.02, 0.1)
UNIQUENESS_TOL = 1e-6
SMOOTHNESS_FACTOR = 10.0
MIN_FIT_SAMPLES = 50
FIT_RESIDUAL_LIMIT = 0.2
NO_SIGNAL = 1e-10
WINDOW_STARTS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
FAMILY_CACHE_SIZE = 64


class SystemFamily:
    """
    Linearized systems along the ground-state branch, computed on demand.

    Ground states are warm-started from the nearest cached frequency and the internal
    mode is followed by inverse iteration, so a whole trajectory needs one eigen sweep.
    """

    def __init__(self, reference: LinearizedSystem, residual_tol: float = 1e-10,
                 resonance_tol: float = 1e-3, cache_size: int = FAMILY_CACHE_SIZE):
        reference.require_mode()
        self.reference = reference
        self.residual_tol = residual_tol
        self.resonance_tol = resonance_tol
        self.cache_size = cache_size
        self._cache: 'OrderedDict[float, LinearizedSystem]' = OrderedDict()
        self._cache[reference.omega] = reference

    @property
    def grid(self) -> RadialGrid:
        return self.reference.grid

    @property
    def N(self) -> int:
        return self.reference.N

    def _nearest(self, omega: float) -> LinearizedSystem:
        key = min(self._cache, key=lambda w: abs(w - omega))
        return self._cache[key]

    def at(self, omega: float) -> LinearizedSystem:
        if omega in self._cache:
            self._cache.move_to_end(omega)
            return self._cache[omega]
        near = self._nearest(omega)
        state = solve_ground_state(near.spec, omega, near.grid, near.state.phi, self.residual_tol)
        a, b = potentials(state.spec, state.phi)
        system = LinearizedSystem(state=state, operator=assemble_H(state.spec, state.phi, state.grid, omega),
                                  a=a, b=b)
        lam, xi = refine_mode(system, near.lam + near.d_lam * (omega - near.omega), near.xi)
        attach_mode(system, lam, xi, self.resonance_tol)
        self._cache[omega] = system
        while len(self._cache) > self.cache_size:
            oldest = next(iter(self._cache))
            if oldest == self.reference.omega:
                self._cache.move_to_end(oldest)
                oldest = next(iter(self._cache))
            del self._cache[oldest]
        return system


@dataclass
class ModulationState:
    time: float
    omega: float
    theta: float
    gamma: float
    z: complex
    f: np.ndarray
    orthogonality_residual: float
    newton_iterations: int = 0
    unique: Optional[bool] = None

    def perturbation(self, system: LinearizedSystem) -> np.ndarray:
        return compose_perturbation(system, self.z, self.f)


def _projections(system: LinearizedSystem, u: np.ndarray, theta: float) -> Tuple[np.ndarray, np.ndarray]:
    """Orthogonality conditions and their Jacobian in (omega, theta)."""
    grid, state = system.grid, system.state
    rotated = np.exp(-1j * theta) * u
    w = rotated - state.phi
    F = np.array([
        grid.integrate(w * state.phi).real,
        grid.integrate(rotated * state.d_omega).imag,
    ])
    J = np.array([
        [grid.integrate(w * state.d_omega).real - grid.integrate(state.phi * state.d_omega).real,
         grid.integrate(rotated * state.phi).imag],
        [grid.integrate(rotated * state.d2_omega).imag,
         -grid.integrate(rotated * state.d_omega).real],
    ])
    return F, J


def _tube_distance(system: LinearizedSystem, u: np.ndarray) -> float:
    """min over the phase of |e^{-i theta} u - phi| / |phi|."""
    grid, phi = system.grid, system.state.phi
    overlap = grid.integrate(u * phi)
    distance2 = grid.integrate(np.abs(u) ** 2).real + grid.integrate(phi ** 2).real - 2.0 * abs(overlap)
    return math.sqrt(max(distance2, 0.0) / grid.integrate(phi ** 2).real)


def _wrap(angle: float) -> float:
    return float(math.remainder(angle, 2.0 * math.pi))


def _newton(u: np.ndarray, family: SystemFamily, omega: float, theta: float) -> Tuple[float, float, int]:
    for iteration in range(1, NEWTON_MAX_ITER + 1):
        try:
            system = family.at(omega)
        except NoGroundStateError as e:
            raise NonConvergenceError(f"frequency iterate {omega:.6g} left the branch: {e}")
        F, J = _projections(system, u, theta)
        scale = system.grid.integrate(system.state.phi ** 2).real
        if np.max(np.abs(F)) <= NEWTON_TOL * scale:
            return omega, theta, iteration - 1
        step = np.linalg.solve(J, -F)
        if abs(step[0]) > 0.5 * omega:
            step *= 0.5 * omega / abs(step[0])
        omega, theta = omega + step[0], theta + step[1]
        if np.max(np.abs(step)) <= STEP_TOL * max(1.0, omega):
            return omega, theta, iteration
    raise NonConvergenceError(f"modulation Newton did not converge in {NEWTON_MAX_ITER} iterations")


def decompose(u: np.ndarray, family: SystemFamily, guess: Tuple[float, float], time: float = 0.0,
              check_uniqueness: bool = False) -> ModulationState:
    """
    Write u = e^{i theta}(phi_omega + z xi_1 + conj(z) (sigma1 xi)_1 + f_1) with R orthogonal
    to Phi and sigma3 d_omega Phi.

    Args:
        u: Scalar field on the family grid
        family: Linearized systems along the branch
        guess: Starting (omega, theta)
        time: Snapshot time carried into the state
        check_uniqueness: Rerun Newton from a perturbed guess and flag disagreement

    Returns:
        ModulationState with gamma = theta (track rebases gamma on the frequency integral)

    Raises:
        TubeExitError: u is too far from the ground-state orbit or Newton diverges
    """
    omega0, theta0 = guess
    start = family.at(omega0)
    distance = _tube_distance(start, u)
    if distance > TUBE_RADIUS:
        raise TubeExitError(f"outside modulation tube: distance {distance:.3g} to the orbit at "
                            f"omega={omega0:g}", time)
    try:
        omega, theta, iterations = _newton(u, family, omega0, theta0)
    except (NonConvergenceError, np.linalg.LinAlgError) as e:
        raise TubeExitError(f"outside modulation tube at t={time:g}: {e}", time)

    system = family.at(omega)
    R = lift(np.exp(-1j * theta) * u) - system.Phi
    xi = system.xi.astype(complex)
    z = system.inner(R, sigma3(xi))
    f = R - compose_perturbation(system, z)
    scale = system.norm(system.Phi)
    residual = max(abs(system.inner(R, system.Phi)), abs(system.inner(R, sigma3(system.state.d_Phi))),
                   abs(system.inner(f, sigma3(xi))), abs(system.inner(f, sigma3(sigma1(xi))))) / scale ** 2
    state = ModulationState(time=time, omega=float(omega), theta=_wrap(theta), gamma=_wrap(theta), z=complex(z),
                            f=f, orthogonality_residual=float(residual), newton_iterations=iterations)

    if check_uniqueness:
        offset = (omega0 + UNIQUENESS_OFFSET[0], theta0 + UNIQUENESS_OFFSET[1])
        try:
            other_omega, other_theta, _ = _newton(u, family, *offset)
            disagreement = max(abs(other_omega - omega), abs(_wrap(other_theta - theta)))
        except NonConvergenceError:
            disagreement = math.inf
        state.unique = disagreement <= UNIQUENESS_TOL
        if not state.unique:
            logger.warning("t=%g: perturbed Newton start disagrees by %.2e; decomposition may not be unique",
                           time, disagreement)
    return state


def h1_norm(grid: RadialGrid, f: np.ndarray) -> float:
    """H^1 norm of the scalar field carried by the spinor f."""
    g = f[0]
    gradient2 = grid.integrate(np.conj(g) * (grid.neg_laplacian @ g)).real
    return math.sqrt(max(grid.integrate(np.abs(g) ** 2).real + gradient2, 0.0))


def weighted_norm(grid: RadialGrid, f: np.ndarray, exponent: float) -> float:
    """|<x>^{-s} f_1|_{L^2}."""
    weight = (1.0 + grid.nodes ** 2) ** (-exponent)
    return math.sqrt(grid.integrate(weight * np.abs(f[0]) ** 2).real)


@dataclass
class DampingFit:
    gamma_fit: float
    confidence: float
    exponent_fit: float
    exponent_error: float
    window: Tuple[float, float]
    samples: int
    residual: float
    N: int

    @property
    def damping_sign(self) -> int:
        """Sign of d|z|^2/dt over the window."""
        return -int(np.sign(self.gamma_fit))

    def to_dict(self) -> Dict:
        return {
            'gamma_fit': self.gamma_fit,
            'confidence_95': self.confidence,
            'exponent_fit': self.exponent_fit,
            'exponent_error': self.exponent_error,
            'window': list(self.window),
            'samples': self.samples,
            'residual': self.residual,
            'N': self.N,
            'empirical_damping_sign': self.damping_sign,
        }


@dataclass
class TrajectoryDiagnostics:
    """Per-snapshot modulation series and the measurable consequences of mode damping."""
    times: np.ndarray
    z: np.ndarray
    omega: np.ndarray
    gamma: np.ndarray
    gamma_dot: np.ndarray
    f_h1: np.ndarray
    f_weighted: np.ndarray
    running_integral: np.ndarray
    N: int
    weight_exponent: float
    omega0: float
    smooth: bool = True
    fit: Optional[DampingFit] = None
    non_unique_times: List[float] = field(default_factory=list)

    def table(self) -> np.ndarray:
        return np.column_stack([self.times, self.z.real, self.z.imag, np.abs(self.z), self.omega, self.gamma,
                                self.f_h1, self.f_weighted, self.running_integral])

    @staticmethod
    def columns() -> List[str]:
        return ['t', 're_z', 'im_z', 'abs_z', 'omega', 'gamma', 'f_h1', 'f_weighted', 'running_integral']

    def _doubling_indices(self, levels: int = 4) -> List[int]:
        """Sample indices nearest to T, T/2, T/4, ... (latest first)."""
        final = self.times[-1]
        return [int(np.argmin(np.abs(self.times - final / 2 ** k))) for k in range(levels)]

    def running_integral_ratios(self) -> List[float]:
        """I(T) / I(T/2) for successive halvings of the final time."""
        idx = self._doubling_indices()
        values = self.running_integral
        return [float(values[a] / values[b]) if values[b] > 0 else math.nan for a, b in zip(idx, idx[1:])]

    def omega_increments(self) -> List[float]:
        """|omega(T) - omega(T/2)| for successive halvings of the final time."""
        idx = self._doubling_indices()
        return [float(abs(self.omega[a] - self.omega[b])) for a, b in zip(idx, idx[1:])]

    def omega_increment_ratios(self) -> List[float]:
        """Each omega increment over the one before it, latest first."""
        increments = self.omega_increments()
        return [later / earlier if earlier > NO_SIGNAL else (0.0 if later <= NO_SIGNAL else math.inf)
                for later, earlier in zip(increments, increments[1:])]

    def omega_converges(self, factor: float = 2.0) -> bool:
        """
        Increments shrink like |z|^2, i.e. by 2^(-1/N) per halving of T, within the given factor.

        Increments at the noise level count as converged.
        """
        expected = 2.0 ** (-1.0 / self.N)
        ratios = self.omega_increment_ratios()
        return bool(ratios) and all(r == 0.0 or expected / factor <= r <= min(1.0, expected * factor)
                                    for r in ratios)

    def radiation_decay_ratio(self) -> float:
        """Weighted radiation norm over the last tenth of the run relative to its peak."""
        peak = float(np.max(self.f_weighted))
        if peak == 0.0:
            return 0.0
        tail = self.f_weighted[int(0.9 * len(self.f_weighted)):]
        return float(np.max(tail) / peak)

    def max_excursion(self) -> float:
        """sup_t (|f|_{H^1} + |z| + |omega - omega0|)."""
        return float(np.max(self.f_h1 + np.abs(self.z) + np.abs(self.omega - self.omega0)))

    def summary(self) -> Dict:
        out = {
            'samples': len(self.times),
            'N': self.N,
            'abs_z_initial': float(abs(self.z[0])),
            'abs_z_final': float(abs(self.z[-1])),
            'omega_final': float(self.omega[-1]),
            'max_excursion': self.max_excursion(),
            'running_integral_ratios': self.running_integral_ratios(),
            'omega_increments': self.omega_increments(),
            'omega_increment_ratios': self.omega_increment_ratios(),
            'radiation_decay_ratio': self.radiation_decay_ratio(),
            'smooth': self.smooth,
            'non_unique_times': self.non_unique_times,
        }
        if self.fit is not None:
            out['fit'] = self.fit.to_dict()
        return out


def _smoothness(times: np.ndarray, z: np.ndarray, lam: float) -> bool:
    """Consecutive jumps in z stay below SMOOTHNESS_FACTOR times the linear rotation estimate."""
    if len(z) < 2:
        return True
    dt = np.diff(times)
    jumps = np.abs(np.diff(z))
    local_rate = lam * np.maximum(np.abs(z[1:]), np.abs(z[:-1]))
    return bool(np.all(jumps <= SMOOTHNESS_FACTOR * local_rate * dt + 1e-8))


def diagnostics_from_states(states: List[ModulationState], family: SystemFamily,
                            weight_exponent: float, N: Optional[int] = None) -> TrajectoryDiagnostics:
    N = family.N if N is None else N
    grid = family.grid
    times = np.array([s.time for s in states])
    z = np.array([s.z for s in states])
    omega = np.array([s.omega for s in states])
    gamma = np.array([s.gamma for s in states])
    gamma_dot = np.gradient(gamma, times) if len(states) > 2 else np.zeros(len(states))
    diagnostics = TrajectoryDiagnostics(
        times=times, z=z, omega=omega, gamma=gamma, gamma_dot=gamma_dot,
        f_h1=np.array([h1_norm(grid, s.f) for s in states]),
        f_weighted=np.array([weighted_norm(grid, s.f, weight_exponent) for s in states]),
        running_integral=cumulative_trapezoid(np.abs(z) ** (2 * N + 2), times, initial=0.0),
        N=N, weight_exponent=weight_exponent, omega0=float(omega[0]),
        smooth=_smoothness(times, z, family.reference.lam),
        non_unique_times=[s.time for s in states if s.unique is False],
    )
    if not diagnostics.smooth:
        logger.warning("z(t) jumps between snapshots exceed the continuation guard; reduce the stride")
    return diagnostics


def track(trajectory: Trajectory, family: SystemFamily, stride: int = 1, weight_exponent: float = 3.0,
          N: Optional[int] = None,
          check_uniqueness: bool = True) -> Tuple[List[ModulationState], TrajectoryDiagnostics]:
    """
    Decompose every stride-th snapshot, continuing (omega, theta) from the previous one.

    gamma is rebased as theta - int_0^t omega, with theta unwrapped across snapshots. With
    check_uniqueness every decomposition is repeated from a perturbed start and disagreements
    are listed in the diagnostics.

    Raises:
        TubeExitError: with the time of the first snapshot outside the tube
    """
    states: List[ModulationState] = []
    omega, theta = family.reference.omega, 0.0
    previous_time = None
    for time, u in list(trajectory)[::stride]:
        if previous_time is not None:
            theta += omega * (time - previous_time)
        if not states:
            overlap = family.grid.integrate(u * family.reference.state.phi)
            theta = float(np.angle(overlap))
        state = decompose(u, family, (omega, theta), time, check_uniqueness)
        states.append(state)
        omega = state.omega
        theta = theta + _wrap(state.theta - theta)
        previous_time = time
        logger.debug("t=%g omega=%.10g |z|=%.4e residual=%.1e", time, state.omega, abs(state.z),
                     state.orthogonality_residual)

    times = np.array([s.time for s in states])
    thetas = np.unwrap([s.theta for s in states])
    phase = cumulative_trapezoid([s.omega for s in states], times, initial=0.0) if len(states) > 1 else np.zeros(1)
    states = [replace(s, gamma=float(t - p)) for s, t, p in zip(states, thetas, phase)]
    return states, diagnostics_from_states(states, family, weight_exponent, N)


def modulation_consistency(states: List[ModulationState], family: SystemFamily,
                           window: Optional[Tuple[float, float]] = None) -> Dict[str, float]:
    """
    Relative error between finite-difference (omega', gamma', z') and the exact modulation system.

    Errors are measured in the L^2 sense over the window, relative to the predicted series.
    """
    times = np.array([s.time for s in states])
    if len(times) < 3:
        raise NumericalError("modulation consistency needs at least three tracked states")
    measured = {
        'omega_dot': np.gradient([s.omega for s in states], times),
        'gamma_dot': np.gradient([s.gamma for s in states], times),
        'z_dot': np.gradient(np.array([s.z for s in states]), times),
    }
    predicted = {key: np.zeros(len(states), dtype=complex) for key in measured}
    for k, s in enumerate(states):
        system = family.at(s.omega)
        rhs = modulation_rhs(system, s.perturbation(system))
        predicted['omega_dot'][k] = rhs.omega_dot
        predicted['gamma_dot'][k] = rhs.gamma_dot
        predicted['z_dot'][k] = -1j * (system.lam * s.z + rhs.z_rhs)
    mask = np.ones(len(times), dtype=bool)
    if window is not None:
        mask = (times >= window[0]) & (times <= window[1])
    mask[[0, -1]] = False
    errors = {}
    for key in measured:
        reference = np.linalg.norm(predicted[key][mask])
        difference = np.linalg.norm(measured[key][mask] - predicted[key][mask])
        errors[key] = float(difference / reference) if reference > 0 else float(difference)
    return errors


def _integrated_power_law(t, y0, rate, p):
    """y(t) solving y' = -2 rate y^p; y = |z|^2, so p = q / 2."""
    base = np.maximum(y0 ** (1.0 - p) + 2.0 * (p - 1.0) * rate * (t - t[0]), 1e-300)
    return base ** (1.0 / (1.0 - p))


def _fixed_exponent_fit(t: np.ndarray, y: np.ndarray, N: int):
    """y^{-N} is linear in t with slope 2 N Gamma when d|z|^2/dt = -2 Gamma |z|^{2N+2}."""
    fit = stats.linregress(t, y ** (-N))
    spread = np.linalg.norm(y ** (-N) - np.mean(y ** (-N)))
    residual = np.linalg.norm(y ** (-N) - (fit.intercept + fit.slope * t)) / spread if spread > 0 else math.inf
    return fit, residual


def fit_damping(diagnostics: TrajectoryDiagnostics, N: Optional[int] = None,
                window: Optional[Tuple[float, float]] = None, min_samples: int = MIN_FIT_SAMPLES) -> DampingFit:
    """
    Fit d|z|^2/dt = -2 Gamma_fit |z|^{2N+2} and the free exponent q in d|z|^2/dt ~ |z|^q.

    Gamma_fit is positive for a damped mode; it compares directly with the resolvent Gamma.
    Without an explicit window the start is chosen among fixed fractions of the run where
    the pure-power residual is smallest.

    Raises:
        FitUnreliableError: no signal, fewer than min_samples points, or residual above 20%
    """
    N = diagnostics.N if N is None else N
    t, y = diagnostics.times, np.abs(diagnostics.z) ** 2
    if np.max(np.sqrt(y)) < NO_SIGNAL:
        raise FitUnreliableError("fit unreliable: no signal in z(t)")

    if window is not None:
        candidates = [window]
    else:
        candidates = [(t[0] + s * (t[-1] - t[0]), t[-1]) for s in WINDOW_STARTS]
    best = None
    for lo, hi in candidates:
        mask = (t >= lo) & (t <= hi) & (y > 0)
        if mask.sum() < min_samples:
            continue
        fit, residual = _fixed_exponent_fit(t[mask], y[mask], N)
        if best is None or residual < best[2]:
            best = ((lo, hi), fit, residual, mask)
    if best is None:
        raise FitUnreliableError(f"fit unreliable: window shorter than {min_samples} samples")
    (lo, hi), fit, residual, mask = best
    if residual > FIT_RESIDUAL_LIMIT:
        raise FitUnreliableError(f"fit unreliable: pure-power residual {residual:.1%} on [{lo:g}, {hi:g}]")

    samples = int(mask.sum())
    gamma_fit = fit.slope / (2.0 * N)
    confidence = stats.t.ppf(0.975, samples - 2) * fit.stderr / (2.0 * N)
    tw, yw = t[mask], y[mask]
    try:
        (_, _, p), _ = curve_fit(_integrated_power_law, tw, yw, p0=(yw[0], gamma_fit, N + 1.0),
                                 maxfev=20000)
        exponent = 2.0 * p
    except (RuntimeError, ValueError) as e:
        logger.warning("free-exponent fit failed: %s", e)
        exponent = math.nan
    result = DampingFit(gamma_fit=float(gamma_fit), confidence=float(confidence), exponent_fit=float(exponent),
                        exponent_error=float(abs(exponent - (2 * N + 2))), window=(float(lo), float(hi)),
                        samples=samples, residual=float(residual), N=N)
    logger.info("Gamma_fit=%.4e +/- %.1e, q=%.3f on [%g, %g]", result.gamma_fit, result.confidence,
                result.exponent_fit, lo, hi)
    return result


def synthetic_mode(z0: complex, lam: float, rate: float, N: int, times: Iterable[float]) -> np.ndarray:
    """Closed-form solution of z' = -i lam z - rate |z|^{2N} z."""
    t = np.asarray(list(times), dtype=float)
    y = (abs(z0) ** (-2 * N) + 2.0 * N * rate * t) ** (-1.0 / N)
    return np.sqrt(y) * np.exp(1j * (np.angle(z0) - lam * t))
