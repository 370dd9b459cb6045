# Soliton Lab - Fermi Golden Rule
# Gamma = Im <R_H((N+1) lambda + i0) Phi^(N)_{N+1,0}, gamma^(N)_{0,N}> and scans along a branch

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from solitonlab.shared.errors import ChannelError, LimitingAbsorptionError, SolitonLabError

from .ground_state import GroundState, GroundStateBranch, solve_ground_state
from .linearization import LinearizedSystem, linearize
from .model import NonlinearitySpec, RadialGrid
from .normal_form import NormalFormPackage, build_sources, resonant_pairing
from .resolvent import EPS_EXTRAPOLATION, OUTGOING_BC, delta_pairing, pair_on, solve_outgoing

logger = logging.getLogger(__name__)

CROSS_METHOD_TOLERANCE = 0.05

VERDICT_PASSED = "passed"
VERDICT_FAILED = "failed"
VERDICT_DEGENERATE = "degenerate"


@dataclass(frozen=True)
class FgrParameters:
    """Numerical knobs shared by compute_gamma and gamma_scan."""
    method: str = OUTGOING_BC
    continuum_radius: Optional[float] = None
    eps_fraction: float = 0.05
    threshold: float = 1e-6
    noise_fraction: float = 1e-3
    eigen_tol: float = 1e-10
    kernel_tol: float = 1e-3
    resonance_tol: float = 1e-3
    residual_tol: float = 1e-10
    order: Optional[int] = None
    cross_check: bool = True

    @classmethod
    def from_config(cls, config) -> 'FgrParameters':
        tol = config.tolerances
        return cls(
            method=config.resolvent.method,
            continuum_radius=config.continuum.radius,
            eps_fraction=config.resolvent.eps_fraction,
            threshold=config.fgr.threshold,
            noise_fraction=config.fgr.noise_fraction,
            eigen_tol=tol.eigen,
            kernel_tol=tol.kernel,
            resonance_tol=tol.resonance,
            residual_tol=tol.residual,
            order=config.normal_form.resolved_order(),
        )


@dataclass
class FgrReport:
    omega: float
    lam: float
    N: int
    gamma_resolvent: float
    gamma_delta: float = float('nan')
    gamma_alternate: float = float('nan')
    cross_method_error: float = float('nan')
    alternate_method_error: float = float('nan')
    noise_floor: float = 0.0
    threshold: float = 0.0
    method: str = OUTGOING_BC

    @property
    def verdict(self) -> str:
        if abs(self.gamma_resolvent) <= self.noise_floor:
            return VERDICT_DEGENERATE
        return VERDICT_PASSED if abs(self.gamma_resolvent) > self.threshold else VERDICT_FAILED

    @property
    def sign(self) -> int:
        return int(np.sign(self.gamma_resolvent)) if self.verdict != VERDICT_DEGENERATE else 0

    @property
    def predicted_damping_sign(self) -> int:
        """Sign of d(|z|^2/2)/dt |z|^-(2N+2); the mode decays when this is negative."""
        return -self.sign

    def to_dict(self) -> Dict:
        out = asdict(self)
        out.update(verdict=self.verdict, sign=self.sign, predicted_damping_sign=self.predicted_damping_sign)
        return out


def noise_floor(system: LinearizedSystem, source: np.ndarray, dual: np.ndarray, fraction: float) -> float:
    """fraction * <|Phi^(N)_{N+1,0}|, |gamma^(N)_{0,N}|>."""
    weights = system.grid.weights
    return float(fraction * np.sum(weights * np.sum(np.abs(source) * np.abs(dual), axis=0)))


def compute_gamma(system: LinearizedSystem, package: NormalFormPackage,
                  parameters: FgrParameters = FgrParameters()) -> FgrReport:
    """
    FGR coefficient through the outgoing resolvent, cross-checked against the delta form
    and, when requested, the other limiting absorption method.

    Raises:
        ChannelError: (N+1) lambda does not lie above omega by more than the resonance tolerance
        LimitingAbsorptionError: the delta form and the resolvent form disagree by more than 5%
    """
    mu = package.resonant_frequency
    if mu - system.omega <= parameters.resonance_tol:
        raise ChannelError(f"below channel threshold: (N+1) lambda = {mu:.6g} <= omega = {system.omega:.6g}")
    source, dual = package.resonant_source, package.duals.resonant
    report = FgrReport(omega=system.omega, lam=system.lam, N=package.N, gamma_resolvent=0.0,
                       threshold=parameters.threshold, method=parameters.method)
    if not np.any(source) or not np.any(dual):
        report.gamma_delta = report.gamma_alternate = 0.0
        report.cross_method_error = 0.0
        return report

    report.gamma_resolvent = float(resonant_pairing(system, package).imag)
    report.noise_floor = noise_floor(system, source, dual, parameters.noise_fraction)
    report.gamma_delta = delta_pairing(system, mu, source.real, dual.real, parameters.continuum_radius)
    scale = max(abs(report.gamma_resolvent), report.noise_floor)
    report.cross_method_error = abs(report.gamma_resolvent - report.gamma_delta) / scale if scale > 0 else 0.0

    if parameters.cross_check:
        other = EPS_EXTRAPOLATION if parameters.method == OUTGOING_BC else OUTGOING_BC
        psi = solve_outgoing(system, mu, source, other, parameters.continuum_radius, parameters.eps_fraction)
        report.gamma_alternate = float(pair_on(system, psi, dual).imag)
        report.alternate_method_error = abs(report.gamma_resolvent - report.gamma_alternate) / scale if scale > 0 else 0.0

    logger.info("omega=%g lambda=%.6g N=%d Gamma=%.6e (delta form %.6e, %s)", report.omega, report.lam,
                report.N, report.gamma_resolvent, report.gamma_delta, report.verdict)
    if report.verdict != VERDICT_DEGENERATE and report.cross_method_error > CROSS_METHOD_TOLERANCE:
        raise LimitingAbsorptionError(
            f"limiting absorption unresolved, refine grid: resolvent and delta forms differ by "
            f"{report.cross_method_error:.1%} at omega={system.omega:g}")
    return report


def gamma_at(state: GroundState, parameters: FgrParameters) -> FgrReport:
    """Linearize, build the normal form and evaluate Gamma at one ground state."""
    system = linearize(state, parameters.eigen_tol, parameters.kernel_tol, parameters.resonance_tol)
    package = build_sources(system, N=parameters.order, continuum_radius=parameters.continuum_radius,
                            method=parameters.method, eps_fraction=parameters.eps_fraction,
                            resonance_tol=parameters.resonance_tol, singular_tol=parameters.kernel_tol)
    return compute_gamma(system, package, parameters)


@dataclass
class GammaScan:
    rows: List[Dict] = field(default_factory=list)
    threshold: float = 0.0

    @property
    def reports(self) -> List[Dict]:
        return [row for row in self.rows if not row.get('error')]

    @property
    def infimum(self) -> float:
        values = [abs(row['gamma_resolvent']) for row in self.reports]
        return float(min(values)) if values else float('nan')

    @property
    def passed(self) -> bool:
        return bool(self.reports) and len(self.reports) == len(self.rows) and self.infimum > self.threshold

    @property
    def sign_changes(self) -> int:
        signs = [row['sign'] for row in self.reports if row['sign'] != 0]
        return int(sum(1 for a, b in zip(signs, signs[1:]) if a != b))

    def table(self) -> np.ndarray:
        """Columns omega, lambda, N, Gamma_resolvent, Gamma_delta, error, verdict code (1 pass, 0 fail, -1 other)."""
        codes = {VERDICT_PASSED: 1, VERDICT_FAILED: 0}
        lines = []
        for row in self.rows:
            lines.append([
                row['omega'], row.get('lam', math.nan), row.get('N', math.nan),
                row.get('gamma_resolvent', math.nan), row.get('gamma_delta', math.nan),
                row.get('cross_method_error', math.nan), codes.get(row.get('verdict'), -1),
            ])
        return np.array(lines, dtype=float)

    def summary(self) -> Dict:
        return {
            'points': len(self.rows),
            'failed_points': [{'omega': r['omega'], 'error': r['error']} for r in self.rows if r.get('error')],
            'inf_abs_gamma': self.infimum,
            'threshold': self.threshold,
            'hypothesis_passed': self.passed,
            'sign_changes': self.sign_changes,
        }


def _scan_point(spec_data: Dict, grid_data: Dict, omega: float, guess: Optional[np.ndarray],
                parameters: FgrParameters) -> Dict:
    """Worker body for one omega; importable at module level for process pools."""
    spec = NonlinearitySpec.from_dict(spec_data)
    grid = RadialGrid(**grid_data)
    try:
        state = solve_ground_state(spec, omega, grid, guess, parameters.residual_tol)
        return gamma_at(state, parameters).to_dict()
    except SolitonLabError as e:
        return {'omega': omega, 'error': f"{type(e).__name__}: {e}"}


def gamma_scan(spec: NonlinearitySpec, branch: GroundStateBranch, parameters: FgrParameters = FgrParameters(),
               jobs: int = 1) -> GammaScan:
    """
    Gamma at every sample of a branch; per-omega failures become error rows.

    Args:
        spec: Nonlinearity
        branch: Ground-state branch supplying the omegas and warm starts
        parameters: Numerical parameters
        jobs: Worker processes (1 runs in-process)
    """
    scan = GammaScan(threshold=parameters.threshold)
    if not branch.states:
        return scan
    grid_data = branch.states[0].grid.to_dict()
    if jobs <= 1:
        for state in branch.states:
            try:
                scan.rows.append(gamma_at(state, parameters).to_dict())
            except SolitonLabError as e:
                logger.warning("omega=%g: %s", state.omega, e)
                scan.rows.append({'omega': state.omega, 'error': f"{type(e).__name__}: {e}"})
        return scan

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_scan_point, spec.to_dict(), grid_data, state.omega, state.phi, parameters)
                   for state in branch.states]
        for future in futures:
            row = future.result()
            if row.get('error'):
                logger.warning("omega=%g: %s", row['omega'], row['error'])
            scan.rows.append(row)
    return scan
