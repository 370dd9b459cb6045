# Soliton Lab - Normal Form
# Sources Phi^(k)_{m,n}, correctors Psi^(k)_{m,n}, ODE duals and the exact modulation right side

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from solitonlab.shared.errors import NearResonanceError, NumericalError, ProjectionError

from .linearization import LinearizedSystem, apply_block
from .model import Monomial, TaylorCoefficients, nonlinear_remainder, sigma1, sigma3, taylor_nonlinearity
from .resolvent import OUTGOING_BC, pair_on, point_spectrum, solve_gap, solve_outgoing

logger = logging.getLogger(__name__)

SUPPORTED_ORDERS = (1, 2)


def _conjugate_partner(F: np.ndarray) -> np.ndarray:
    """sigma1 conj(F): the (n, m) corrector paired with the (m, n) one."""
    return sigma1(np.conj(F))


def _transpose_apply(matrix: np.ndarray, F: np.ndarray) -> np.ndarray:
    """A^T F nodewise for a (2, 2, M) matrix field."""
    return np.einsum('jik,jk->ik', matrix, F)


@dataclass
class LeadingCoefficients:
    """Quadratic parts of (i z' - lambda z), gamma' and i omega' from the Lambda_{m,n}."""
    z_rhs: Dict[Monomial, float] = field(default_factory=dict)
    gamma_dot: Dict[Monomial, float] = field(default_factory=dict)
    i_omega_dot: Dict[Monomial, float] = field(default_factory=dict)


@dataclass
class OdeDuals:
    """
    Vectors turning the linear-in-f part of the modulation right side into pairings <f, .>.

    alpha gives i omega', beta gives gamma', gamma gives i z' - lambda z.
    """
    alpha: Dict[Monomial, np.ndarray] = field(default_factory=dict)
    beta: Dict[Monomial, np.ndarray] = field(default_factory=dict)
    gamma: Dict[Monomial, np.ndarray] = field(default_factory=dict)
    resonant: Optional[np.ndarray] = None
    condition: float = float('nan')


@dataclass
class NormalFormPackage:
    """Normal-form data up to level N at one omega."""
    omega: float
    lam: float
    N: int
    taylor: TaylorCoefficients
    sources: Dict[int, Dict[Monomial, np.ndarray]] = field(default_factory=dict)
    correctors: Dict[int, Dict[Monomial, np.ndarray]] = field(default_factory=dict)
    leading: LeadingCoefficients = field(default_factory=LeadingCoefficients)
    resonant_source: Optional[np.ndarray] = None
    resonant_corrector: Optional[np.ndarray] = None
    continuum_radius: Optional[float] = None
    duals: Optional[OdeDuals] = None

    @property
    def resonant_index(self) -> Monomial:
        return (self.N + 1, 0)

    @property
    def resonant_frequency(self) -> float:
        return (self.N + 1) * self.lam

    def manifest(self) -> Dict:
        return {
            'omega': self.omega,
            'lambda': self.lam,
            'N': self.N,
            'levels': {str(k): sorted(f"{m},{n}" for m, n in level) for k, level in self.sources.items()},
            'resonant_frequency': self.resonant_frequency,
            'leading_z_rhs': {f"{m},{n}": v for (m, n), v in self.leading.z_rhs.items()},
            'dual_condition': self.duals.condition if self.duals else None,
        }


def _leading_coefficients(system: LinearizedSystem, taylor: TaylorCoefficients) -> LeadingCoefficients:
    state = system.state
    slope = state.mass_slope
    sigma3_xi = sigma3(system.xi)
    sigma3_dphi = sigma3(state.d_Phi)
    leading = LeadingCoefficients()
    for key, lam in taylor.lam.items():
        if sum(key) != 2:
            continue
        leading.z_rhs[key] = system.inner(lam, sigma3_xi).real
        leading.gamma_dot[key] = -system.inner(lam, sigma3_dphi).real / slope
        leading.i_omega_dot[key] = system.inner(lam, state.Phi).real / slope
    return leading


def _check_off_resonance(system: LinearizedSystem, mu: float, tolerance: float, key: Monomial):
    for value in point_spectrum(system):
        distance = abs(mu - value)
        if 0.0 < distance < tolerance:
            raise NearResonanceError(
                f"pair {key}: (m-n) lambda = {mu:.6g} lies within {distance:.2e} of eigenvalue {value}")
    if abs(abs(mu) - system.omega) < tolerance:
        raise NearResonanceError(f"pair {key}: (m-n) lambda = {mu:.6g} sits on the threshold")


def _level_two_source(system: LinearizedSystem, package: NormalFormPackage, key: Monomial) -> np.ndarray:
    m, n = key
    taylor, leading = package.taylor, package.leading
    first = package.correctors[1]
    xi, d_xi = system.xi.astype(complex), system.d_xi.astype(complex)
    total = np.array(taylor.lam[key], dtype=complex)
    for (a, b), matrix in taylor.amat.items():
        if a + b != 1:
            continue
        partner = (m - a, n - b)
        if partner in first:
            total += np.einsum('ijk,jk->ik', matrix, first[partner])
    if m >= 1:
        total += leading.gamma_dot.get((m - 1, n), 0.0) * sigma3(xi)
        total -= leading.i_omega_dot.get((m - 1, n), 0.0) * d_xi
    if n >= 1:
        total += leading.gamma_dot.get((m, n - 1), 0.0) * sigma3(sigma1(xi))
        total -= leading.i_omega_dot.get((m, n - 1), 0.0) * sigma1(d_xi)
    # time derivative of the level-one corrections beyond the linear rotation
    for (p, q), psi in first.items():
        for (s, t), coefficient in leading.z_rhs.items():
            if p >= 1 and (p - 1 + s, q + t) == key:
                total -= p * coefficient * psi
            if q >= 1 and (p + t, q - 1 + s) == key:
                total += q * coefficient * psi
    return system.project_continuous(total)


def build_sources(system: LinearizedSystem, taylor: Optional[TaylorCoefficients] = None, N: Optional[int] = None,
                  continuum_radius: Optional[float] = None, method: str = OUTGOING_BC,
                  eps_fraction: float = 0.05, resonance_tol: float = 1e-3,
                  singular_tol: float = 1e-3) -> NormalFormPackage:
    """
    Normal-form sources and correctors up to level N.

    Level one sources are P_c Lambda_{m,n} (m + n = 2); level two adds the f-linear
    Taylor terms acting on the level-one correctors together with the modulation
    terms carried by sigma3 xi and d xi. Off-resonant correctors come from the gap
    resolvent, the resonant pair (N+1, 0), (0, N+1) from limiting absorption.

    Args:
        system: Linearized system with an internal mode
        taylor: Taylor coefficients; computed to order 2N+1 when omitted
        N: Resonance order; the system's N when omitted
        continuum_radius: Radius for the outgoing solve
        method: Limiting absorption method for the resonant corrector
    """
    system.require_mode()
    N = N if N is not None else system.N
    if N not in SUPPORTED_ORDERS:
        raise NumericalError(f"normal form of order N={N} is not supported (1 or 2)")
    taylor = taylor or taylor_nonlinearity(system.spec, system.state.phi, system.xi, 2 * N + 1)
    package = NormalFormPackage(system.omega, system.lam, N, taylor, continuum_radius=continuum_radius)
    package.leading = _leading_coefficients(system, taylor)
    lam = system.lam

    for level in range(1, N + 1):
        degree = level + 1
        sources, correctors = {}, {}
        for m in range(degree, -1, -1):
            n = degree - m
            key = (m, n)
            if level == 1:
                source = system.project_continuous(taylor.lam[key].astype(complex))
            else:
                source = _level_two_source(system, package, key)
            sources[key] = source
            mu = (m - n) * lam
            if level == N and key == package.resonant_index:
                continue
            if level == N and key == (0, N + 1):
                continue
            _check_off_resonance(system, mu, resonance_tol, key)
            if abs(mu) >= system.omega:
                raise NearResonanceError(f"pair {key}: (m-n) lambda = {mu:.6g} outside the gap below level N")
            correctors[key] = -solve_gap(system, mu, source, singular_tol)
        package.sources[level] = sources
        package.correctors[level] = correctors
        logger.debug("normal form level %d: %d source(s)", level, len(sources))

    package.resonant_source = package.sources[N][package.resonant_index]
    outgoing = solve_outgoing(system, package.resonant_frequency, package.resonant_source, method,
                              continuum_radius, eps_fraction)
    package.resonant_corrector = -outgoing
    m_bound = system.grid.points
    package.correctors[N][package.resonant_index] = -outgoing[:, :m_bound]
    package.correctors[N][(0, N + 1)] = _conjugate_partner(-outgoing[:, :m_bound])
    package.duals = build_ode_duals(system, taylor, N)
    return package


def build_ode_duals(system: LinearizedSystem, taylor: TaylorCoefficients, N: int) -> OdeDuals:
    """
    Duals of the f-linear terms of the modulation system at leading order.

    gamma_{m,n} = P_c*(A_{m,n}^T sigma3 xi) reproduces <N, sigma3 xi> to first order in f;
    alpha and beta do the same for i omega' and gamma' through Phi and sigma3 d Phi.
    """
    system.require_mode()
    state = system.state
    slope = state.mass_slope
    if abs(slope) < 1e-12:
        raise ProjectionError("modulation matrix singular: dM/domega vanishes")
    duals = OdeDuals(condition=system.gram_condition)
    sigma3_xi = sigma3(system.xi).astype(complex)
    sigma3_dphi = sigma3(state.d_Phi)
    for key, matrix in taylor.amat.items():
        if sum(key) > N:
            continue
        duals.gamma[key] = system.project_continuous_adjoint(_transpose_apply(matrix, sigma3_xi))
        duals.alpha[key] = system.project_continuous_adjoint(_transpose_apply(matrix, state.Phi)) / slope
        duals.beta[key] = -system.project_continuous_adjoint(_transpose_apply(matrix, sigma3_dphi)) / slope
    duals.resonant = duals.gamma.get((0, N))
    if duals.resonant is None:
        raise NumericalError(f"Taylor coefficients do not reach A_(0,{N})")
    return duals


@dataclass
class ModulationRhs:
    """Solved modulation equations at one state."""
    omega_dot: complex
    gamma_dot: complex
    z_rhs: complex            # i z' - lambda z
    condition: float


def modulation_rhs(system: LinearizedSystem, R: np.ndarray, N_R: Optional[np.ndarray] = None) -> ModulationRhs:
    """
    Exact projected modulation equations for the perturbation R = z xi + z-bar sigma1 xi + f:

        i omega' (M' - <R, d Phi>) - gamma' <R, sigma3 Phi> = <N, Phi>
        -gamma' (M' + <R, d Phi>) - i omega' <R, sigma3 d2 Phi> = <N, sigma3 d Phi>
        i z' - lambda z = gamma' <R, xi> + i omega' <R, sigma3 d xi> + <N, sigma3 xi>
    """
    system.require_mode()
    state = system.state
    if N_R is None:
        N_R = nonlinear_remainder(state.spec, state.phi, R)
    slope = state.mass_slope
    r_dphi = system.inner(R, state.d_Phi)
    matrix = np.array([
        [slope - r_dphi, -system.inner(R, sigma3(state.Phi))],
        [-system.inner(R, sigma3(state.d2_Phi)), -(slope + r_dphi)],
    ])
    rhs = np.array([system.inner(N_R, state.Phi), system.inner(N_R, sigma3(state.d_Phi))])
    condition = float(np.linalg.cond(matrix))
    if not np.isfinite(condition) or condition > 1e12:
        raise ProjectionError(f"modulation matrix near-singular (cond {condition:.3e})")
    i_omega_dot, gamma_dot = np.linalg.solve(matrix, rhs)
    z_rhs = (gamma_dot * system.inner(R, system.xi)
             + i_omega_dot * system.inner(R, sigma3(system.d_xi))
             + system.inner(N_R, sigma3(system.xi)))
    return ModulationRhs(omega_dot=-1j * i_omega_dot, gamma_dot=gamma_dot, z_rhs=z_rhs, condition=condition)


def compose_perturbation(system: LinearizedSystem, z: complex, f: Optional[np.ndarray] = None) -> np.ndarray:
    """R = z xi + z-bar sigma1 xi + f."""
    system.require_mode()
    R = z * system.xi.astype(complex) + np.conj(z) * sigma1(system.xi).astype(complex)
    return R if f is None else R + f


def residual_after_level_one(system: LinearizedSystem, package: NormalFormPackage, z: complex) -> np.ndarray:
    """P_c N(z xi + z-bar sigma1 xi) minus the quadratic sources; O(|z|^3) when the sources are right."""
    R = compose_perturbation(system, z)
    total = system.project_continuous(nonlinear_remainder(system.spec, system.state.phi, R))
    for (m, n), source in package.sources[1].items():
        total -= source * (z ** m) * (np.conj(z) ** n)
    return total


def corrector_residual(system: LinearizedSystem, package: NormalFormPackage, level: int, key: Monomial) -> float:
    """|(H - (m-n) lambda) Psi + Phi| / |Phi| for an off-resonant corrector."""
    m, n = key
    psi = package.correctors[level][key]
    source = package.sources[level][key]
    scale = system.norm(source)
    if scale == 0.0:
        return 0.0
    return system.norm(apply_block(system.operator, psi) - (m - n) * system.lam * psi + source) / scale


def resonant_pairing(system: LinearizedSystem, package: NormalFormPackage) -> complex:
    """<R_H((N+1) lambda + i0) Phi^(N)_{N+1,0}, gamma^(N)_{0,N}>."""
    return -pair_on(system, package.resonant_corrector, package.duals.resonant)
