# Soliton Lab - Resolvent
# (H - mu)^-1 in the gap and limiting absorption (H - mu - i0)^-1 in the continuous spectrum

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from solitonlab.shared.errors import (ChannelError, LimitingAbsorptionError, NonConvergenceError,
                                      ResolventSingularError)

from .linearization import LinearizedSystem, apply_block
from .model import RadialGrid

logger = logging.getLogger(__name__)

OUTGOING_BC = "outgoing_bc"
EPS_EXTRAPOLATION = "eps_extrapolation"
METHODS = (OUTGOING_BC, EPS_EXTRAPOLATION)

# Lagrange weights at eps = 0 for samples at eps0, eps0/2, eps0/4.
EXTRAPOLATION_WEIGHTS = (1.0 / 3.0, -2.0, 8.0 / 3.0)
# Attenuation required for a wave reflected at the Dirichlet wall, round trip.
REFLECTION_ATTENUATION = 1e-4
MAX_EXTRAPOLATION_POINTS = 400_000


@dataclass(frozen=True)
class ChannelData:
    """Discrete wavenumbers of the open (component 1) and closed (component 2) channels at mu."""
    mu: float
    omega: float
    h: float

    @property
    def k(self) -> float:
        return math.sqrt(self.mu - self.omega)

    @property
    def theta(self) -> float:
        """Phase advance per cell of the discrete outgoing wave, cos(theta) = 1 - h^2 k^2 / 2."""
        return math.acos(1.0 - 0.5 * self.h ** 2 * (self.mu - self.omega))

    @property
    def k_effective(self) -> float:
        """sin(theta) / h; enters the discrete Wronskian."""
        return math.sin(self.theta) / self.h

    @property
    def decay(self) -> float:
        """Per-cell decay exponent of the closed channel, 2 cosh(theta2) - 2 = h^2 (mu + omega)."""
        return math.acosh(1.0 + 0.5 * self.h ** 2 * (self.mu + self.omega))


def point_spectrum(system: LinearizedSystem) -> List[complex]:
    values = [0.0]
    if system.lam is not None:
        values += [system.lam, -system.lam]
    if system.spectrum is not None:
        values += list(system.spectrum.violations) + [-v for v in system.spectrum.violations]
    return values


def _check_residual(system: LinearizedSystem, mu: float, psi: np.ndarray, g: np.ndarray, tol: float):
    residual = system.norm(system.apply(psi) - mu * psi - g)
    scale = system.norm(g)
    if residual > tol * scale * 1e3:
        raise NonConvergenceError(f"gap resolvent residual {residual / scale:.2e} exceeds tolerance at mu={mu:g}")
    return residual / scale


def solve_gap(system: LinearizedSystem, mu: float, g: np.ndarray, singular_tol: float = 1e-3,
              residual_tol: float = 1e-10) -> np.ndarray:
    """
    Decaying solution of (H - mu) psi = g for |mu| < omega.

    Near an eigenvalue the solve is only defined on L^2_c; a g in L^2_c is then solved
    with the discrete directions bordered out, anything else is singular.

    Args:
        system: Linearized system
        mu: Real spectral parameter in the gap
        g: Right side, spinor (2, M)
        singular_tol: Distance to the point spectrum below which mu counts as an eigenvalue
        residual_tol: Relative residual to verify
    """
    if abs(mu) >= system.omega:
        raise ChannelError(f"mu={mu:g} is not in the gap (-{system.omega:g}, {system.omega:g})")
    g = np.asarray(g, dtype=complex)
    if not np.any(g):
        return np.zeros_like(g)
    m = system.grid.points
    distance = min(abs(mu - v) for v in point_spectrum(system))
    if distance > singular_tol:
        matrix = (system.operator - mu * sp.identity(2 * m, format='csc')).tocsc()
        psi = spla.spsolve(matrix, g.reshape(2 * m)).reshape(2, m)
        _check_residual(system, mu, psi, g, residual_tol)
        return psi

    if not system.has_mode:
        raise ResolventSingularError(f"resolvent singular at mu={mu:g} (distance {distance:.2e} to the spectrum)")
    outside = system.norm(g - system.project_continuous(g))
    if outside > 1e-8 * system.norm(g):
        raise ResolventSingularError(
            f"resolvent singular at mu={mu:g}: right side has a discrete component ({outside:.2e})")
    psi = _bordered_solve(system, mu, g)
    _check_residual(system, mu, psi, g, residual_tol)
    return psi


def _bordered_solve(system: LinearizedSystem, mu: float, g: np.ndarray) -> np.ndarray:
    """(H - mu) psi = g with psi constrained to L^2_c by the dual pairings."""
    m = system.grid.points
    weights = np.concatenate([system.grid.weights, system.grid.weights])
    columns = sp.csc_matrix(np.column_stack([e.reshape(2 * m).real for e in system.discrete_basis()]))
    rows = sp.csr_matrix(np.vstack([weights * d.reshape(2 * m).real for d in system.discrete_duals()]))
    matrix = sp.bmat([[system.operator - mu * sp.identity(2 * m), columns], [rows, None]], format='csc')
    rhs = np.concatenate([g.reshape(2 * m), np.zeros(4)])
    solution = spla.spsolve(matrix, rhs)
    return solution[:2 * m].reshape(2, m)


def _continuum_matrix(system: LinearizedSystem, grid: RadialGrid, mu: complex,
                      open_ghost: complex, closed_ghost: float) -> sp.csc_matrix:
    """H - mu in v = r^((d-1)/2) u variables with separate ghost ratios for both rows."""
    a = system.grid.pad(system.a, grid)
    b = system.grid.pad(system.b, grid)
    upper = grid.symmetric_kinetic(open_ghost) + sp.diags(system.omega - a - mu)
    lower = -(grid.symmetric_kinetic(closed_ghost) + sp.diags(system.omega - a)) - mu * sp.identity(grid.points)
    coupling = sp.diags(b)
    return sp.bmat([[upper, -coupling], [coupling, lower]], format='csc')


def _to_v(grid: RadialGrid, F: np.ndarray) -> np.ndarray:
    return F * grid.symmetrizer


def _to_u(grid: RadialGrid, V: np.ndarray) -> np.ndarray:
    return V / grid.symmetrizer


def check_channel(system: LinearizedSystem, mu: float) -> ChannelData:
    omega = system.omega
    if not omega < mu < 3.0 * omega:
        raise ChannelError(f"mu={mu:g} outside the single open channel window ({omega:g}, {3 * omega:g})")
    return ChannelData(mu=mu, omega=omega, h=system.grid.h)


def solve_outgoing(system: LinearizedSystem, mu: float, g: np.ndarray, method: str = OUTGOING_BC,
                   continuum_radius: Optional[float] = None, eps_fraction: float = 0.05) -> np.ndarray:
    """
    Limiting absorption solution psi = (H - mu - i0)^-1 g for omega < mu < 3 omega.

    Args:
        system: Linearized system on the bound-state grid
        mu: Spectral parameter in the open channel window
        g: Localized right side on the bound-state grid
        method: outgoing_bc (exact discrete transparent boundary) or eps_extrapolation
        continuum_radius: Radius of the continuum grid (same spacing); defaults to the bound-state radius
        eps_fraction: eps0 / (mu - omega) for eps_extrapolation

    Returns:
        Complex spinor on the continuum grid
    """
    channel = check_channel(system, mu)
    grid = system.grid.with_radius(continuum_radius or system.grid.radius)
    g = np.asarray(g, dtype=complex)
    if not np.any(g):
        return np.zeros((2, grid.points), dtype=complex)
    if method == OUTGOING_BC:
        return _solve_transparent(system, grid, channel, system.grid.pad(g, grid))
    if method == EPS_EXTRAPOLATION:
        return _solve_extrapolated(system, grid, channel, g, eps_fraction)
    raise ValueError(f"unknown limiting absorption method {method!r}")


def _solve_transparent(system: LinearizedSystem, grid: RadialGrid, channel: ChannelData,
                       g: np.ndarray) -> np.ndarray:
    open_ghost = complex(math.cos(channel.theta), math.sin(channel.theta))
    matrix = _continuum_matrix(system, grid, channel.mu, open_ghost, math.exp(-channel.decay))
    rhs = _to_v(grid, g).reshape(2 * grid.points)
    v = spla.spsolve(matrix, rhs).reshape(2, grid.points)
    logger.debug("outgoing solve mu=%g on %d points, tail |v1|=%.3e", channel.mu, grid.points, abs(v[0, -1]))
    return _to_u(grid, v)


def _solve_extrapolated(system: LinearizedSystem, grid: RadialGrid, channel: ChannelData,
                        g: np.ndarray, eps_fraction: float) -> np.ndarray:
    eps0 = eps_fraction * (channel.mu - channel.omega)
    smallest = eps0 / 4.0
    attenuation_length = math.log(1.0 / REFLECTION_ATTENUATION) * 2.0 * channel.k / smallest
    radius = max(grid.radius, 0.5 * attenuation_length)
    big = system.grid.with_radius(radius)
    if big.points > MAX_EXTRAPOLATION_POINTS:
        raise LimitingAbsorptionError(
            f"eps extrapolation needs {big.points} points; increase eps_fraction or use outgoing_bc")
    rhs = _to_v(big, system.grid.pad(g, big)).reshape(2 * big.points)
    decay = math.exp(-ChannelData(channel.mu, channel.omega, big.h).decay)
    result = np.zeros((2, grid.points), dtype=complex)
    for weight, eps in zip(EXTRAPOLATION_WEIGHTS, (eps0, eps0 / 2.0, eps0 / 4.0)):
        matrix = _continuum_matrix(system, big, channel.mu + 1j * eps, 0.0, decay)
        v = spla.spsolve(matrix, rhs).reshape(2, big.points)
        result += weight * _to_u(big, v)[:, :grid.points]
        logger.debug("eps solve mu=%g eps=%.3e on %d points", channel.mu, eps, big.points)
    return result


def regular_solution(system: LinearizedSystem, mu: float, continuum_radius: Optional[float] = None):
    """
    Real solution of (H - mu) e = 0 regular at the origin with a decaying closed channel,
    scaled so that its open-channel tail in v variables has unit amplitude.

    Returns:
        (grid, e_v, channel) with e_v in v = r^((d-1)/2) u variables
    """
    channel = check_channel(system, mu)
    grid = system.grid.with_radius(continuum_radius or system.grid.radius)
    matrix = _continuum_matrix(system, grid, mu, 0.0, math.exp(-channel.decay))
    rhs = np.zeros(2 * grid.points)
    rhs[grid.points - 1] = 1.0 / grid.h ** 2
    e = spla.spsolve(matrix, rhs).reshape(2, grid.points)
    tail = slice(3 * grid.points // 4, grid.points)
    j = np.arange(1, grid.points + 1)[tail]
    design = np.column_stack([np.sin(channel.theta * j), np.cos(channel.theta * j)])
    coefficients, *_ = np.linalg.lstsq(design, e[0, tail], rcond=None)
    amplitude = float(np.hypot(*coefficients))
    if amplitude == 0.0 or not np.isfinite(amplitude):
        raise LimitingAbsorptionError(f"regular continuum solution degenerate at mu={mu:g}")
    return grid, e / amplitude, channel


def delta_pairing(system: LinearizedSystem, mu: float, g: np.ndarray, w: np.ndarray,
                  continuum_radius: Optional[float] = None) -> float:
    """
    Im <R(mu + i0) g, w> through the spectral density: |S^{d-1}| (e, sigma3 g)(e, w) / k.

    g and w are real spinors on the bound-state grid.
    """
    grid, e, channel = regular_solution(system, mu, continuum_radius)
    gv = _to_v(grid, system.grid.pad(np.asarray(g).real, grid))
    wv = _to_v(grid, system.grid.pad(np.asarray(w).real, grid))
    e_sigma_g = grid.h * np.sum(e[0] * gv[0] - e[1] * gv[1])
    e_w = grid.h * np.sum(e[0] * wv[0] + e[1] * wv[1])
    return float(grid.sphere_area * e_sigma_g * e_w / channel.k_effective)


def pair_on(system: LinearizedSystem, psi: np.ndarray, w: np.ndarray) -> complex:
    """<psi, w> for psi on a continuum grid and w on the bound-state grid."""
    m = system.grid.points
    return complex(np.sum(system.grid.weights * np.sum(psi[:, :m] * np.conj(w), axis=0)))


def compare_methods(system: LinearizedSystem, mu: float, g: np.ndarray, w: np.ndarray,
                    continuum_radius: Optional[float] = None, eps_fraction: float = 0.05,
                    tolerance: float = 0.05) -> float:
    """Relative difference of <psi, w> between the two limiting absorption methods."""
    first = pair_on(system, solve_outgoing(system, mu, g, OUTGOING_BC, continuum_radius), w)
    second = pair_on(system, solve_outgoing(system, mu, g, EPS_EXTRAPOLATION, continuum_radius, eps_fraction), w)
    scale = max(abs(first), abs(second))
    difference = abs(first - second) / scale if scale > 0 else 0.0
    if difference > tolerance:
        raise LimitingAbsorptionError(
            f"limiting absorption unresolved, refine grid: methods differ by {difference:.1%} at mu={mu:g}")
    return difference


def apply_shifted(system: LinearizedSystem, mu: float, psi: np.ndarray) -> np.ndarray:
    """(H - mu) psi on the bound-state grid; used to verify solves."""
    return apply_block(system.operator, psi) - mu * psi
