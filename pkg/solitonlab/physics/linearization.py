# Soliton Lab - Linearization
# The operator H_omega, its gap spectrum, internal mode and the continuous-spectrum projection

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from solitonlab.shared.errors import EigensolverError, ProjectionError, ResonantRatioError

from .ground_state import GroundState
from .model import NonlinearitySpec, RadialGrid, inner, sigma1, sigma3, start_vector

logger = logging.getLogger(__name__)

# Fractions of omega used as shift-invert targets on the positive half of the gap.
SWEEP_FRACTIONS = (0.02, 0.2, 0.4, 0.6, 0.8, 0.97)
EIGS_PER_SHIFT = 6
# Multiples of omega used as shift-invert targets on the positive imaginary axis.
IMAGINARY_SWEEP = (0.25, 1.0, 3.0, 10.0)
# Largest operator order that is also diagonalised densely.
DENSE_CHECK_LIMIT = 2400
# Relative singular value below which kernel eigenvectors count as the same direction.
KERNEL_RANK_TOL = 1e-3
GRAM_CONDITION_LIMIT = 1e8


def potentials(spec: NonlinearitySpec, phi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """a = beta(phi^2) + beta'(phi^2) phi^2 and b = beta'(phi^2) phi^2."""
    s = phi * phi
    b = spec.derivative(s, 1) * s
    return spec.derivative(s, 0) + b, b


def block_operator(kinetic: sp.spmatrix, omega: float, a: np.ndarray, b: np.ndarray) -> sp.csc_matrix:
    """[[K + omega - a, -b], [b, -(K + omega - a)]] acting on stacked (F1, F2)."""
    diagonal = kinetic + sp.diags(omega - a)
    coupling = sp.diags(b)
    return sp.bmat([[diagonal, -coupling], [coupling, -diagonal]], format='csc')


def assemble_H(spec: NonlinearitySpec, phi: np.ndarray, grid: RadialGrid, omega: float) -> sp.csc_matrix:
    """
    H_omega = sigma3(-Delta + omega) + V_omega on two-component radial samples.

    V_omega = -sigma3 [beta + beta' phi^2] + i beta' phi^2 sigma2, which is real, so H is a real matrix.
    """
    a, b = potentials(spec, phi)
    return block_operator(grid.neg_laplacian, omega, a, b)


def apply_block(matrix: sp.spmatrix, F: np.ndarray) -> np.ndarray:
    m = F.shape[-1]
    return (matrix @ F.reshape(2 * m)).reshape(2, m)


@dataclass
class Eigenpair:
    value: complex
    vector: np.ndarray
    residual: float
    kind: str = "unclassified"   # kernel | internal_mode | internal_mode_conjugate | h9_violation | near_threshold

    def to_dict(self) -> Dict:
        return {'re': self.value.real, 'im': self.value.imag, 'residual': self.residual, 'kind': self.kind}


@dataclass
class SpectrumReport:
    """Eigenvalues found in the gap (-omega, omega) and their classification."""
    omega: float
    eigenpairs: List[Eigenpair] = field(default_factory=list)
    kernel_count: int = 0
    kernel_eigenvectors: int = 0
    kernel_chain_residual: float = float('nan')
    internal_mode: Optional[float] = None
    violations: List[complex] = field(default_factory=list)
    threshold_distance: float = float('inf')
    inconclusive: bool = False

    @property
    def h7_passed(self) -> bool:
        return self.internal_mode is not None and 0.0 < self.internal_mode < self.omega

    @property
    def h9_passed(self) -> bool:
        return not self.violations and self.kernel_count == 2 and not self.inconclusive

    def to_dict(self) -> Dict:
        return {
            'omega': self.omega,
            'eigenvalues': [p.to_dict() for p in self.eigenpairs],
            'kernel_count': self.kernel_count,
            'kernel_eigenvectors': self.kernel_eigenvectors,
            'kernel_chain_residual': self.kernel_chain_residual,
            'internal_mode': self.internal_mode,
            'h7_passed': self.h7_passed,
            'h9_passed': self.h9_passed,
            'h9_violations': [[v.real, v.imag] for v in self.violations],
            'threshold_distance': self.threshold_distance,
            'embedded_and_threshold_resonances': 'not checked',
            'inconclusive': self.inconclusive,
        }


@dataclass
class LinearizedSystem:
    """H_omega with its generalized kernel, internal mode and biorthogonal projection data."""
    state: GroundState
    operator: sp.csc_matrix
    a: np.ndarray
    b: np.ndarray
    spectrum: Optional[SpectrumReport] = None
    lam: Optional[float] = None
    xi: Optional[np.ndarray] = None
    d_xi: Optional[np.ndarray] = None
    d_lam: Optional[float] = None
    N: Optional[int] = None
    _gram_inverse: Optional[np.ndarray] = None
    _gram_condition: float = float('nan')

    @property
    def spec(self) -> NonlinearitySpec:
        return self.state.spec

    @property
    def grid(self) -> RadialGrid:
        return self.state.grid

    @property
    def omega(self) -> float:
        return self.state.omega

    @property
    def Phi(self) -> np.ndarray:
        return self.state.Phi

    @property
    def has_mode(self) -> bool:
        return self.xi is not None

    def require_mode(self):
        if self.xi is None:
            raise EigensolverError(f"no internal mode in the gap at omega={self.omega}")

    def apply(self, F: np.ndarray) -> np.ndarray:
        return apply_block(self.operator, F)

    def apply_adjoint(self, F: np.ndarray) -> np.ndarray:
        """H* = sigma3 H sigma3 for the quadrature pairing."""
        return sigma3(self.apply(sigma3(F)))

    def inner(self, F: np.ndarray, G: np.ndarray) -> complex:
        return inner(self.grid, F, G)

    def norm(self, F: np.ndarray) -> float:
        return math.sqrt(max(self.inner(F, F).real, 0.0))

    def kernel_residuals(self) -> Tuple[float, float]:
        """(|H sigma3 Phi| / |Phi|, |H d Phi + sigma3 Phi| / |Phi|)."""
        scale = self.norm(self.Phi)
        first = self.norm(self.apply(sigma3(self.Phi))) / scale
        second = self.norm(self.apply(self.state.d_Phi) + sigma3(self.Phi)) / scale
        return first, second

    # --- discrete subspaces ---

    def discrete_basis(self) -> List[np.ndarray]:
        self.require_mode()
        return [sigma3(self.Phi), self.state.d_Phi, self.xi.astype(complex), sigma1(self.xi).astype(complex)]

    def discrete_duals(self) -> List[np.ndarray]:
        self.require_mode()
        return [self.Phi, sigma3(self.state.d_Phi), sigma3(self.xi).astype(complex),
                -sigma3(sigma1(self.xi)).astype(complex)]

    def _gram(self) -> np.ndarray:
        if self._gram_inverse is None:
            basis, duals = self.discrete_basis(), self.discrete_duals()
            gram = np.array([[self.inner(e, d) for e in basis] for d in duals])
            self._gram_condition = float(np.linalg.cond(gram))
            if not np.isfinite(self._gram_condition) or self._gram_condition > GRAM_CONDITION_LIMIT:
                raise ProjectionError(f"dual Gram matrix ill-conditioned (cond {self._gram_condition:.3e})")
            self._gram_inverse = np.linalg.inv(gram)
        return self._gram_inverse

    @property
    def gram_condition(self) -> float:
        self._gram()
        return self._gram_condition

    def discrete_coordinates(self, F: np.ndarray) -> np.ndarray:
        """Coefficients of F along (sigma3 Phi, d Phi, xi, sigma1 xi) in the spectral decomposition."""
        rhs = np.array([self.inner(F, d) for d in self.discrete_duals()])
        return self._gram() @ rhs

    def project_continuous(self, F: np.ndarray) -> np.ndarray:
        coefficients = self.discrete_coordinates(F)
        out = np.array(F, dtype=complex, copy=True)
        for c, e in zip(coefficients, self.discrete_basis()):
            out -= c * e
        return out

    def project_continuous_adjoint(self, F: np.ndarray) -> np.ndarray:
        """P_c* F, annihilating the discrete directions of H*."""
        gram_t = self._gram().T
        rhs = np.array([self.inner(F, e) for e in self.discrete_basis()])
        coefficients = gram_t @ rhs
        out = np.array(F, dtype=complex, copy=True)
        for c, d in zip(coefficients, self.discrete_duals()):
            out -= c * d
        return out

    def quadratic_form(self, F: np.ndarray) -> float:
        """<sigma3 H F, F>, real for any F."""
        return self.inner(sigma3(self.apply(F)), F).real

    def d_operator(self) -> sp.csc_matrix:
        """d H / d omega = sigma3 + d V / d omega."""
        spec, phi, dphi = self.spec, self.state.phi, self.state.d_omega
        s = phi * phi
        ds = 2.0 * phi * dphi
        da = (2.0 * spec.derivative(s, 1) + spec.derivative(s, 2) * s) * ds
        db = (spec.derivative(s, 2) * s + spec.derivative(s, 1)) * ds
        m = self.grid.points
        return block_operator(sp.csr_matrix((m, m)), 1.0, da, db)

    def summary(self) -> Dict:
        kernel = self.kernel_residuals()
        out = {
            'omega': self.omega,
            'lambda': self.lam,
            'd_lambda': self.d_lam,
            'N': self.N,
            'kernel_residual': kernel[0],
            'kernel_chain_residual': kernel[1],
        }
        if self.spectrum is not None:
            out['spectrum'] = self.spectrum.to_dict()
        if self.xi is not None:
            out['gram_condition'] = self.gram_condition
        return out


def _normalise_mode(grid: RadialGrid, vector: np.ndarray) -> np.ndarray:
    """Real representative of an eigenvector with <xi, sigma3 xi> = 1."""
    flat = vector.reshape(-1)
    pivot = flat[np.argmax(np.abs(flat))]
    aligned = vector / (pivot / abs(pivot))
    scale = np.max(np.abs(aligned))
    imaginary = float(np.max(np.abs(aligned.imag)) / scale)
    if imaginary > 1e-8:
        logger.warning("internal mode has imaginary part %.2e after phase alignment", imaginary)
    real = aligned.real
    pairing = inner(grid, real, sigma3(real)).real
    if pairing <= 0:
        raise EigensolverError(f"internal mode has <xi, sigma3 xi> = {pairing:.3e} <= 0")
    return real / math.sqrt(pairing)


def _collect(matrix: sp.csc_matrix, shift: complex, k: int, eigen_tol: float, omega: float, kernel_tol: float,
             found: List[Eigenpair]):
    """Add the eigenpairs nearest to shift that lie in the gap or off the real axis."""
    n = matrix.shape[0]
    if np.iscomplexobj(shift):
        operator, start = matrix.astype(complex), start_vector(n, complex)
    else:
        operator, start = matrix, start_vector(n)
    try:
        values, vectors = spla.eigs(operator, k=k, sigma=shift, which='LM', tol=eigen_tol, v0=start)
    except spla.ArpackError as e:
        raise EigensolverError(f"shift-invert eigensolve failed at shift {shift:g}: {e}")
    for value, vector in zip(values, vectors.T):
        if abs(value.real) >= omega and abs(value.imag) <= kernel_tol:
            continue
        if any(abs(value - p.value) < 1e-6 * max(1.0, omega) for p in found):
            continue
        residual = np.linalg.norm(matrix @ vector - value * vector) / np.linalg.norm(vector)
        found.append(Eigenpair(complex(value), vector.reshape(2, -1), float(residual)))
    logger.debug("eigs shift=%s collected %d eigenvalue(s) so far", shift, len(found))


def discrete_spectrum(system: LinearizedSystem, eigen_tol: float = 1e-10, kernel_tol: float = 1e-3,
                      resonance_tol: float = 1e-3) -> SpectrumReport:
    """
    Shift-invert sweep over the positive half of the gap and up the imaginary axis; the mirror
    images follow from sigma1 H sigma1 = -H and from H being real.

    Classifies eigenvalues into the generalized kernel, the internal mode pair and
    anything else (an (H9) violation). Operators small enough to diagonalise densely are
    cross-checked for non-real eigenvalues the sweep missed.
    """
    omega, grid, matrix = system.omega, system.grid, system.operator
    n = 2 * grid.points
    k = min(EIGS_PER_SHIFT, n - 2)
    found: List[Eigenpair] = []
    for fraction in SWEEP_FRACTIONS:
        _collect(matrix, fraction * omega, k, eigen_tol, omega, kernel_tol, found)
    for multiple in IMAGINARY_SWEEP:
        _collect(matrix, 1j * multiple * omega, k, eigen_tol, omega, kernel_tol, found)
    if n <= DENSE_CHECK_LIMIT:
        for value in scipy.linalg.eigvals(matrix.toarray()):
            if value.imag > kernel_tol * max(1.0, omega) and \
                    not any(abs(value - p.value) < kernel_tol * max(1.0, omega) for p in found):
                logger.debug("dense check found %s outside the sweep", value)
                _collect(matrix, complex(value), min(2, n - 2), eigen_tol, omega, kernel_tol, found)

    report = SpectrumReport(omega=omega)
    positive_modes = []
    for pair in found:
        value = pair.value
        if abs(value) < kernel_tol:
            pair.kind = 'kernel'
        elif abs(value.imag) <= kernel_tol and omega - abs(value.real) < resonance_tol:
            pair.kind = 'near_threshold'
            report.inconclusive = True
        elif abs(value.imag) <= kernel_tol and value.real > 0:
            positive_modes.append(pair)
        elif abs(value.imag) <= kernel_tol and value.real < 0:
            pair.kind = 'internal_mode_conjugate'
        else:
            pair.kind = 'h9_violation'
            report.violations.append(value)
    positive_modes.sort(key=lambda p: p.value.real)
    if positive_modes:
        positive_modes[0].kind = 'internal_mode'
        report.internal_mode = float(positive_modes[0].value.real)
        for extra in positive_modes[1:]:
            extra.kind = 'h9_violation'
            report.violations.append(extra.value)
    kernel_vectors = [p.vector.reshape(-1) / np.linalg.norm(p.vector) for p in found if p.kind == 'kernel']
    if kernel_vectors:
        singular = np.linalg.svd(np.array(kernel_vectors), compute_uv=False)
        report.kernel_eigenvectors = int(np.sum(singular > KERNEL_RANK_TOL * singular[0]))
    report.kernel_count = report.kernel_eigenvectors
    if not system.spec.is_linear:
        report.kernel_chain_residual = max(system.kernel_residuals())
        if report.kernel_chain_residual > kernel_tol:
            logger.warning("generalized kernel not confirmed: chain residual %.2e", report.kernel_chain_residual)
            report.inconclusive = True
        elif report.kernel_eigenvectors == 1:
            # the block at 0 is a Jordan chain with one eigenvector; d_omega Phi is the second direction
            report.kernel_count = 2
    report.eigenpairs = sorted(found, key=lambda p: (p.value.real, p.value.imag))
    distances = [omega - abs(p.value.real) for p in found if p.kind != 'kernel' and abs(p.value.imag) <= kernel_tol]
    report.threshold_distance = float(min(distances)) if distances else float('inf')
    if report.violations:
        logger.warning("(H9) violated: extra eigenvalues %s", report.violations)
    if report.kernel_count != 2 and not system.spec.is_linear:
        logger.warning("generalized kernel has dimension %d, expected 2", report.kernel_count)
    if report.inconclusive:
        logger.warning("possible resonance near the threshold omega=%g, (H9) check inconclusive", omega)
    return report


def resonance_order(omega: float, lam: float, resonance_tol: float = 1e-3) -> int:
    """N with N lambda < omega < (N + 1) lambda."""
    ratio = omega / lam
    if abs(ratio - round(ratio)) < resonance_tol:
        raise ResonantRatioError(f"resonant ratio omega/lambda = {ratio:.6f} is an integer within tolerance")
    return int(math.floor(ratio))


def refine_mode(system: LinearizedSystem, lam_guess: float, xi_guess: np.ndarray,
                tol: float = 1e-12, max_iter: int = 30) -> Tuple[float, np.ndarray]:
    """
    Rayleigh quotient iteration in the sigma3 pairing, starting from a nearby mode.

    sigma3 H is symmetric for the quadrature pairing, so <H xi, sigma3 xi> / <xi, sigma3 xi>
    is the natural Rayleigh quotient.
    """
    m = system.grid.points
    identity = sp.identity(2 * m, format='csc')
    lam, xi = float(lam_guess), np.array(xi_guess, dtype=float)
    for iteration in range(max_iter):
        solver = spla.splu((system.operator - lam * identity).tocsc())
        xi = solver.solve(xi.reshape(2 * m)).reshape(2, m)
        xi = _normalise_mode(system.grid, xi)
        updated = system.inner(system.apply(xi), sigma3(xi)).real
        lam_change, lam = abs(updated - lam), updated
        if lam_change < tol * max(1.0, lam):
            logger.debug("refined mode lambda=%.12g in %d iteration(s)", lam, iteration + 1)
            return lam, xi
    raise EigensolverError(f"inverse iteration for the internal mode did not converge (lambda={lam:g})")


def mode_derivative(system: LinearizedSystem) -> Tuple[float, np.ndarray]:
    """
    (d lambda / d omega, d xi / d omega) from the bordered system

        (H - lambda) eta + c xi = (lambda' - dH) xi,   <eta, sigma3 xi> = 0.
    """
    system.require_mode()
    grid, xi, lam = system.grid, system.xi, system.lam
    m = grid.points
    dH = system.d_operator()
    dH_xi = apply_block(dH, xi)
    d_lam = system.inner(dH_xi, sigma3(xi)).real
    rhs = (d_lam * xi - dH_xi).reshape(2 * m)
    column = xi.reshape(2 * m)[:, None]
    row = (np.concatenate([grid.weights, grid.weights]) * sigma3(xi).reshape(2 * m))[None, :]
    bordered = sp.bmat([[system.operator - lam * sp.identity(2 * m), sp.csc_matrix(column)],
                        [sp.csr_matrix(row), None]], format='csc')
    solution = spla.spsolve(bordered, np.append(rhs, 0.0))
    return float(d_lam), solution[:-1].reshape(2, m)


def linearize(state: GroundState, eigen_tol: float = 1e-10, kernel_tol: float = 1e-3,
              resonance_tol: float = 1e-3, require_mode: bool = True) -> LinearizedSystem:
    """
    Assemble H at a ground state and attach its spectral data.

    Args:
        state: Converged ground state
        require_mode: Raise when the gap has no internal mode

    Returns:
        LinearizedSystem with lambda, xi, d xi, N when an internal mode exists
    """
    a, b = potentials(state.spec, state.phi)
    system = LinearizedSystem(state=state, operator=assemble_H(state.spec, state.phi, state.grid, state.omega),
                              a=a, b=b)
    system.spectrum = discrete_spectrum(system, eigen_tol, kernel_tol, resonance_tol)
    mode = next((p for p in system.spectrum.eigenpairs if p.kind == 'internal_mode'), None)
    if mode is None:
        if require_mode:
            system.require_mode()
        return system
    attach_mode(system, mode.value.real, _normalise_mode(state.grid, mode.vector), resonance_tol)
    return system


def attach_mode(system: LinearizedSystem, lam: float, xi: np.ndarray, resonance_tol: float = 1e-3):
    """Fix sign, store the mode and its omega-derivative, and determine N."""
    pivot = np.unravel_index(np.argmax(np.abs(xi)), xi.shape)
    if xi[pivot] < 0:
        xi = -xi
    system.lam, system.xi = float(lam), xi
    system._gram_inverse = None
    system.N = resonance_order(system.omega, system.lam, resonance_tol)
    system.d_lam, system.d_xi = mode_derivative(system)
    logger.debug("omega=%g lambda=%.10g N=%d", system.omega, system.lam, system.N)
