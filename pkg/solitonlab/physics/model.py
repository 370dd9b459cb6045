# Soliton Lab - Model
# Nonlinearity, radial grid, spinor conventions and Taylor coefficients of the nonlinear remainder

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Dict, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.special import gamma, poch

from solitonlab.shared.errors import ConfigError, GridMismatchError, NumericalError

# Deepest Taylor order supported for the nonlinear remainder (2N+1 with N <= 2).
MAX_TAYLOR_ORDER = 5

# Pauli matrices in the convention of the linearized system.
SIGMA1 = np.array([[0.0, 1.0], [1.0, 0.0]])
SIGMA2 = np.array([[0.0, 1.0j], [-1.0j, 0.0]])
SIGMA3 = np.array([[1.0, 0.0], [0.0, -1.0]])

# Seed of the ARPACK start vectors.
ARPACK_SEED = 20240

Monomial = Tuple[int, int]
Poly = Dict[Monomial, np.ndarray]


class NonlinearityKind(Enum):
    """Supported closed forms of beta."""
    PURE_POWER = "pure_power"          # beta(s) = s^((p-1)/2)
    CUBIC_QUINTIC = "cubic_quintic"    # beta(s) = a s - b s^2
    SATURABLE = "saturable"            # beta(s) = s / (1 + kappa s)


@dataclass(frozen=True)
class NonlinearitySpec:
    """The smooth function beta entering i u_t + Lap u + beta(|u|^2) u = 0."""
    kind: NonlinearityKind
    p: float = 3.0
    a: float = 1.0
    b: float = 0.0
    kappa: float = 1.0

    @classmethod
    def pure_power(cls, p: float) -> 'NonlinearitySpec':
        return cls(NonlinearityKind.PURE_POWER, p=p)

    @classmethod
    def cubic_quintic(cls, a: float, b: float) -> 'NonlinearitySpec':
        return cls(NonlinearityKind.CUBIC_QUINTIC, a=a, b=b)

    @classmethod
    def saturable(cls, kappa: float) -> 'NonlinearitySpec':
        return cls(NonlinearityKind.SATURABLE, kappa=kappa)

    @classmethod
    def linear(cls) -> 'NonlinearitySpec':
        """beta = 0."""
        return cls(NonlinearityKind.CUBIC_QUINTIC, a=0.0, b=0.0)

    @classmethod
    def from_dict(cls, data: Dict) -> 'NonlinearitySpec':
        return cls(
            kind=NonlinearityKind(data['kind']),
            p=float(data.get('p', 3.0)),
            a=float(data.get('a', 1.0)),
            b=float(data.get('b', 0.0)),
            kappa=float(data.get('kappa', 1.0)),
        )

    def to_dict(self) -> Dict:
        return {'kind': self.kind.value, 'p': self.p, 'a': self.a, 'b': self.b, 'kappa': self.kappa}

    @property
    def is_linear(self) -> bool:
        return self.kind is NonlinearityKind.CUBIC_QUINTIC and self.a == 0.0 and self.b == 0.0

    def validate(self, dimension: int):
        """Check (H1)-(H2) for this kind in the given dimension."""
        if self.kind is NonlinearityKind.PURE_POWER:
            upper = (dimension + 2) / (dimension - 2)
            if not 1.0 < self.p < upper:
                raise ConfigError(f"pure_power needs 1 < p < {upper:g} in d={dimension}, got p={self.p}")
        if self.kind is NonlinearityKind.SATURABLE and self.kappa < 0:
            raise ConfigError("saturable needs kappa >= 0")
        if self.kind is NonlinearityKind.CUBIC_QUINTIC and self.b < 0 and dimension >= 3:
            raise ConfigError("cubic_quintic with b < 0 is energy-supercritical for d >= 3")

    def derivative(self, s, order: int):
        """beta^(order)(s) elementwise; accepts arrays (possibly complex)."""
        s = np.asarray(s)
        if self.kind is NonlinearityKind.CUBIC_QUINTIC:
            if order == 0:
                return self.a * s - self.b * s * s
            if order == 1:
                return self.a - 2.0 * self.b * s
            if order == 2:
                return np.full_like(s, -2.0 * self.b, dtype=np.result_type(s, float))
            return np.zeros_like(s, dtype=np.result_type(s, float))
        if self.kind is NonlinearityKind.SATURABLE:
            kappa = self.kappa
            if order == 0:
                return s / (1.0 + kappa * s)
            coeff = (-1.0) ** (order + 1) * math.factorial(order) * kappa ** (order - 1)
            return coeff / (1.0 + kappa * s) ** (order + 1)
        q = 0.5 * (self.p - 1.0)
        falling = poch(q - order + 1.0, order)
        if falling == 0.0:
            return np.zeros_like(s, dtype=np.result_type(s, float))
        with np.errstate(divide='ignore'):
            return falling * np.power(s, q - order)

    def primitive(self, s):
        """G(s) = integral of beta from 0 to s."""
        s = np.asarray(s)
        if self.kind is NonlinearityKind.CUBIC_QUINTIC:
            return 0.5 * self.a * s * s - self.b * s ** 3 / 3.0
        if self.kind is NonlinearityKind.SATURABLE:
            if self.kappa == 0.0:
                return 0.5 * s * s
            return s / self.kappa - np.log1p(self.kappa * s) / self.kappa ** 2
        q = 0.5 * (self.p - 1.0)
        return np.power(s, q + 1.0) / (q + 1.0)

    def secant_average(self, s0, s1):
        """
        (G(s1) - G(s0)) / (s1 - s0) as the mean of beta over [s0, s1].

        Gauss-Legendre nodes avoid the cancellation of the difference quotient and are
        exact for the polynomial kinds.
        """
        s0, s1 = np.asarray(s0), np.asarray(s1)
        total = np.zeros(np.broadcast(s0, s1).shape)
        for node, weight in zip(*_SECANT_RULE):
            total = total + weight * self.derivative(s0 + node * (s1 - s0), 0)
        return total


# Gauss-Legendre rule on [0, 1].
_SECANT_RULE = ((np.polynomial.legendre.leggauss(6)[0] + 1.0) / 2.0, np.polynomial.legendre.leggauss(6)[1] / 2.0)


def eval_beta(spec: NonlinearitySpec, s: float, order: int = 0) -> float:
    """
    Evaluate beta, beta' or beta'' at a nonnegative argument.

    Args:
        spec: Nonlinearity
        s: Argument, s >= 0
        order: 0, 1 or 2

    Returns:
        The requested derivative as a float
    """
    if s < 0:
        raise ValueError(f"beta is evaluated on s = |u|^2 >= 0, got {s}")
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    return float(spec.derivative(float(s), order))


@dataclass(frozen=True)
class RadialGrid:
    """Uniform radial grid r_j = j h (j = 1..M), h = R / M, for radial functions on R^d."""
    dimension: int
    radius: float
    points: int

    def __post_init__(self):
        if self.dimension < 3:
            raise ConfigError("radial grid needs dimension >= 3")
        if self.points < 4 or self.radius <= 0:
            raise ConfigError("radial grid needs radius > 0 and at least 4 points")

    @property
    def h(self) -> float:
        return self.radius / self.points

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.points + 1)

    @property
    def sphere_area(self) -> float:
        """|S^{d-1}|."""
        return 2.0 * math.pi ** (self.dimension / 2.0) / gamma(self.dimension / 2.0)

    @cached_property
    def weights(self) -> np.ndarray:
        return self.sphere_area * self.nodes ** (self.dimension - 1) * self.h

    @cached_property
    def symmetrizer(self) -> np.ndarray:
        """S = r^((d-1)/2); v = S u turns the radial Laplacian into d^2/dr^2 - c/r^2."""
        return self.nodes ** (0.5 * (self.dimension - 1))

    @property
    def centrifugal(self) -> float:
        return 0.25 * (self.dimension - 1) * (self.dimension - 3)

    def symmetric_kinetic(self, ghost_ratio: complex = 0.0) -> sp.csr_matrix:
        """
        -d^2/dr^2 + c/r^2 acting on v, Dirichlet at r = 0.

        Args:
            ghost_ratio: v_{M+1} / v_M closing the last row (0 is Dirichlet)
        """
        n, h2 = self.points, self.h ** 2
        dtype = complex if np.iscomplexobj(ghost_ratio) else float
        main = np.full(n, 2.0 / h2, dtype=dtype) + self.centrifugal / self.nodes ** 2
        main[-1] -= ghost_ratio / h2
        off = np.full(n - 1, -1.0 / h2)
        return sp.diags([off, main, off], [-1, 0, 1], format='csr')

    @cached_property
    def neg_laplacian(self) -> sp.csr_matrix:
        """-Lap_h on u-samples: S^{-1} T S, self-adjoint for the quadrature weights."""
        return self.similar(self.symmetric_kinetic())

    def similar(self, kinetic: sp.spmatrix) -> sp.csr_matrix:
        """Conjugate a v-space operator back to u-space."""
        s = self.symmetrizer
        return (sp.diags(1.0 / s) @ kinetic @ sp.diags(s)).tocsr()

    def origin_value(self, u: np.ndarray) -> complex:
        """u(0) from the even expansion u = a + b r^2 through r_1, r_2."""
        return (4.0 * u[..., 0] - u[..., 1]) / 3.0

    def with_radius(self, radius: float) -> 'RadialGrid':
        """Same spacing, different outer radius."""
        return RadialGrid(self.dimension, radius, int(round(radius / self.h)))

    def refined(self) -> 'RadialGrid':
        return RadialGrid(self.dimension, self.radius, 2 * self.points)

    def pad(self, values: np.ndarray, grid: 'RadialGrid') -> np.ndarray:
        """Extend samples on this grid by zeros onto a larger grid of equal spacing."""
        if not math.isclose(grid.h, self.h, rel_tol=1e-12) or grid.points < self.points:
            raise GridMismatchError("padding needs the same spacing and a larger radius")
        out = np.zeros(values.shape[:-1] + (grid.points,), dtype=values.dtype)
        out[..., :self.points] = values
        return out

    def integrate(self, density: np.ndarray) -> complex:
        return np.sum(self.weights * density, axis=-1)

    def to_dict(self) -> Dict:
        return {'dimension': self.dimension, 'radius': self.radius, 'points': self.points}


# Field: complex samples u(r_j), shape (M,). SpinorField: shape (2, M), rows (r, r-bar slot).

def lift(f: np.ndarray) -> np.ndarray:
    """Lift a scalar field to the spinor (f, conj f)."""
    f = np.asarray(f, dtype=complex)
    return np.stack([f, np.conj(f)])


def sigma1(F: np.ndarray) -> np.ndarray:
    return F[::-1].copy()


def sigma3(F: np.ndarray) -> np.ndarray:
    out = np.array(F, copy=True)
    out[1] = -out[1]
    return out


def inner(grid: RadialGrid, F: np.ndarray, G: np.ndarray) -> complex:
    """Quadrature pairing sum_j w_j (F1 conj G1 + F2 conj G2), conjugate-linear in G."""
    F, G = np.asarray(F), np.asarray(G)
    if F.shape != G.shape or F.shape[-1] != grid.points:
        raise GridMismatchError(f"pairing of shapes {F.shape} and {G.shape} on {grid.points} points")
    return complex(np.sum(grid.weights * np.sum(F * np.conj(G), axis=0)))


def norm(grid: RadialGrid, F: np.ndarray) -> float:
    return math.sqrt(max(inner(grid, F, F).real, 0.0))


def start_vector(size: int, dtype=float) -> np.ndarray:
    """Fixed pseudo-random start vector, so repeated eigensolves return identical output."""
    return np.random.default_rng(ARPACK_SEED).standard_normal(size).astype(dtype)


# --- polynomial arithmetic in (z, z-bar) with field-valued coefficients ---

def _poly_add(*polys: Poly) -> Poly:
    out: Poly = {}
    for poly in polys:
        for key, value in poly.items():
            out[key] = out[key] + value if key in out else value
    return out


def _poly_scale(poly: Poly, factor) -> Poly:
    return {key: value * factor for key, value in poly.items()}


def _poly_mul(left: Poly, right: Poly, depth: int) -> Poly:
    out: Poly = {}
    for (m1, n1), a in left.items():
        for (m2, n2), b in right.items():
            key = (m1 + m2, n1 + n2)
            if key[0] + key[1] > depth:
                continue
            out[key] = out[key] + a * b if key in out else a * b
    return out


def _beta_series(spec: NonlinearitySpec, s0: np.ndarray, delta: Poly, depth: int, shift: int) -> Poly:
    """Taylor series of beta^(shift)(s0 + delta) truncated at total degree depth."""
    result: Poly = {(0, 0): spec.derivative(s0, shift)}
    power: Poly = {(0, 0): np.ones_like(s0)}
    for k in range(1, depth + 1):
        power = _poly_mul(power, delta, depth)
        if not power:
            break
        result = _poly_add(result, _poly_scale(power, spec.derivative(s0, k + shift) / math.factorial(k)))
    return result


@dataclass
class TaylorCoefficients:
    """
    Coefficients of N(R) for R = z xi + z-bar sigma1 xi + f.

    lam[(m, n)] is the real spinor Lambda_{m,n}; amat[(m, n)] the real 2x2 matrix field
    A_{m,n} (shape (2, 2, M)) multiplying f at order z^m z-bar^n.
    """
    order: int
    lam: Dict[Monomial, np.ndarray] = field(default_factory=dict)
    amat: Dict[Monomial, np.ndarray] = field(default_factory=dict)

    def evaluate(self, z: complex, degrees=None) -> np.ndarray:
        """sum Lambda_{m,n} z^m z-bar^n over the selected total degrees."""
        total = None
        for (m, n), value in self.lam.items():
            if degrees is not None and m + n not in degrees:
                continue
            term = value * (z ** m) * (np.conj(z) ** n)
            total = term if total is None else total + term
        return total

    def apply_linear(self, z: complex, f: np.ndarray) -> np.ndarray:
        """sum z^m z-bar^n A_{m,n} f."""
        out = np.zeros_like(f, dtype=complex)
        for (m, n), mat in self.amat.items():
            out += (z ** m) * (np.conj(z) ** n) * np.einsum('ijk,jk->ik', mat, f)
        return out


def taylor_nonlinearity(spec: NonlinearitySpec, phi: np.ndarray, xi: np.ndarray,
                        order: int) -> TaylorCoefficients:
    """
    Multivariate Taylor coefficients of the nonlinear remainder.

    Args:
        spec: Nonlinearity
        phi: Ground state profile (real)
        xi: Real internal-mode spinor (2, M); use zeros when only f-terms matter
        order: Highest total degree 2N+1 of the Lambda_{m,n}

    Returns:
        TaylorCoefficients with Lambda for 2 <= m+n <= order and A_{m,n} for
        1 <= m+n <= (order-1)//2
    """
    if order > MAX_TAYLOR_ORDER or order < 2:
        raise NumericalError(f"Taylor order {order} outside the implemented range 2..{MAX_TAYLOR_ORDER}")
    phi = np.asarray(phi, dtype=float)
    xi = np.asarray(xi, dtype=float)
    s0 = phi * phi
    r: Poly = {(1, 0): xi[0], (0, 1): xi[1]}
    rbar: Poly = {(1, 0): xi[1], (0, 1): xi[0]}
    delta = _poly_add(_poly_scale(_poly_add(r, rbar), phi), _poly_mul(r, rbar, order))

    beta_s = _beta_series(spec, s0, delta, order, shift=0)
    g = _poly_mul(beta_s, _poly_add({(0, 0): phi}, r), order)
    coeffs = TaylorCoefficients(order=order)
    for (m, n), value in sorted(g.items()):
        if m + n < 2:
            continue
        conj_value = g.get((n, m), np.zeros_like(phi))
        coeffs.lam[(m, n)] = np.stack([-value, conj_value])

    linear_depth = (order - 1) // 2
    if linear_depth >= 1:
        dbeta = _beta_series(spec, s0, delta, linear_depth, shift=1)
        base_r = _poly_add({(0, 0): phi}, r)
        base_rbar = _poly_add({(0, 0): phi}, rbar)
        n_r = _poly_add(_poly_mul(dbeta, _poly_mul(base_r, base_rbar, linear_depth), linear_depth),
                        _beta_series(spec, s0, delta, linear_depth, shift=0))
        n_rbar = _poly_mul(dbeta, _poly_mul(base_r, base_r, linear_depth), linear_depth)
        zero = np.zeros_like(phi)
        for m in range(linear_depth + 1):
            for n in range(linear_depth + 1 - m):
                if m + n == 0:
                    continue
                a_mn, a_nm = n_r.get((m, n), zero), n_r.get((n, m), zero)
                b_mn, b_nm = n_rbar.get((m, n), zero), n_rbar.get((n, m), zero)
                coeffs.amat[(m, n)] = np.array([[-a_mn, -b_mn], [b_nm, a_nm]])
    return coeffs


def nonlinear_remainder(spec: NonlinearitySpec, phi: np.ndarray, R: np.ndarray) -> np.ndarray:
    """
    N(R) evaluated directly: -sigma3 (n, n-bar) with n the super-linear part of beta(|u|^2) u.

    Args:
        spec: Nonlinearity
        phi: Ground state profile
        R: Spinor perturbation (r, r-bar slot)
    """
    r, rb = R[0], R[1]
    s0 = phi * phi
    beta0, dbeta0 = spec.derivative(s0, 0), spec.derivative(s0, 1)
    s = (phi + r) * (phi + rb)
    bs = spec.derivative(s, 0)
    n1 = bs * (phi + r) - beta0 * phi - beta0 * r - dbeta0 * s0 * (r + rb)
    n2 = bs * (phi + rb) - beta0 * phi - beta0 * rb - dbeta0 * s0 * (r + rb)
    return np.stack([-n1, n2])
