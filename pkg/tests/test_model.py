import math

import numpy as np
import pytest

from solitonlab.physics.model import (NonlinearitySpec, RadialGrid, eval_beta, inner, lift, nonlinear_remainder,
                                      norm, sigma1, sigma3, taylor_nonlinearity)
from solitonlab.shared.errors import ConfigError, GridMismatchError, NumericalError

from .conftest import gaussian

KINDS = [
    NonlinearitySpec.pure_power(3.0),
    NonlinearitySpec.pure_power(2.2),
    NonlinearitySpec.cubic_quintic(1.0, 0.2),
    NonlinearitySpec.saturable(1.0),
]


def test_eval_beta_closed_forms():
    assert eval_beta(NonlinearitySpec.pure_power(3.0), 4.0, 0) == pytest.approx(4.0)
    assert eval_beta(NonlinearitySpec.saturable(1.0), 1.0, 0) == pytest.approx(0.5)
    assert eval_beta(NonlinearitySpec.cubic_quintic(1.0, 0.1), 2.0, 1) == pytest.approx(0.6)


@pytest.mark.parametrize("spec", KINDS)
def test_beta_vanishes_at_zero(spec):
    assert eval_beta(spec, 0.0, 0) == 0.0


def test_eval_beta_rejects_bad_arguments():
    spec = NonlinearitySpec.pure_power(3.0)
    with pytest.raises(ValueError):
        eval_beta(spec, -1.0)
    with pytest.raises(ValueError):
        eval_beta(spec, 1.0, order=3)


def test_validate_subcritical_power():
    NonlinearitySpec.pure_power(3.0).validate(3)
    with pytest.raises(ConfigError):
        NonlinearitySpec.pure_power(5.0).validate(3)
    with pytest.raises(ConfigError):
        NonlinearitySpec.saturable(-1.0).validate(3)


@pytest.mark.parametrize("spec", KINDS)
def test_derivatives_match_differences(spec):
    s, h = 0.7, 1e-5
    for order in (1, 2):
        difference = (spec.derivative(s + h, order - 1) - spec.derivative(s - h, order - 1)) / (2 * h)
        assert float(spec.derivative(s, order)) == pytest.approx(float(difference), rel=1e-6)


@pytest.mark.parametrize("spec", KINDS)
def test_secant_average_is_the_difference_quotient(spec):
    s0, s1 = np.array([0.3, 1.0]), np.array([0.9, 2.5])
    quotient = (spec.primitive(s1) - spec.primitive(s0)) / (s1 - s0)
    assert np.allclose(spec.secant_average(s0, s1), quotient, rtol=1e-9)
    assert np.allclose(spec.secant_average(s0, s0), spec.derivative(s0, 0), rtol=1e-12)


def test_grid_rejects_low_dimension():
    with pytest.raises(ConfigError):
        RadialGrid(2, 10.0, 100)


def test_gaussian_mass_quadrature():
    grid = RadialGrid(3, 40.0, 4000)
    assert grid.integrate(np.exp(-grid.nodes ** 2)) == pytest.approx(math.pi ** 1.5, rel=1e-6)


def test_gaussian_mass_quadrature_in_five_dimensions():
    grid = RadialGrid(5, 20.0, 2000)
    assert grid.integrate(np.exp(-grid.nodes ** 2)) == pytest.approx(math.pi ** 2.5, rel=1e-6)


def test_laplacian_is_weighted_symmetric(coarse_grid):
    weighted = (np.diag(coarse_grid.weights) @ coarse_grid.neg_laplacian.toarray())
    assert np.max(np.abs(weighted - weighted.T)) <= 1e-12 * np.max(np.abs(weighted))


def test_laplacian_of_gaussian():
    grid = RadialGrid(3, 10.0, 1000)
    r = grid.nodes
    exact = (6.0 - 4.0 * r ** 2) * np.exp(-r ** 2)
    assert np.max(np.abs(grid.neg_laplacian @ np.exp(-r ** 2) - exact)) < 5e-3


def test_origin_value_of_even_profile(coarse_grid):
    assert coarse_grid.origin_value(gaussian(coarse_grid)) == pytest.approx(1.0, abs=1e-5)


def test_inner_is_sesquilinear(coarse_grid):
    rng = np.random.default_rng(7)
    F = rng.normal(size=(2, coarse_grid.points)) + 1j * rng.normal(size=(2, coarse_grid.points))
    G = rng.normal(size=(2, coarse_grid.points)) + 1j * rng.normal(size=(2, coarse_grid.points))
    assert inner(coarse_grid, F, G) == pytest.approx(np.conj(inner(coarse_grid, G, F)))
    assert inner(coarse_grid, 2j * F, G) == pytest.approx(2j * inner(coarse_grid, F, G))
    unit = F / norm(coarse_grid, F)
    assert inner(coarse_grid, unit, unit) == pytest.approx(1.0)


def test_inner_rejects_grid_mismatch(coarse_grid):
    with pytest.raises(GridMismatchError):
        inner(coarse_grid, np.zeros((2, 10)), np.zeros((2, 10)))


def test_pad_needs_same_spacing(coarse_grid):
    bigger = coarse_grid.with_radius(40.0)
    padded = coarse_grid.pad(np.ones(coarse_grid.points), bigger)
    assert padded.shape == (bigger.points,) and padded[-1] == 0.0
    with pytest.raises(GridMismatchError):
        coarse_grid.pad(np.ones(coarse_grid.points), coarse_grid.refined())


def test_lift_has_conjugation_symmetry(coarse_grid):
    F = lift((1 + 2j) * gaussian(coarse_grid))
    assert np.allclose(sigma1(F), np.conj(F))
    assert np.allclose(sigma3(sigma3(F)), F)


def _profile_and_mode(grid):
    phi = 1.5 * gaussian(grid, 2.0)
    xi = np.stack([gaussian(grid, 1.5) * (1 - 0.2 * grid.nodes), 0.3 * gaussian(grid, 1.0)])
    return phi, xi


def test_taylor_coefficients_vanish_for_linear(coarse_grid):
    phi, xi = _profile_and_mode(coarse_grid)
    coeffs = taylor_nonlinearity(NonlinearitySpec.linear(), phi, xi, 3)
    assert all(not np.any(v) for v in coeffs.lam.values())
    assert all(not np.any(v) for v in coeffs.amat.values())


@pytest.mark.parametrize("spec", KINDS)
def test_taylor_symmetries(spec, coarse_grid):
    phi, xi = _profile_and_mode(coarse_grid)
    coeffs = taylor_nonlinearity(spec, phi, xi, 5)
    for (m, n), value in coeffs.lam.items():
        assert np.allclose(sigma1(value), -coeffs.lam[(n, m)], atol=1e-12)
    for (m, n), mat in coeffs.amat.items():
        swapped = coeffs.amat[(n, m)][::-1, ::-1]
        assert np.allclose(mat, -swapped, atol=1e-12)


def test_taylor_order_limits(coarse_grid):
    phi, xi = _profile_and_mode(coarse_grid)
    with pytest.raises(NumericalError):
        taylor_nonlinearity(NonlinearitySpec.pure_power(3.0), phi, xi, 6)


@pytest.mark.parametrize("spec,order", [(NonlinearitySpec.pure_power(3.0), 3),
                                        (NonlinearitySpec.cubic_quintic(1.0, 0.2), 5)])
def test_taylor_expansion_is_exact_for_polynomial_beta(spec, order, coarse_grid):
    phi, xi = _profile_and_mode(coarse_grid)
    z = 0.3 - 0.2j
    R = z * xi + np.conj(z) * sigma1(xi)
    direct = nonlinear_remainder(spec, phi, R)
    series = taylor_nonlinearity(spec, phi, xi, order).evaluate(z)
    assert np.max(np.abs(direct - series)) <= 1e-11 * np.max(np.abs(direct))


@pytest.mark.parametrize("spec", [k for k in KINDS if k.p != 2.2])
def test_quadratic_terms_leave_a_cubic_remainder(spec, coarse_grid):
    phi, xi = _profile_and_mode(coarse_grid)
    coeffs = taylor_nonlinearity(spec, phi, xi, 3)

    def remainder(eps):
        z = eps * (0.6 + 0.8j)
        R = z * xi + np.conj(z) * sigma1(xi)
        return np.max(np.abs(nonlinear_remainder(spec, phi, R) - coeffs.evaluate(z, degrees=(2,))))

    slope = math.log2(remainder(1e-2) / remainder(5e-3))
    assert slope >= 2.9


def test_linear_coefficients_match_central_difference(coarse_grid):
    spec = NonlinearitySpec.pure_power(3.0)
    phi, xi = _profile_and_mode(coarse_grid)
    coeffs = taylor_nonlinearity(spec, phi, xi, 5)
    z, eps = 0.2 + 0.1j, 1e-4
    R0 = z * xi + np.conj(z) * sigma1(xi)
    f = lift((0.5 + 0.3j) * gaussian(coarse_grid, 3.0))
    difference = (nonlinear_remainder(spec, phi, R0 + eps * f) - nonlinear_remainder(spec, phi, R0 - eps * f)) / (2 * eps)
    expected = coeffs.apply_linear(z, f)
    assert np.max(np.abs(difference - expected)) <= 1e-6 * np.max(np.abs(difference))
