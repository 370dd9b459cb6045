from dataclasses import replace

import numpy as np
import pytest

from solitonlab.physics import linearization
from solitonlab.physics.ground_state import GroundState, solve_ground_state
from solitonlab.physics.linearization import apply_block, assemble_H, discrete_spectrum, linearize, resonance_order
from solitonlab.physics.model import NonlinearitySpec, RadialGrid, sigma1, sigma3
from solitonlab.shared.errors import EigensolverError, ResonantRatioError


@pytest.fixture(scope="module")
def cubic_system(cubic_state):
    return linearize(cubic_state, require_mode=False)


def _random_spinor(grid, seed):
    rng = np.random.default_rng(seed)
    decay = np.exp(-0.1 * grid.nodes)
    return (rng.normal(size=(2, grid.points)) + 1j * rng.normal(size=(2, grid.points))) * decay


def test_assemble_h_structure(cubic, cubic_state):
    grid, phi = cubic_state.grid, cubic_state.phi
    H = assemble_H(cubic, phi, grid, cubic_state.omega)
    m = grid.points
    assert H.shape == (2 * m, 2 * m)
    assert not np.iscomplexobj(H.toarray())
    assert abs(H[:m, m:] + H[m:, :m]).max() == 0.0
    assert abs(H[:m, :m] + H[m:, m:]).max() == 0.0
    gauge = apply_block(H, np.array([phi, -phi]))
    assert np.max(np.abs(gauge)) <= 1e-7 * np.max(np.abs(phi))


def test_generalized_kernel(cubic_system):
    first, second = cubic_system.kernel_residuals()
    assert first <= 1e-7
    assert second <= 1e-7


def test_adjoint_is_sigma3_conjugate(cubic_system):
    grid = cubic_system.grid
    F, G = _random_spinor(grid, 1), _random_spinor(grid, 2)
    lhs = cubic_system.inner(cubic_system.apply(F), G)
    rhs = cubic_system.inner(F, cubic_system.apply_adjoint(G))
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_quadratic_form_is_real_part_of_symmetric_pairing(cubic_system):
    F = _random_spinor(cubic_system.grid, 3)
    value = cubic_system.inner(sigma3(cubic_system.apply(F)), F)
    assert abs(value.imag) <= 1e-10 * abs(value)
    assert cubic_system.quadratic_form(F) == pytest.approx(value.real)


def test_supercritical_cubic_has_unstable_pair(cubic_system):
    report = cubic_system.spectrum
    assert report.kernel_count == 2
    assert report.violations
    assert all(abs(v.imag) > 1e-3 for v in report.violations)
    assert not report.h9_passed
    unstable = [p for p in report.eigenpairs if p.kind == "h9_violation"]
    assert any(abs(p.value.real) < 1e-6 and p.value.imag > 1e-2 for p in unstable)
    assert all(p.residual <= 1e-6 for p in unstable)


def test_imaginary_sweep_finds_unstable_pair_without_dense_check(cubic_system, monkeypatch):
    monkeypatch.setattr(linearization, "DENSE_CHECK_LIMIT", 0)
    report = discrete_spectrum(cubic_system)
    assert any(abs(v.real) < 1e-6 and v.imag > 1e-2 for v in report.violations)
    assert not report.h9_passed


def test_spectrum_is_reproducible(cubic_system):
    again = discrete_spectrum(cubic_system)
    assert [p.value for p in again.eigenpairs] == [p.value for p in cubic_system.spectrum.eigenpairs]
    assert again.to_dict() == cubic_system.spectrum.to_dict()


def test_free_operator_has_empty_gap(coarse_grid, monkeypatch):
    shifts = []
    collect = linearization._collect

    def counting(matrix, shift, *args):
        shifts.append(shift)
        return collect(matrix, shift, *args)

    monkeypatch.setattr(linearization, "_collect", counting)
    zeros = np.zeros(coarse_grid.points)
    state = GroundState(NonlinearitySpec.linear(), coarse_grid, 1.0, zeros, zeros, zeros, 0.0)
    system = linearize(state, require_mode=False)
    assert len(shifts) >= len(linearization.SWEEP_FRACTIONS) + len(linearization.IMAGINARY_SWEEP)
    report = system.spectrum
    assert report.eigenpairs == []
    assert report.kernel_count == 0
    assert report.threshold_distance == float("inf")
    assert not system.has_mode
    assert not report.h7_passed
    with pytest.raises(EigensolverError):
        system.require_mode()


def test_kernel_multiplicity_confirmed_by_chain(cq_system):
    report = cq_system.spectrum
    assert report.kernel_eigenvectors in (1, 2)
    assert report.kernel_chain_residual <= 1e-6
    assert report.kernel_count == 2
    assert report.h9_passed


def test_broken_kernel_chain_is_not_reported_as_double(cq_state):
    broken = replace(cq_state, d_omega=np.zeros_like(cq_state.d_omega))
    report = linearize(broken, require_mode=False).spectrum
    assert report.kernel_chain_residual > 1e-3
    assert report.kernel_count == report.kernel_eigenvectors
    assert report.inconclusive
    assert not report.h9_passed


@pytest.mark.parametrize("omega,lam,order", [(1.0, 0.4, 2), (1.0, 0.7, 1), (0.8, 0.25, 3)])
def test_resonance_order(omega, lam, order):
    assert resonance_order(omega, lam) == order


def test_resonant_ratio_rejected():
    with pytest.raises(ResonantRatioError):
        resonance_order(1.0, 0.5)


def test_internal_mode_normalisation(cq_system):
    xi = cq_system.xi
    assert cq_system.inner(xi, sigma3(xi)).real == pytest.approx(1.0)
    residual = cq_system.apply(xi) - cq_system.lam * xi
    assert cq_system.norm(residual) <= 1e-8
    assert cq_system.spectrum.h7_passed


def test_mode_order_brackets_frequency(cq_system):
    N, lam, omega = cq_system.N, cq_system.lam, cq_system.omega
    assert N * lam < omega < (N + 1) * lam


def test_conjugate_mode(cq_system):
    partner = sigma1(cq_system.xi)
    residual = cq_system.apply(partner) + cq_system.lam * partner
    assert cq_system.norm(residual) <= 1e-8


def test_continuous_projection(cq_system):
    F = _random_spinor(cq_system.grid, 4)
    projected = cq_system.project_continuous(F)
    again = cq_system.project_continuous(projected)
    assert cq_system.norm(again - projected) <= 1e-10 * cq_system.norm(projected)
    assert np.max(np.abs(cq_system.discrete_coordinates(projected))) <= 1e-10 * cq_system.norm(F)
    for basis_vector in cq_system.discrete_basis():
        assert cq_system.norm(cq_system.project_continuous(basis_vector)) <= 1e-8


def test_discrete_coordinates_of_mode(cq_system):
    coordinates = cq_system.discrete_coordinates(cq_system.xi)
    assert np.allclose(coordinates, [0, 0, 1, 0], atol=1e-10)
    assert cq_system.gram_condition < 1e8


def test_mode_derivative_keeps_normalisation(cq_system):
    # d/domega <xi, sigma3 xi> = 2 <d xi, sigma3 xi> = 0
    assert abs(cq_system.inner(cq_system.d_xi, sigma3(cq_system.xi))) <= 1e-8
    assert np.isfinite(cq_system.d_lam)


@pytest.mark.parametrize("seed", [5, 6, 7])
def test_energy_positive_on_continuous_subspace(cq_system, seed):
    F = cq_system.project_continuous(_random_spinor(cq_system.grid, seed))
    assert cq_system.quadratic_form(F) > 0.0


@pytest.mark.slow
def test_internal_mode_stable_under_refinement(cubic_quintic, cq_system):
    fine = linearize(solve_ground_state(cubic_quintic, cq_system.omega, RadialGrid(3, 30.0, 2400)))
    assert fine.lam == pytest.approx(cq_system.lam, rel=1e-3)
    assert fine.N == cq_system.N
