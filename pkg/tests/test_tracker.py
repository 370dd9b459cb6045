import math

import numpy as np
import pytest

from solitonlab.physics.dynamics import EvolutionConfig, Trajectory, evolve, make_initial_data
from solitonlab.physics.tracker import (SystemFamily, TrajectoryDiagnostics, decompose, fit_damping, h1_norm,
                                        modulation_consistency, synthetic_mode, track, weighted_norm)
from solitonlab.physics.model import lift
from solitonlab.shared.errors import FitUnreliableError, NumericalError, TubeExitError

from .conftest import gaussian


def _diagnostics(times, z, N, omega=None, f_weighted=None):
    count = len(times)
    omega = np.full(count, 0.8) if omega is None else np.asarray(omega)
    f_weighted = np.zeros(count) if f_weighted is None else np.asarray(f_weighted)
    running = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(times) * (np.abs(z[1:]) ** (2 * N + 2)
                                                                      + np.abs(z[:-1]) ** (2 * N + 2)))])
    return TrajectoryDiagnostics(times=np.asarray(times), z=np.asarray(z), omega=omega, gamma=np.zeros(count),
                                 gamma_dot=np.zeros(count), f_h1=np.zeros(count), f_weighted=f_weighted,
                                 running_integral=running, N=N, weight_exponent=3.0, omega0=float(omega[0]))


@pytest.mark.parametrize("N", [1, 2])
def test_fit_recovers_synthetic_damping(N):
    times = np.linspace(0.0, 200.0, 400)
    z = synthetic_mode(0.3, 0.7, 0.05, N, times)
    fit = fit_damping(_diagnostics(times, z, N))
    assert fit.gamma_fit == pytest.approx(0.05, rel=2e-2)
    assert fit.exponent_fit == pytest.approx(2 * N + 2, abs=0.1)
    assert fit.damping_sign == -1
    assert fit.confidence >= 0
    assert fit.to_dict()['empirical_damping_sign'] == -1


def test_fit_of_growing_mode_has_negative_rate():
    times = np.linspace(0.0, 50.0, 200)
    z = synthetic_mode(0.1, 0.7, -0.5, 1, times)
    fit = fit_damping(_diagnostics(times, z, 1))
    assert fit.gamma_fit == pytest.approx(-0.5, rel=2e-2)
    assert fit.damping_sign == 1


def test_fit_with_explicit_window():
    times = np.linspace(0.0, 200.0, 400)
    z = synthetic_mode(0.3, 0.7, 0.05, 1, times)
    fit = fit_damping(_diagnostics(times, z, 1), window=(100.0, 200.0))
    assert fit.window == (100.0, 200.0)
    assert fit.samples == int(np.sum(times >= 100.0))


def test_fit_without_signal():
    times = np.linspace(0.0, 10.0, 100)
    with pytest.raises(FitUnreliableError, match="no signal"):
        fit_damping(_diagnostics(times, np.zeros(100, dtype=complex), 1))


def test_fit_needs_enough_samples():
    times = np.linspace(0.0, 10.0, 40)
    with pytest.raises(FitUnreliableError, match="window shorter"):
        fit_damping(_diagnostics(times, synthetic_mode(0.3, 0.7, 0.05, 1, times), 1))


def test_fit_rejects_non_power_law():
    times = np.linspace(0.0, 100.0, 300)
    z = 0.3 * (1.0 + 0.5 * np.sin(0.3 * times)) * np.exp(-0.7j * times)
    with pytest.raises(FitUnreliableError, match="pure-power residual"):
        fit_damping(_diagnostics(times, z, 1))


def test_running_integral_saturates_for_damped_mode():
    times = np.linspace(0.0, 400.0, 4001)
    diagnostics = _diagnostics(times, synthetic_mode(0.3, 0.7, 0.5, 1, times), 1)
    ratios = diagnostics.running_integral_ratios()
    assert len(ratios) == 3
    assert ratios[0] < 1.05
    assert ratios[0] < ratios[-1]


def test_omega_increments_and_excursion():
    times = np.linspace(0.0, 8.0, 9)
    omega = 0.8 + 0.01 * (1.0 - 1.0 / (1.0 + times))
    z = np.full(9, 0.02 + 0j)
    diagnostics = _diagnostics(times, z, 1, omega=omega)
    increments = diagnostics.omega_increments()
    assert increments[0] < increments[1] < increments[2]
    assert diagnostics.max_excursion() == pytest.approx(0.02 + abs(omega[-1] - omega[0]))


@pytest.mark.parametrize("N", [1, 2])
def test_omega_converges_at_the_damping_rate(N):
    times = np.linspace(0.0, 400.0, 4001)
    omega = 0.8 + 0.01 * (1.0 + times) ** (-1.0 / N)
    diagnostics = _diagnostics(times, np.full(4001, 0.02 + 0j), N, omega=omega)
    expected = 2.0 ** (-1.0 / N)
    assert diagnostics.omega_increment_ratios() == pytest.approx([expected] * 2, rel=5e-2)
    assert diagnostics.omega_converges()


@pytest.mark.parametrize("omega_of_t", [
    lambda t: 0.8 + 1e-3 * t,
    lambda t: 0.8 + 1e-3 * np.sin(t),
    lambda t: 0.8 + 1e-3 * np.sqrt(t),
])
def test_omega_drift_is_not_convergence(omega_of_t):
    times = np.linspace(0.0, 400.0, 4001)
    diagnostics = _diagnostics(times, np.full(4001, 0.02 + 0j), 1, omega=omega_of_t(times))
    assert not diagnostics.omega_converges()


def test_constant_omega_counts_as_converged():
    times = np.linspace(0.0, 400.0, 4001)
    assert _diagnostics(times, np.full(4001, 0.02 + 0j), 1).omega_converges()


def test_radiation_decay_ratio():
    times = np.linspace(0.0, 10.0, 101)
    weighted = np.exp(-((times - 2.0) ** 2))
    diagnostics = _diagnostics(times, np.full(101, 0.01 + 0j), 1, f_weighted=weighted)
    assert diagnostics.radiation_decay_ratio() < 1e-10
    assert _diagnostics(times, np.full(101, 0.01 + 0j), 1).radiation_decay_ratio() == 0.0


def test_columns_match_table():
    times = np.linspace(0.0, 1.0, 5)
    diagnostics = _diagnostics(times, np.full(5, 0.01 + 0j), 1)
    assert diagnostics.table().shape == (5, len(TrajectoryDiagnostics.columns()))


def test_norms_of_gaussian(coarse_grid):
    f = lift(gaussian(coarse_grid).astype(complex))
    l2 = math.sqrt(coarse_grid.integrate(gaussian(coarse_grid) ** 2))
    assert h1_norm(coarse_grid, f) > l2
    assert weighted_norm(coarse_grid, f, 0.0) == pytest.approx(l2)
    assert weighted_norm(coarse_grid, f, 3.0) < l2


@pytest.fixture(scope="module")
def family(cq_system):
    return SystemFamily(cq_system)


def test_ground_state_decomposes_to_itself(family, cq_system):
    state = decompose(cq_system.state.phi.astype(complex), family, (cq_system.omega, 0.0))
    assert state.omega == cq_system.omega
    assert abs(state.z) <= 1e-10
    assert state.newton_iterations == 0
    assert state.orthogonality_residual <= 1e-10


def test_mode_amplitude_recovered(family, cq_system):
    u0 = make_initial_data(cq_system, 0.05)
    state = decompose(u0, family, (cq_system.omega, 0.0))
    assert state.z == pytest.approx(0.05, abs=1e-8)
    assert state.omega == pytest.approx(cq_system.omega, abs=1e-10)
    assert cq_system.norm(state.f) <= 1e-8


def test_gauge_covariance(family, cq_system):
    u0 = make_initial_data(cq_system, 0.04 + 0.02j)
    base = decompose(u0, family, (cq_system.omega, 0.0))
    rotated = decompose(np.exp(0.7j) * u0, family, (cq_system.omega, 0.7))
    assert rotated.theta == pytest.approx(base.theta + 0.7, abs=1e-9)
    assert rotated.z == pytest.approx(base.z, abs=1e-9)
    assert rotated.omega == pytest.approx(base.omega, abs=1e-9)


def test_decomposition_is_locally_unique(family, cq_system):
    u0 = make_initial_data(cq_system, 0.03)
    state = decompose(u0, family, (cq_system.omega, 0.0), check_uniqueness=True)
    assert state.unique


def test_newton_finds_perturbed_frequency(family, cq_system):
    nearby = family.at(cq_system.omega + 0.01)
    u = np.exp(0.3j) * nearby.state.phi
    state = decompose(u, family, (cq_system.omega, 0.25))
    assert state.omega == pytest.approx(cq_system.omega + 0.01, abs=1e-9)
    assert state.theta == pytest.approx(0.3, abs=1e-9)
    assert abs(state.z) <= 1e-8


def test_tube_exit_carries_time(family, cq_system):
    with pytest.raises(TubeExitError) as excinfo:
        decompose(3.0 * cq_system.state.phi.astype(complex), family, (cq_system.omega, 0.0), time=12.5)
    assert excinfo.value.time == 12.5


def test_family_cache(family, cq_system):
    assert family.at(cq_system.omega) is cq_system
    nearby = family.at(cq_system.omega - 0.005)
    assert family.at(cq_system.omega - 0.005) is nearby
    assert nearby.lam == pytest.approx(cq_system.lam + cq_system.d_lam * (-0.005), abs=1e-4)
    assert nearby.N == cq_system.N


def test_standing_wave_track(family, cq_system):
    grid = cq_system.grid
    trajectory = Trajectory(grid=grid, dt=0.1, scheme="exact")
    for k in range(6):
        t = 0.5 * k
        trajectory.times.append(t)
        trajectory.snapshots.append(cq_system.state.phi * np.exp(1j * cq_system.omega * t))
    states, diagnostics = track(trajectory, family)
    assert len(states) == 6
    assert all(s.unique for s in states)
    assert diagnostics.non_unique_times == []
    assert np.allclose([s.gamma for s in states], 0.0, atol=1e-9)
    assert np.max(np.abs(diagnostics.z)) <= 1e-9
    with pytest.raises(NumericalError):
        modulation_consistency(states[:2], family)


def test_track_can_skip_uniqueness_check(family, cq_system):
    trajectory = Trajectory(grid=cq_system.grid, dt=0.1, scheme="exact")
    trajectory.times.append(0.0)
    trajectory.snapshots.append(make_initial_data(cq_system, 0.03))
    states, diagnostics = track(trajectory, family, check_uniqueness=False)
    assert states[0].unique is None
    assert diagnostics.summary()["non_unique_times"] == []


@pytest.mark.slow
def test_tracked_simulation_is_consistent(family, cq_system):
    config = EvolutionConfig(dt=0.01, final_time=5.0, output_stride=5, absorber_width=0.0)
    trajectory = evolve(cq_system.spec, make_initial_data(cq_system, 0.02), cq_system.grid, config)
    states, diagnostics = track(trajectory, family)
    assert max(s.orthogonality_residual for s in states) <= 1e-8
    assert diagnostics.smooth
    errors = modulation_consistency(states, family)
    assert errors['z_dot'] <= 1e-2
