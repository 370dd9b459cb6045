from types import SimpleNamespace

import numpy as np
import pytest

from solitonlab.physics.fgr import (VERDICT_DEGENERATE, VERDICT_FAILED, VERDICT_PASSED, FgrParameters, FgrReport,
                                    GammaScan, compute_gamma, gamma_at, noise_floor)
from solitonlab.physics.normal_form import build_sources
from solitonlab.shared.config import ConfigLoader
from solitonlab.shared.errors import ChannelError, NumericalError


def _report(gamma, floor=1e-8, threshold=1e-6):
    return FgrReport(omega=0.8, lam=0.5, N=1, gamma_resolvent=gamma, noise_floor=floor, threshold=threshold)


def test_report_verdicts():
    assert _report(1e-3).verdict == VERDICT_PASSED
    assert _report(-1e-3).verdict == VERDICT_PASSED
    assert _report(1e-7).verdict == VERDICT_FAILED
    assert _report(1e-9).verdict == VERDICT_DEGENERATE


def test_report_signs():
    assert _report(1e-3).sign == 1
    assert _report(1e-3).predicted_damping_sign == -1
    assert _report(-1e-3).predicted_damping_sign == 1
    assert _report(1e-9).sign == 0


def test_report_serialises_verdict():
    data = _report(2e-3).to_dict()
    assert data['verdict'] == VERDICT_PASSED
    assert data['gamma_resolvent'] == 2e-3
    assert data['predicted_damping_sign'] == -1


def _row(omega, gamma, verdict=VERDICT_PASSED):
    return {'omega': omega, 'lam': 0.5, 'N': 1, 'gamma_resolvent': gamma, 'gamma_delta': gamma,
            'cross_method_error': 0.0, 'verdict': verdict, 'sign': int(np.sign(gamma))}


def test_scan_infimum_and_sign_changes():
    scan = GammaScan(rows=[_row(0.7, 2e-3), _row(0.75, -1e-3), _row(0.8, 5e-3)], threshold=1e-6)
    assert scan.infimum == pytest.approx(1e-3)
    assert scan.passed
    assert scan.sign_changes == 2


def test_scan_with_failed_point_does_not_pass():
    scan = GammaScan(rows=[_row(0.7, 2e-3), {'omega': 0.75, 'error': 'EigensolverError: no mode'}], threshold=1e-6)
    assert not scan.passed
    assert scan.summary()['failed_points'] == [{'omega': 0.75, 'error': 'EigensolverError: no mode'}]
    table = scan.table()
    assert table.shape == (2, 7)
    assert table[0, 6] == 1
    assert table[1, 6] == -1
    assert np.isnan(table[1, 3])


def test_empty_scan():
    scan = GammaScan(threshold=1e-6)
    assert not scan.passed
    assert np.isnan(scan.infimum)


def test_noise_floor_scales_with_fraction():
    grid = SimpleNamespace(weights=np.full(4, 0.5))
    system = SimpleNamespace(grid=grid)
    source = np.ones((2, 4))
    assert noise_floor(system, source, -2 * source, 1e-3) == pytest.approx(1e-3 * 0.5 * 16)


def test_channel_precondition():
    system = SimpleNamespace(omega=1.0, lam=0.5)
    package = SimpleNamespace(resonant_frequency=1.0 + 1e-4)
    with pytest.raises(ChannelError, match="below channel threshold"):
        compute_gamma(system, package, FgrParameters(resonance_tol=1e-3))


def test_zero_source_is_degenerate():
    system = SimpleNamespace(omega=1.0, lam=0.75)
    package = SimpleNamespace(resonant_frequency=1.5, resonant_source=np.zeros((2, 8)), N=1,
                              duals=SimpleNamespace(resonant=np.ones((2, 8))))
    report = compute_gamma(system, package)
    assert report.gamma_resolvent == 0.0
    assert report.verdict == VERDICT_DEGENERATE
    assert report.sign == 0


def test_parameters_from_config():
    config = ConfigLoader().load(None, ["resolvent.method=eps_extrapolation", "fgr.threshold=1e-5"])
    parameters = FgrParameters.from_config(config)
    assert parameters.method == "eps_extrapolation"
    assert parameters.threshold == 1e-5
    assert parameters.continuum_radius == config.continuum.radius


@pytest.mark.slow
def test_gamma_methods_agree(cq_system):
    try:
        package = build_sources(cq_system)
    except NumericalError as e:
        pytest.skip(f"normal form unavailable for this mode: {e}")
    report = compute_gamma(cq_system, package, FgrParameters(cross_check=True))
    assert report.cross_method_error <= 0.05
    assert report.alternate_method_error <= 0.05
    again = gamma_at(cq_system.state, FgrParameters(cross_check=False))
    assert again.gamma_resolvent == pytest.approx(report.gamma_resolvent, rel=1e-8)
