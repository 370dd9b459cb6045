# Soliton Lab - Commands
# End-to-end pipelines behind the CLI subcommands

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from solitonlab.physics import dynamics, tracker
from solitonlab.physics.fgr import FgrParameters, VERDICT_PASSED, compute_gamma, gamma_scan
from solitonlab.physics.ground_state import (GroundState, GroundStateBranch, check_H5, continue_branch,
                                             decay_rate, solve_ground_state)
from solitonlab.physics.linearization import LinearizedSystem, linearize
from solitonlab.physics.model import NonlinearitySpec, RadialGrid
from solitonlab.physics.normal_form import build_sources
from solitonlab.shared.config import RunConfig
from solitonlab.shared.errors import (EXIT_HYPOTHESIS_FAILED, EXIT_OK, FitUnreliableError, NumericalError,
                                      SolitonLabError, TubeExitError)
from solitonlab.shared.store import (ArtifactStore, Provenance, SnapshotHeader, read_snapshots,
                                     write_snapshots)

from .report import Verdict, collate, render_markdown

logger = logging.getLogger(__name__)

GROUND_STATE_JSON = 'ground_state.json'
BRANCH_CSV = 'branch.csv'
PROFILE_CSV = 'profile.csv'
SPECTRUM_JSON = 'spectrum.json'
FGR_JSON = 'fgr.json'
SCAN_CSV = 'gamma_scan.csv'
SIMULATE_JSON = 'simulate.json'
TRAJECTORY_CSV = 'trajectory.csv'
SNAPSHOTS = 'trajectory.snap'
TRACK_JSON = 'track.json'
TRACK_CSV = 'track.csv'
REPORT_JSON = 'report.json'
REPORT_MD = 'report.md'

MASS_DRIFT_LIMIT = 1e-8
ENERGY_DRIFT_LIMIT = 1e-6
INTEGRAL_RATIO_TOLERANCE = 0.05
RADIATION_DECAY_LIMIT = 0.2
GAMMA_AGREEMENT = 0.25
EXPONENT_AGREEMENT = 0.3
OMEGA_RATIO_FACTOR = 2.0


@dataclass
class CommandResult:
    name: str
    verdicts: List[Verdict] = field(default_factory=list)
    payload: Dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        if any(v.passed is False for v in self.verdicts):
            return EXIT_HYPOTHESIS_FAILED
        return EXIT_OK


class Pipeline:
    """Runs the experiment commands for one configuration inside one output directory."""

    def __init__(self, config: RunConfig, out: Optional[Path] = None, jobs: int = 1):
        """
        Initialize the pipeline.

        Args:
            config: Validated run configuration
            out: Output directory; defaults to <output.directory>/<config hash>
            jobs: Worker processes for omega scans
        """
        self.config = config
        self.jobs = max(1, int(jobs))
        self.spec = NonlinearitySpec.from_dict(config.nonlinearity.to_dict())
        self.grid = RadialGrid(config.grid.dimension, config.grid.radius, config.grid.points)
        self.spec.validate(self.grid.dimension)
        self.provenance = Provenance(config.config_hash(), config.grid_hash())
        directory = Path(out) if out is not None else Path(config.output.directory) / self.provenance.config_hash
        self.store = ArtifactStore(directory, self.provenance)
        self.fgr_parameters = FgrParameters.from_config(config)
        self._state: Optional[GroundState] = None
        self._system: Optional[LinearizedSystem] = None

    @property
    def omega(self) -> float:
        return self.config.branch.omega

    def omegas(self) -> np.ndarray:
        b = self.config.branch
        return np.linspace(b.omega_min, b.omega_max, b.omega_count)

    # --- shared upstream objects ---

    def _require(self, name: str, producer):
        """Run the producing command when an upstream artifact is missing."""
        if not self.store.exists(name):
            logger.info("%s missing; running %s first", name, producer.__name__)
            producer()

    def reference_state(self) -> GroundState:
        if self._state is None:
            self._require(PROFILE_CSV, self.ground_state)
            if self._state is None:
                profile = self.store.read_csv(PROFILE_CSV, "rerun `solitonlab ground-state`")
                self._state = solve_ground_state(self.spec, self.omega, self.grid, profile['phi'],
                                                 self.config.tolerances.residual)
        return self._state

    def reference_system(self) -> LinearizedSystem:
        if self._system is None:
            tol = self.config.tolerances
            self._system = linearize(self.reference_state(), tol.eigen, tol.kernel, tol.resonance,
                                     require_mode=False)
        return self._system

    def _branch(self) -> GroundStateBranch:
        return continue_branch(self.spec, self.omegas(), self.grid, self.config.tolerances.residual)

    # --- commands ---

    def ground_state(self) -> CommandResult:
        """Branch continuation and the (H3), (H4), (H5) checks."""
        tol = self.config.tolerances
        branch = self._branch()
        state = solve_ground_state(self.spec, self.omega, self.grid, branch.state_at(self.omega).phi, tol.residual)
        self._state = state
        h5 = check_H5(self.spec, state.phi, self.grid, self.omega, tol.eigen)
        rate = decay_rate(state)
        verdicts = [
            Verdict("H3", state.peak > 0,
                    f"phi(0)={state.peak:.6g}, decay rate {rate:.4g} vs sqrt(omega)={math.sqrt(self.omega):.4g}"),
            Verdict("H4", branch.h4_passed,
                    f"min dM/domega={float(np.min(branch.slopes)):.4g} over {len(branch.states)} samples"
                    + (f", truncated at omega={branch.truncated_at:g}" if branch.truncated_at is not None else "")),
            Verdict("H5", h5.passed, f"{h5.negative_count} negative L+ eigenvalue(s), kernel gap {h5.kernel_gap:.3g}"),
        ]
        payload = {
            'state': state.summary(),
            'decay_rate': rate,
            'branch': branch.to_dict(),
            'h5': h5.to_dict(),
            'verdicts': [v.to_dict() for v in verdicts],
        }
        self.store.write_json(GROUND_STATE_JSON, payload)
        self.store.write_csv(BRANCH_CSV, np.column_stack([branch.omegas, branch.masses, branch.slopes,
                                                          branch.slopes_fd,
                                                          [s.peak for s in branch.states]]),
                             ['omega', 'mass', 'mass_slope', 'mass_slope_fd', 'phi0'])
        self.store.write_csv(PROFILE_CSV, np.column_stack([self.grid.nodes, state.phi, state.d_omega,
                                                           state.d2_omega]),
                             ['r', 'phi', 'd_omega_phi', 'd2_omega_phi'])
        return CommandResult('ground-state', verdicts, payload)

    def spectrum(self) -> CommandResult:
        """Discrete gap spectrum, (H7) and gap-only (H9)."""
        system = self.reference_system()
        report = system.spectrum
        kernel, chain = system.kernel_residuals()
        detail_h7 = (f"lambda={system.lam:.8g}, N={system.N}, omega/lambda={self.omega / system.lam:.6f}"
                     if system.has_mode else "no internal mode in (0, omega)")
        verdicts = [
            Verdict("H7", report.h7_passed and system.has_mode, detail_h7),
            Verdict("H9", report.h9_passed,
                    f"kernel multiplicity {report.kernel_count} ({report.kernel_eigenvectors} eigenvector(s)), "
                    f"{len(report.violations)} extra eigenvalue(s)"
                    + (", inconclusive" if report.inconclusive else "")),
        ]
        payload = {
            'system': system.summary(),
            'kernel_residual': kernel,
            'kernel_chain_residual': chain,
            'verdicts': [v.to_dict() for v in verdicts],
        }
        self.store.write_json(SPECTRUM_JSON, payload)
        return CommandResult('spectrum', verdicts, payload)

    def fgr(self) -> CommandResult:
        """Gamma at the reference frequency plus the scan along the branch."""
        system = self.reference_system()
        system.require_mode()
        params = self.fgr_parameters
        package = build_sources(system, N=params.order, continuum_radius=params.continuum_radius,
                                method=params.method, eps_fraction=params.eps_fraction,
                                resonance_tol=params.resonance_tol, singular_tol=params.kernel_tol)
        report = compute_gamma(system, package, params)
        scan = gamma_scan(self.spec, self._branch(), params, self.jobs)
        verdicts = [Verdict("FGR", report.verdict == VERDICT_PASSED and scan.passed,
                            f"Gamma={report.gamma_resolvent:.4e} ({report.verdict}), "
                            f"inf |Gamma| over scan={scan.infimum:.3e}, sign changes {scan.sign_changes}")]
        payload = {
            'report': report.to_dict(),
            'normal_form': package.manifest(),
            'scan': scan.summary(),
            'verdicts': [v.to_dict() for v in verdicts],
        }
        self.store.write_json(FGR_JSON, payload)
        self.store.write_csv(SCAN_CSV, scan.table(), ['omega', 'lambda', 'N', 'gamma_resolvent', 'gamma_delta',
                                                      'cross_method_error', 'verdict_code'])
        return CommandResult('fgr', verdicts, payload)

    def _evolve(self, z0: float) -> dynamics.Trajectory:
        system = self.reference_system()
        u0 = dynamics.make_initial_data(system, z0)
        config = dynamics.EvolutionConfig.from_settings(self.config.evolution)
        return dynamics.evolve(self.spec, u0, self.grid, config)

    def simulate(self) -> CommandResult:
        """Evolve the internal-mode excitation of the reference ground state."""
        trajectory = self._evolve(self.config.tracker.z0)
        summary = dynamics.summary(trajectory)
        verdicts = []
        if self.config.evolution.absorber_width == 0.0:
            verdicts.append(Verdict("conservation",
                                    summary['mass_drift'] <= MASS_DRIFT_LIMIT
                                    and summary['energy_drift'] <= ENERGY_DRIFT_LIMIT,
                                    f"mass drift {summary['mass_drift']:.2e}, energy drift {summary['energy_drift']:.2e}"))
        payload = {'summary': summary, 'verdicts': [v.to_dict() for v in verdicts]}
        header = SnapshotHeader(self.grid.dimension, self.grid.points, len(trajectory), self.grid.radius,
                                self.omega, trajectory.dt, self.provenance.grid_hash)
        self.store.directory.mkdir(parents=True, exist_ok=True)
        write_snapshots(self.store.path(SNAPSHOTS), header, trajectory.times, trajectory.snapshots)
        self.store.write_csv(TRAJECTORY_CSV, trajectory.diagnostics_table(),
                             ['t', 'mass', 'interior_mass', 'energy', 'origin_modulus', 'max_modulus'])
        self.store.write_json(SIMULATE_JSON, payload)
        return CommandResult('simulate', verdicts, payload)

    def _load_trajectory(self) -> dynamics.Trajectory:
        self._require(SIMULATE_JSON, self.simulate)
        self.store.read_json(SIMULATE_JSON, "rerun `solitonlab simulate`")
        snapshots = read_snapshots(self.store.path(SNAPSHOTS), self.provenance.grid_hash)
        trajectory = dynamics.Trajectory(grid=self.grid, dt=snapshots.header.dt, scheme=self.config.evolution.scheme)
        trajectory.times = snapshots.times.tolist()
        trajectory.snapshots = list(snapshots.fields)
        return trajectory

    def _track(self, trajectory: dynamics.Trajectory):
        system = self.reference_system()
        tol = self.config.tolerances
        family = tracker.SystemFamily(system, tol.residual, tol.resonance)
        states, diagnostics = tracker.track(trajectory, family, self.config.tracker.stride,
                                            self.config.tracker.weight_exponent)
        return family, states, diagnostics

    def _gamma_reference(self) -> Optional[float]:
        if not self.store.current(FGR_JSON):
            return None
        return self.store.read_json(FGR_JSON)['report']['gamma_resolvent']

    def track(self, bias_check: bool = False) -> CommandResult:
        """Modulation tracking, damping fit and the dynamical verdicts."""
        trajectory = self._load_trajectory()
        try:
            family, states, diagnostics = self._track(trajectory)
        except TubeExitError as e:
            verdicts = [Verdict("orbital-stability", False, f"left the tube at t={e.time:g}: {e}")]
            payload = {'tube_exit_time': e.time, 'verdicts': [v.to_dict() for v in verdicts]}
            self.store.write_json(TRACK_JSON, payload)
            return CommandResult('track', verdicts, payload)

        payload: Dict = {}
        try:
            diagnostics.fit = tracker.fit_damping(diagnostics)
            payload['fit'] = diagnostics.fit.to_dict()
            payload['modulation_consistency'] = tracker.modulation_consistency(states, family,
                                                                               diagnostics.fit.window)
        except FitUnreliableError as e:
            logger.warning("%s", e)
            payload['fit_error'] = str(e)
        except NumericalError as e:
            logger.warning("modulation consistency check failed: %s", e)
            payload['consistency_error'] = str(e)

        ratios = diagnostics.running_integral_ratios()
        increments = diagnostics.omega_increments()
        decay = diagnostics.radiation_decay_ratio()
        z_start, z_end = abs(diagnostics.z[0]), abs(diagnostics.z[-1])
        verdicts = [
            Verdict("integral-bound", bool(ratios) and abs(ratios[0] - 1.0) <= INTEGRAL_RATIO_TOLERANCE
                    and z_end < 0.5 * z_start,
                    f"I(T)/I(T/2)={ratios[0] if ratios else math.nan:.4f}, |z(T)|/|z(0)|="
                    f"{z_end / z_start if z_start else math.nan:.3f}"),
            Verdict("omega-convergence", diagnostics.omega_converges(OMEGA_RATIO_FACTOR),
                    "increments " + ", ".join(f"{x:.2e}" for x in increments) + "; ratios "
                    + ", ".join(f"{x:.3f}" for x in diagnostics.omega_increment_ratios())),
            Verdict("radiation-decay", decay < RADIATION_DECAY_LIMIT, f"late/peak={decay:.3f}"),
            Verdict("orbital-stability", not diagnostics.non_unique_times,
                    f"max excursion {diagnostics.max_excursion():.3e}, "
                    f"{len(diagnostics.non_unique_times)} non-unique decomposition(s)"),
        ]
        gamma = self._gamma_reference()
        if diagnostics.fit is not None and gamma is not None and gamma != 0.0:
            fit = diagnostics.fit
            relative = abs(abs(fit.gamma_fit) - abs(gamma)) / abs(gamma)
            payload['gamma_comparison'] = {'gamma_resolvent': gamma, 'relative_difference': relative}
            verdicts.append(Verdict("damping-vs-theory",
                                    relative <= GAMMA_AGREEMENT and fit.exponent_error <= EXPONENT_AGREEMENT,
                                    f"Gamma_fit={fit.gamma_fit:.4e} vs {gamma:.4e} ({relative:.1%}), "
                                    f"q={fit.exponent_fit:.3f}"))
        if bias_check:
            payload['bias_check'] = self._bias_check(diagnostics, gamma)
        payload['diagnostics'] = diagnostics.summary()
        payload['verdicts'] = [v.to_dict() for v in verdicts]
        self.store.write_json(TRACK_JSON, payload)
        self.store.write_csv(TRACK_CSV, diagnostics.table(), tracker.TrajectoryDiagnostics.columns())
        return CommandResult('track', verdicts, payload)

    def _bias_check(self, diagnostics: tracker.TrajectoryDiagnostics, gamma: Optional[float]) -> Dict:
        """Repeat simulate + track at half amplitude; the fit should move toward the resolvent value."""
        out: Dict = {'z0': 0.5 * self.config.tracker.z0}
        try:
            _, _, half = self._track(self._evolve(0.5 * self.config.tracker.z0))
            half_fit = tracker.fit_damping(half)
        except SolitonLabError as e:
            out['error'] = str(e)
            return out
        out['gamma_fit'] = half_fit.gamma_fit
        if gamma is not None and diagnostics.fit is not None:
            out['bias_shrinks'] = abs(half_fit.gamma_fit - gamma) < abs(diagnostics.fit.gamma_fit - gamma)
        return out

    def report(self) -> CommandResult:
        """Collate every command's verdicts into report.md and report.json."""
        found: Dict[str, Verdict] = {}
        scalars: Dict[str, float] = {}
        producers = [(GROUND_STATE_JSON, self.ground_state), (SPECTRUM_JSON, self.spectrum),
                     (FGR_JSON, self.fgr), (TRACK_JSON, self.track)]
        for name, producer in producers:
            try:
                self._require(name, producer)
            except SolitonLabError as e:
                logger.error("%s: %s", producer.__name__, e)
                continue
            data = self.store.read_json(name, f"rerun `solitonlab {producer.__name__.replace('_', '-')}`")
            for item in data.get('verdicts', []):
                verdict = Verdict.from_dict(item)
                found[verdict.key] = verdict
        if self.store.exists(GROUND_STATE_JSON):
            scalars['phi0'] = self.store.read_json(GROUND_STATE_JSON)['state']['phi0']
        if self.store.exists(FGR_JSON):
            fgr = self.store.read_json(FGR_JSON)['report']
            scalars.update(gamma_resolvent=fgr['gamma_resolvent'], lam=fgr['lam'], N=fgr['N'])
        if self.store.exists(TRACK_JSON):
            fit = self.store.read_json(TRACK_JSON).get('fit')
            if fit:
                scalars.update(gamma_fit=fit['gamma_fit'], exponent_fit=fit['exponent_fit'])
        verdicts = collate(found)
        payload = {'verdicts': [v.to_dict() for v in verdicts], 'scalars': scalars}
        self.store.write_json(REPORT_JSON, payload)
        self.store.write_text(REPORT_MD, render_markdown(verdicts, self.provenance, scalars))
        return CommandResult('report', verdicts, payload)
