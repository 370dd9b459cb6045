# Soliton Lab - Settings
# Run configuration dataclasses and schemas

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Optional

from solitonlab.shared.errors import ConfigError

NONLINEARITY_KINDS = ("pure_power", "cubic_quintic", "saturable")
SCHEMES = ("crank_nicolson", "strang_split")
RESOLVENT_METHODS = ("outgoing_bc", "eps_extrapolation")


def _coerce(section: str, key: str, raw: Any, target: type) -> Any:
    """Convert a raw INI string (or an already typed value) to the field type."""
    if isinstance(raw, target) and not isinstance(raw, bool):
        return raw
    try:
        if target is int:
            return int(str(raw).strip())
        if target is float:
            return float(str(raw).strip())
        if target is str:
            return str(raw).strip()
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot read {raw!r} as {target.__name__}")
    raise ConfigError(f"[{section}] {key}: unsupported type {target!r}")


class _Section:
    """Mixin giving each settings dataclass dict conversion with field checks."""
    SECTION = ""

    @classmethod
    def from_dict(cls, data: Dict[str, Any]):
        values = {}
        for f in fields(cls):
            if f.name not in data:
                raise ConfigError(f"missing field [{cls.SECTION}] {f.name}")
            values[f.name] = _coerce(cls.SECTION, f.name, data[f.name], f.type)
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown field(s) in [{cls.SECTION}]: {', '.join(sorted(unknown))}")
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class NonlinearitySettings(_Section):
    """The function beta and its parameters."""
    SECTION = "nonlinearity"
    kind: str
    p: float
    a: float
    b: float
    kappa: float


@dataclass(frozen=True)
class GridSettings(_Section):
    """Radial grid for bound-state computations."""
    SECTION = "grid"
    dimension: int
    radius: float
    points: int


@dataclass(frozen=True)
class ContinuumSettings(_Section):
    """Larger radius used for continuum (limiting absorption) solves."""
    SECTION = "continuum"
    radius: float


@dataclass(frozen=True)
class BranchSettings(_Section):
    SECTION = "branch"
    omega: float
    omega_min: float
    omega_max: float
    omega_count: int


@dataclass(frozen=True)
class NormalFormSettings(_Section):
    SECTION = "normal_form"
    order: str  # "auto" or an integer N

    def resolved_order(self) -> Optional[int]:
        """Return the configured N, or None for automatic detection."""
        if self.order.lower() == "auto":
            return None
        return int(self.order)


@dataclass(frozen=True)
class ResolventSettings(_Section):
    SECTION = "resolvent"
    method: str
    eps_fraction: float


@dataclass(frozen=True)
class FgrSettings(_Section):
    SECTION = "fgr"
    threshold: float
    noise_fraction: float


@dataclass(frozen=True)
class EvolutionSettings(_Section):
    """Time stepping for the full radial NLS."""
    SECTION = "evolution"
    dt: float
    final_time: float
    output_stride: int
    scheme: str
    absorber_width: float
    absorber_strength: float
    fixed_point_sweeps: int
    fixed_point_tol: float


@dataclass(frozen=True)
class TrackerSettings(_Section):
    SECTION = "tracker"
    z0: float
    stride: int
    weight_exponent: float


@dataclass(frozen=True)
class ToleranceSettings(_Section):
    SECTION = "tolerances"
    residual: float
    eigen: float
    resolvent: float
    kernel: float
    resonance: float


@dataclass(frozen=True)
class OutputSettings(_Section):
    SECTION = "output"
    directory: str


_SECTIONS = {
    "nonlinearity": NonlinearitySettings,
    "grid": GridSettings,
    "continuum": ContinuumSettings,
    "branch": BranchSettings,
    "normal_form": NormalFormSettings,
    "resolvent": ResolventSettings,
    "fgr": FgrSettings,
    "evolution": EvolutionSettings,
    "tracker": TrackerSettings,
    "tolerances": ToleranceSettings,
    "output": OutputSettings,
}


@dataclass(frozen=True)
class RunConfig:
    """Complete run configuration; every field comes from the config file."""
    nonlinearity: NonlinearitySettings
    grid: GridSettings
    continuum: ContinuumSettings
    branch: BranchSettings
    normal_form: NormalFormSettings
    resolvent: ResolventSettings
    fgr: FgrSettings
    evolution: EvolutionSettings
    tracker: TrackerSettings
    tolerances: ToleranceSettings
    output: OutputSettings

    @classmethod
    def from_dict(cls, data: Dict[str, Dict[str, Any]]) -> 'RunConfig':
        missing = [name for name in _SECTIONS if name not in data]
        if missing:
            raise ConfigError(f"missing section(s): {', '.join('[' + m + ']' for m in missing)}")
        config = cls(**{name: klass.from_dict(data[name]) for name, klass in _SECTIONS.items()})
        config.validate()
        return config

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {name: getattr(self, name).to_dict() for name in _SECTIONS}

    def validate(self):
        """Check cross-field invariants; raise ConfigError on the first violation."""
        nl, grid = self.nonlinearity, self.grid
        if nl.kind not in NONLINEARITY_KINDS:
            raise ConfigError(f"[nonlinearity] kind: expected one of {NONLINEARITY_KINDS}, got {nl.kind!r}")
        if grid.dimension < 3:
            raise ConfigError("[grid] dimension: must be >= 3")
        if grid.radius <= 0 or grid.points < 16:
            raise ConfigError("[grid] radius/points: radius must be positive and points >= 16")
        if self.continuum.radius < grid.radius:
            raise ConfigError("[continuum] radius: must not be smaller than [grid] radius")
        if not 0 < self.branch.omega_min <= self.branch.omega <= self.branch.omega_max:
            raise ConfigError("[branch] omega: need 0 < omega_min <= omega <= omega_max")
        if self.branch.omega_count < 3:
            raise ConfigError("[branch] omega_count: need at least 3 samples")
        order = self.normal_form.order.lower()
        if order != "auto" and order not in ("1", "2"):
            raise ConfigError("[normal_form] order: 'auto', 1 or 2")
        if self.resolvent.method not in RESOLVENT_METHODS:
            raise ConfigError(f"[resolvent] method: expected one of {RESOLVENT_METHODS}")
        if self.evolution.scheme not in SCHEMES:
            raise ConfigError(f"[evolution] scheme: expected one of {SCHEMES}")
        if not 0.0 <= self.evolution.absorber_width <= 0.25:
            raise ConfigError("[evolution] absorber_width: must lie in [0, 0.25]")
        positive = {
            "[evolution] dt": self.evolution.dt,
            "[evolution] final_time": self.evolution.final_time,
            "[resolvent] eps_fraction": self.resolvent.eps_fraction,
            "[fgr] threshold": self.fgr.threshold,
            "[fgr] noise_fraction": self.fgr.noise_fraction,
            "[tracker] weight_exponent": self.tracker.weight_exponent,
        }
        positive.update({f"[tolerances] {k}": v for k, v in self.tolerances.to_dict().items()})
        for name, value in positive.items():
            if not value > 0:
                raise ConfigError(f"{name}: must be positive")
        if self.evolution.output_stride < 1 or self.tracker.stride < 1:
            raise ConfigError("[evolution] output_stride / [tracker] stride: must be >= 1")

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form, excluding the output location."""
        data = self.to_dict()
        data.pop("output")
        return _digest(data)

    def grid_hash(self) -> str:
        return _digest(self.grid.to_dict())

    def physics_hash(self) -> str:
        """Hash of the inputs that determine ground states and spectra."""
        return _digest({"nonlinearity": self.nonlinearity.to_dict(),
                        "grid": self.grid.to_dict()})


def _digest(data: Dict[str, Any]) -> str:
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
