# Soliton Lab - Artifact Store
# Provenance-stamped JSON summaries and CSV tables for one run directory

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from solitonlab.shared.errors import StaleArtifactError

logger = logging.getLogger(__name__)

PROVENANCE_KEY = 'provenance'


@dataclass(frozen=True)
class Provenance:
    """Hashes stamped on every artifact."""
    config_hash: str
    grid_hash: str

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> 'Provenance':
        return cls(
            config_hash=data.get('config_hash', ''),
            grid_hash=data.get('grid_hash', ''),
        )

    def header(self) -> str:
        return f"config_hash={self.config_hash} grid_hash={self.grid_hash}"

    @classmethod
    def from_header(cls, line: str) -> 'Provenance':
        fields = dict(item.split('=', 1) for item in line.lstrip('# ').split() if '=' in item)
        return cls.from_dict(fields)


def _jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and complex numbers for json.dumps."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {'re': float(value.real), 'im': float(value.imag)}
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else repr(value)
    return value


def dumps(payload: Dict[str, Any]) -> str:
    """Canonical JSON text; identical payloads give identical bytes."""
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True) + '\n'


class ArtifactStore:
    """Reads and writes the artifacts of one run directory."""

    def __init__(self, directory: Path, provenance: Provenance):
        """
        Initialize the store.

        Args:
            directory: Run output directory, created on first write
            provenance: Hashes of the config producing this run
        """
        self.directory = Path(directory)
        self.provenance = provenance

    def path(self, name: str) -> Path:
        return self.directory / name

    def exists(self, name: str) -> bool:
        return self.path(name).exists()

    def _prepare(self, name: str) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        return self.path(name)

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        target = self._prepare(name)
        data = dict(payload)
        data[PROVENANCE_KEY] = self.provenance.to_dict()
        target.write_text(dumps(data), encoding='utf-8')
        logger.info("wrote %s", target)
        return target

    def write_csv(self, name: str, table: np.ndarray, columns: Sequence[str]) -> Path:
        """Comma separated, full precision, provenance on the first header line."""
        target = self._prepare(name)
        table = np.atleast_2d(np.asarray(table, dtype=float))
        if table.size and table.shape[1] != len(columns):
            raise ValueError(f"{name}: {table.shape[1]} columns but {len(columns)} names")
        header = self.provenance.header() + '\n' + ','.join(columns)
        np.savetxt(target, table if table.size else np.empty((0, len(columns))), delimiter=',',
                   fmt='%.17g', header=header)
        logger.info("wrote %s", target)
        return target

    def write_text(self, name: str, text: str) -> Path:
        target = self._prepare(name)
        target.write_text(text, encoding='utf-8')
        logger.info("wrote %s", target)
        return target

    def _check(self, name: str, found: Provenance, remediation: Optional[str]):
        if found.config_hash != self.provenance.config_hash or found.grid_hash != self.provenance.grid_hash:
            hint = remediation or f"delete {self.path(name)} or rerun the producing command"
            raise StaleArtifactError(
                f"stale artifact {name}: produced with config {found.config_hash}/grid {found.grid_hash}, "
                f"current run is {self.provenance.config_hash}/{self.provenance.grid_hash}; {hint}")

    def read_json(self, name: str, remediation: Optional[str] = None) -> Dict[str, Any]:
        """
        Load a JSON artifact after checking its provenance.

        Raises:
            FileNotFoundError: the artifact does not exist
            StaleArtifactError: hashes differ from the current run
        """
        data = json.loads(self.path(name).read_text(encoding='utf-8'))
        self._check(name, Provenance.from_dict(data.get(PROVENANCE_KEY, {})), remediation)
        return data

    def read_csv(self, name: str, remediation: Optional[str] = None) -> Dict[str, np.ndarray]:
        """Load a CSV artifact as a dict of columns."""
        target = self.path(name)
        with open(target, 'r', encoding='utf-8') as f:
            provenance_line = f.readline()
            columns = f.readline().lstrip('# ').strip().split(',')
        self._check(name, Provenance.from_header(provenance_line), remediation)
        table = np.loadtxt(target, delimiter=',', ndmin=2)
        if table.size == 0:
            return {c: np.empty(0) for c in columns}
        return {c: table[:, k] for k, c in enumerate(columns)}

    def current(self, name: str) -> bool:
        """True when the artifact exists and matches this run's hashes."""
        if not self.exists(name):
            return False
        try:
            if name.endswith('.json'):
                self.read_json(name)
            elif name.endswith('.csv'):
                self.read_csv(name)
            return True
        except StaleArtifactError:
            return False

    def listing(self) -> List[str]:
        if not self.directory.exists():
            return []
        return sorted(p.name for p in self.directory.iterdir() if p.is_file())
