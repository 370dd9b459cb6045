# Soliton Lab - Config Loader
# INI run-configuration loading, overrides and rendering

import configparser
import io
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from solitonlab.shared.errors import ConfigError

from .settings import RunConfig

logger = logging.getLogger(__name__)


class ConfigLoader:
    """Loads run configurations from INI files."""

    def __init__(self, default_config_dir: Optional[Path] = None):
        """
        Initialize the config loader.

        Args:
            default_config_dir: Directory with bundled configs. Defaults to
                solitonlab/resources/default_configs/
        """
        self.default_config_dir = default_config_dir or self._get_default_config_dir()

    def _get_default_config_dir(self) -> Path:
        """Get the default configuration directory (bundled with the package)."""
        return Path(__file__).parent.parent.parent / 'resources' / 'default_configs'

    def default_config_path(self, name: str = 'reference') -> Path:
        """Path of a bundled config by stem name."""
        return self.default_config_dir / f'{name}.ini'

    def list_bundled(self) -> List[str]:
        """Names of all bundled configs."""
        return sorted(p.stem for p in self.default_config_dir.glob('*.ini'))

    def _read_ini(self, path: Path) -> Dict[str, Dict[str, str]]:
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=('#', ';'))
        try:
            parser.read(path, encoding='utf-8')
        except configparser.Error as e:
            raise ConfigError(f"cannot parse {path}: {e}")
        return {section: dict(parser[section]) for section in parser.sections()}

    def load(self, path: Optional[Path] = None, overrides: Sequence[str] = ()) -> RunConfig:
        """
        Load a run configuration.

        Args:
            path: INI file; the bundled reference config when None
            overrides: Strings of the form "section.key=value"

        Returns:
            Validated RunConfig
        """
        path = Path(path) if path is not None else self.default_config_path()
        data = self._read_ini(path)
        for item in overrides:
            self._apply_override(data, item)
        config = RunConfig.from_dict(data)
        logger.debug("loaded config %s (hash %s)", path, config.config_hash())
        return config

    @staticmethod
    def _apply_override(data: Dict[str, Dict[str, str]], item: str):
        if '=' not in item or '.' not in item.split('=', 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        target, value = item.split('=', 1)
        section, key = target.strip().split('.', 1)
        data.setdefault(section, {})[key] = value.strip()

    @staticmethod
    def render(config: RunConfig) -> str:
        """Render the complete effective config as INI text."""
        parser = configparser.ConfigParser(interpolation=None)
        for section, values in config.to_dict().items():
            parser[section] = {k: repr(v) if isinstance(v, float) else str(v) for k, v in values.items()}
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()

    def save(self, config: RunConfig, path: Path):
        """Write a config to disk in the same format it is read from."""
        Path(path).write_text(self.render(config), encoding='utf-8')
