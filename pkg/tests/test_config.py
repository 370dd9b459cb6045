import pytest

from solitonlab.shared.config import ConfigLoader, RunConfig
from solitonlab.shared.errors import EXIT_CONFIG_ERROR, ConfigError


@pytest.fixture()
def loader():
    return ConfigLoader()


@pytest.mark.parametrize("name", ["reference", "pure_cubic"])
def test_bundled_configs_load(loader, name):
    config = loader.load(loader.default_config_path(name))
    assert isinstance(config, RunConfig)
    assert name in loader.list_bundled()


def test_reference_values(loader):
    config = loader.load()
    assert config.nonlinearity.kind == "cubic_quintic"
    assert config.grid.points == 4000
    assert config.branch.omega == 0.8
    assert config.normal_form.resolved_order() is None


def test_missing_field_is_named(loader, reference_ini):
    text = reference_ini.read_text().replace("eps_fraction = 0.05\n", "")
    reference_ini.write_text(text)
    with pytest.raises(ConfigError, match=r"\[resolvent\] eps_fraction") as excinfo:
        loader.load(reference_ini)
    assert excinfo.value.exit_code == EXIT_CONFIG_ERROR


def test_missing_section(loader, reference_ini):
    text = reference_ini.read_text().split("[output]")[0]
    reference_ini.write_text(text)
    with pytest.raises(ConfigError, match="output"):
        loader.load(reference_ini)


def test_unknown_field(loader):
    with pytest.raises(ConfigError, match="unknown field"):
        loader.load(None, ["grid.spacing=0.1"])


def test_overrides_apply(loader):
    config = loader.load(None, ["grid.points=800", "branch.omega=0.75", "normal_form.order=2"])
    assert config.grid.points == 800
    assert config.branch.omega == 0.75
    assert config.normal_form.resolved_order() == 2


@pytest.mark.parametrize("override", ["grid.points", "points=800", "grid.points=many"])
def test_malformed_override(loader, override):
    with pytest.raises(ConfigError):
        loader.load(None, [override])


@pytest.mark.parametrize("override", [
    "nonlinearity.kind=quartic",
    "grid.dimension=2",
    "continuum.radius=10",
    "branch.omega=2.0",
    "branch.omega_count=2",
    "normal_form.order=3",
    "resolvent.method=pml",
    "evolution.scheme=rk4",
    "evolution.absorber_width=0.5",
    "evolution.dt=0",
    "tolerances.kernel=-1",
    "tracker.stride=0",
])
def test_validation(loader, override):
    with pytest.raises(ConfigError):
        loader.load(None, [override])


def test_render_round_trip_keeps_hash(loader, tmp_path):
    config = loader.load(None, ["fgr.threshold=2.5e-7"])
    target = tmp_path / "effective.ini"
    loader.save(config, target)
    reloaded = loader.load(target)
    assert reloaded == config
    assert reloaded.config_hash() == config.config_hash()


def test_hash_ignores_output_directory(loader):
    base = loader.load()
    moved = loader.load(None, ["output.directory=/tmp/elsewhere"])
    assert moved.config_hash() == base.config_hash()
    assert loader.load(None, ["tracker.z0=0.04"]).config_hash() != base.config_hash()


def test_grid_hash_tracks_grid_only(loader):
    base = loader.load()
    assert loader.load(None, ["evolution.dt=0.01"]).grid_hash() == base.grid_hash()
    assert loader.load(None, ["grid.points=2000"]).grid_hash() != base.grid_hash()
    assert loader.load(None, ["nonlinearity.b=0.1"]).physics_hash() != base.physics_hash()


def test_missing_file(loader, tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        loader.load(tmp_path / "absent.ini")
