import json

import pytest

from solitonlab.app.cli import run
from solitonlab.shared.config import ConfigLoader
from solitonlab.shared.errors import EXIT_CONFIG_ERROR, EXIT_HYPOTHESIS_FAILED, EXIT_OK

SMALL = [
    "grid.points=800",
    "grid.radius=20",
    "continuum.radius=40",
    "branch.omega_min=0.9",
    "branch.omega_max=1.1",
    "branch.omega_count=3",
]


def _args(command, out, *extra):
    argv = [command, "--config", str(ConfigLoader().default_config_path("pure_cubic")), "--out", str(out)]
    for override in SMALL + list(extra):
        argv += ["--override", override]
    return argv


def test_cubic_ground_state_fails_mass_slope(tmp_path):
    assert run(_args("ground-state", tmp_path)) == EXIT_HYPOTHESIS_FAILED
    data = json.loads((tmp_path / "ground_state.json").read_text())
    verdicts = {v["key"]: v["status"] for v in data["verdicts"]}
    assert verdicts == {"H3": "PASS", "H4": "FAIL", "H5": "PASS"}
    assert (tmp_path / "branch.csv").exists()
    assert (tmp_path / "profile.csv").exists()


def test_rerun_is_byte_identical(tmp_path):
    run(_args("ground-state", tmp_path / "a"))
    run(_args("ground-state", tmp_path / "b"))
    assert (tmp_path / "a" / "ground_state.json").read_bytes() == (tmp_path / "b" / "ground_state.json").read_bytes()


def test_defaults_prints_config(capsys):
    assert run(["defaults", "--bundled", "pure_cubic"]) == EXIT_OK
    assert "[nonlinearity]" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["defaults", "--override", "grid.points=many"],
    ["defaults", "--bundled", "nonexistent"],
    ["ground-state", "--config", "/nonexistent/run.ini"],
    ["frobnicate"],
])
def test_configuration_errors(argv):
    assert run(argv) == EXIT_CONFIG_ERROR


def test_help_exits_cleanly():
    assert run(["--help"]) == EXIT_OK
