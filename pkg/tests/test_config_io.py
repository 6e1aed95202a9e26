import json
import math

import numpy as np
import pytest

from gravistoch.config import parse_config
from gravistoch.exceptions import ConfigError, DomainError, NumericalGuardError
from gravistoch.io import (
    format_number,
    read_csv,
    read_grid_field,
    read_trajectory,
    write_csv,
    write_grid_field,
    write_json,
    write_trajectory,
)
from gravistoch.lattice import single_mode_grid
from gravistoch.linear_field import GridField
from gravistoch.sde import Trajectory, max_stable_dt


def test_defaults_for_minimal_simulate():
    cfg = parse_config("simulate", {"nmax": 1})
    assert cfg.constants.nu == pytest.approx(1.0)
    assert cfg.constants.kappa == pytest.approx(1.0)
    assert cfg["dt"] == pytest.approx(0.1 / math.sqrt(3))


def test_beta_limit_named():
    with pytest.raises(ConfigError, match="beta < 2") as exc:
        parse_config("simulate", {"beta": 3.0})
    assert exc.value.field == "beta"


def test_nu_and_beta_exclusive(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"nu": 1.0}))
    with pytest.raises(ConfigError, match="mutually exclusive"):
        parse_config("covariance", {"beta": 0.5}, path)


def test_flags_override_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"omega": 2.0, "seed": 4}))
    cfg = parse_config("covariance", {"omega": 3.0}, path)
    assert cfg["omega"] == 3.0 and cfg.seed == 4


def test_unknown_and_bad_keys(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"colour": 1}))
    with pytest.raises(ConfigError, match="colour"):
        parse_config("covariance", None, path)
    with pytest.raises(ConfigError, match="steps"):
        parse_config("simulate", {"steps": 1.5})
    with pytest.raises(ConfigError, match="hbar"):
        parse_config("covariance", {"hbar": -1.0})
    with pytest.raises(ConfigError, match="format"):
        parse_config("simulate", {"format": "xml"})
    with pytest.raises(ConfigError):
        parse_config("launch")
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        parse_config("covariance", None, path)


def test_guard_before_work():
    with pytest.raises(NumericalGuardError):
        parse_config("simulate", {"nmax": 1, "dt": 1.0})


def test_hash_ignores_runtime_keys():
    a = parse_config("covariance", {"output": "a", "threads": 1})
    b = parse_config("covariance", {"output": "b", "threads": 4})
    assert a.config_hash == b.config_hash
    assert a.config_hash != parse_config("covariance", {"seed": 1}).config_hash
    assert "output" not in a.resolved()


def test_number_format_round_trips():
    rng = np.random.default_rng(0)
    for x in rng.normal(size=100) * 10.0 ** rng.integers(-300, 300, size=100):
        assert float(format_number(x)) == x
    assert format_number(3) == "3"
    assert format_number(float("nan")) == "nan"


def test_csv_round_trip(tmp_path):
    cfg = parse_config("covariance")
    rows = np.random.default_rng(1).normal(size=(5, 2))
    path = write_csv(tmp_path / "x.csv", cfg, ["a", "b"], rows)
    raw = path.read_bytes()
    assert b"\r" not in raw
    assert raw.startswith(b"# gravistoch ")
    meta, cols, data = read_csv(path)
    assert cols == ["a", "b"] and meta["config_hash"] == cfg.config_hash and meta["seed"] == "0"
    np.testing.assert_array_equal(data, rows)
    with pytest.raises(DomainError):
        write_csv(tmp_path / "y.csv", cfg, ["a"], [[1, 2]])


def test_json_meta(tmp_path):
    cfg = parse_config("covariance")
    doc = json.loads(write_json(tmp_path / "x.json", cfg, {"v": np.float64(np.nan), "a": np.arange(3)}).read_text())
    assert doc["meta"]["config_hash"] == cfg.config_hash
    assert doc["meta"]["config"]["command"] == "covariance"
    assert doc["v"] is None and doc["a"] == [0, 1, 2]


@pytest.mark.parametrize("fmt", ["csv", "json", "binary"])
def test_trajectory_round_trip(tmp_path, fmt):
    cfg = parse_config("simulate", {"nmax": 0, "dt": 0.01})
    grid = single_mode_grid(2 * np.pi)
    rng = np.random.default_rng(2)
    Q = rng.normal(size=(20, 2)) + 1j * rng.normal(size=(20, 2))
    traj = Trajectory(t0=0.0, dt=0.01, Q=Q, seed=0, member_index=3)
    path = write_trajectory(tmp_path / f"m{fmt}", cfg, traj, grid, fmt)
    path = path.rename(path.with_suffix({"csv": ".csv", "json": ".json", "binary": ".bin"}[fmt]))
    meta, back = read_trajectory(path)
    np.testing.assert_array_equal(back, Q)
    assert meta["grid_digest"] == grid.digest()


def test_grid_field_round_trip(tmp_path):
    a = np.random.default_rng(3).normal(size=(2, 3, 2, 2, 4, 4))
    f = GridField(a + np.swapaxes(a, -1, -2), (0.5, 0.1, 0.2, 0.3), (1.0, 0.0, -1.0, 2.0))
    g = read_grid_field(write_grid_field(tmp_path / "f.csv", f))
    np.testing.assert_array_equal(g.values, f.values)
    assert g.spacing == f.spacing and g.origin == f.origin
