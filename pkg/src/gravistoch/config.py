"""Run configuration: a flat JSON schema merged with command-line flags."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .constants import NATURAL_G, PhysicalConstants
from .exceptions import ConfigError, DomainError
from .lattice import ModeGrid, enumerate_modes, single_mode_grid
from .sde import check_step, max_stable_dt

__all__ = ["COMMANDS", "FORMATS", "SCHEMA", "RunConfig", "parse_config", "build_grid"]

COMMANDS = ("polarization", "spectrum", "simulate", "covariance", "radiation",
            "wick-check", "retarded", "acceleration-check")
FORMATS = ("csv", "json", "binary")

# key -> (type, default, description); None defaults are resolved per command
SCHEMA: dict[str, tuple[type, object, str]] = {
    "hbar": (float, 1.0, "action scale"),
    "G": (float, NATURAL_G, "gravitational constant (natural units: 16 pi G = 1)"),
    "nu": (float, None, "diffusion parameter; exclusive with beta"),
    "beta": (float, None, "dynamical parameter (< 2); exclusive with nu"),
    "L": (float, 2.0 * math.pi, "periodic box length"),
    "nmax": (int, 1, "lattice cutoff; 0 selects a single mode along z"),
    "dt": (float, None, "time step; defaults to the stability guard"),
    "steps": (int, 10000, "integration steps per member"),
    "members": (int, 100, "ensemble members"),
    "first_member": (int, 0, "index of the first member"),
    "method": (str, "euler", "'euler' or 'exact'"),
    "burn_in": (int, 0, "discarded steps after a cold start"),
    "cold_start": (bool, False, "start from Q = 0 instead of the stationary law"),
    "seed": (int, 0, "64-bit seed"),
    "output": (str, ".", "output directory"),
    "format": (str, "csv", "trajectory format: csv, json or binary"),
    "threads": (int, None, "worker threads (capped by GRAVISTOCH_THREADS)"),
    "save_trajectories": (bool, True, "write simulated trajectories"),
    "mode": (int, 0, "stored mode used by the estimators"),
    "lags": (str, "0,0.5,1,2", "comma-separated lags"),
    "k": (str, "0,0,1", "wavevector x,y,z"),
    "bins": (int, 24, "spectrum bins"),
    "omega": (float, 1.0, "mode frequency"),
    "tau_max": (float, 3.0, "largest lag"),
    "tau_step": (float, 0.1, "lag spacing"),
    "samples": (int, 100000, "phase-ensemble draws"),
    "order": (int, 4, "moment order"),
    "input": (str, None, "trajectory directory written by simulate"),
    "source": (str, None, "source description (JSON)"),
    "at": (str, None, "field point x,y,z,t"),
    "z_threshold": (float, 3.0, "|z| limit for --assert"),
}

# not part of the result: excluded from the hash and the echoed config
_RUNTIME_KEYS = ("output", "threads")


def _coerce(key: str, value):
    kind = SCHEMA[key][0]
    if value is None:
        return None
    try:
        if kind is bool:
            if isinstance(value, bool):
                return value
            raise TypeError
        if kind is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            v = float(value)
            if not math.isfinite(v):
                raise ConfigError(key, "must be finite")
            return v
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected {kind.__name__}, got {value!r}") from None


@dataclass(frozen=True)
class RunConfig:
    command: str
    values: dict
    constants: PhysicalConstants

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def output(self) -> Path:
        return Path(self.values["output"])

    def resolved(self) -> dict:
        """Configuration that determines the results (echoed into outputs)."""
        out = {k: v for k, v in self.values.items() if k not in _RUNTIME_KEYS}
        out["command"] = self.command
        out["nu"] = self.constants.nu
        return out

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _load_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be an object")
    return data


def build_grid(values: dict) -> ModeGrid:
    L, nmax = values["L"], values["nmax"]
    return single_mode_grid(L) if nmax == 0 else enumerate_modes(L, nmax)


def _parse_floats(key: str, text: str, n: int | None = None) -> list[float]:
    try:
        out = [float(v) for v in str(text).split(",")]
    except ValueError:
        raise ConfigError(key, f"expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(out) != n:
        raise ConfigError(key, f"expected {n} comma-separated numbers, got {len(out)}")
    if not all(math.isfinite(v) for v in out):
        raise ConfigError(key, "values must be finite")
    return out


def _validate(command: str, v: dict, c: PhysicalConstants) -> None:
    def positive(key):
        if v[key] is not None and not v[key] > 0:
            raise ConfigError(key, f"must be > 0 (got {v[key]})")

    for key in ("L", "omega", "tau_max", "tau_step", "steps", "members", "samples", "bins"):
        positive(key)
    for key in ("nmax", "burn_in", "first_member", "mode"):
        if v[key] < 0:
            raise ConfigError(key, f"must be >= 0 (got {v[key]})")
    if not 0 <= v["seed"] < 2 ** 64:
        raise ConfigError("seed", "must be a 64-bit unsigned integer")
    if v["format"] not in FORMATS:
        raise ConfigError("format", f"must be one of {', '.join(FORMATS)}")
    if v["method"] not in ("euler", "exact"):
        raise ConfigError("method", "must be 'euler' or 'exact'")
    if v["threads"] is not None and v["threads"] < 1:
        raise ConfigError("threads", "must be >= 1")
    _parse_floats("lags", v["lags"])
    _parse_floats("k", v["k"], 3)

    if command == "simulate":
        grid = build_grid(v)
        if v["mode"] >= grid.n_modes:
            raise ConfigError("mode", f"grid has {grid.n_modes} stored modes")
        if v["dt"] is None:
            v["dt"] = max_stable_dt(grid, c)
            if not math.isfinite(v["dt"]):
                raise ConfigError("dt", "required when nu = 0")
        positive("dt")
        check_step(v["dt"], grid, c)
    elif command == "radiation":
        if v["samples"] < 10_000:
            raise ConfigError("samples", "must be >= 10000")
    elif command == "wick-check":
        if v["input"] is None:
            raise ConfigError("input", "required")
        if v["order"] < 1:
            raise ConfigError("order", "must be >= 1")
    elif command == "retarded":
        for key in ("source", "at"):
            if v[key] is None:
                raise ConfigError(key, "required")
        _parse_floats("at", v["at"], 4)
    elif command == "covariance":
        if c.nu == 0:
            raise ConfigError("nu", "must be > 0 for the continuation check")


def parse_config(command: str, overrides: dict | None = None, config_path=None) -> RunConfig:
    """Merge defaults, an optional JSON file and flags (flags win).

    ``overrides`` maps schema keys to flag values; ``None`` means unset.
    Raises :class:`ConfigError` naming the offending field.
    """
    if command not in COMMANDS:
        raise ConfigError("command", f"unknown command {command!r}")
    file_values = _load_file(config_path) if config_path else {}
    flag_values = {k: val for k, val in (overrides or {}).items() if val is not None}
    for source in (file_values, flag_values):
        for key in source:
            if key not in SCHEMA:
                raise ConfigError(key, "unknown key")
    merged = {**file_values, **flag_values}
    if merged.get("nu") is not None and merged.get("beta") is not None:
        raise ConfigError("nu/beta", "nu and beta are mutually exclusive parameterizations")

    values = {key: _coerce(key, merged.get(key, spec[1])) for key, spec in SCHEMA.items()}
    beta = values["beta"]
    if beta is not None and not beta < 2:
        raise ConfigError("beta", f"beta < 2 required (got {beta})")
    try:
        c = PhysicalConstants(hbar=values["hbar"], G=values["G"], nu=values["nu"],
                              beta=0.0 if beta is None else beta)
    except DomainError as exc:
        word = str(exc).split()[0]
        raise ConfigError(word if word in ("hbar", "G", "nu") else "constants", str(exc)) from None
    try:
        _validate(command, values, c)
    except DomainError as exc:
        raise ConfigError("lattice", str(exc)) from None
    return RunConfig(command=command, values=values, constants=c)
