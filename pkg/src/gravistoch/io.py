"""Output serialization: headed CSV, JSON documents and trajectory files.

Every file starts with a provenance header carrying the tool version, the
config hash and the seed. CSV numbers use 17 significant digits and ``\\n``
line endings so that values round-trip exactly.

Binary trajectory layout (little-endian):

=========  ==========================================================
bytes      content
=========  ==========================================================
0-7        magic ``b"GSTRAJ01"``
8-11       ``uint32`` length ``H`` of the JSON header
12-(12+H)  UTF-8 JSON header (grid digest, shape, t0, dt, member, ...)
rest       ``float64`` array ``(n_times, n_modes, 2)``: Re Q, Im Q
=========  ==========================================================
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from ._version import __version__
from .config import RunConfig, build_grid
from .constants import PhysicalConstants
from .exceptions import ConfigError, DomainError
from .lattice import ModeGrid
from .linear_field import GridField
from .sde import Ensemble, Trajectory

__all__ = [
    "format_number",
    "header_line",
    "write_csv",
    "read_csv",
    "write_json",
    "write_trajectory",
    "read_trajectory",
    "write_manifest",
    "load_ensemble",
    "write_grid_field",
    "read_grid_field",
]

MAGIC = b"GSTRAJ01"
_TENSOR_COLUMNS = [f"h{m}{n}" for m in range(4) for n in range(m, 4)]
_TRAJ_SUFFIX = {"csv": ".csv", "json": ".json", "binary": ".bin"}


def format_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def header_line(cfg: RunConfig | None, **extra) -> str:
    parts = [f"gravistoch {__version__}"]
    if cfg is not None:
        parts += [f"config_hash={cfg.config_hash}", f"seed={cfg.seed}", f"command={cfg.command}"]
    parts += [f"{k}={v}" for k, v in extra.items()]
    return "# " + " ".join(parts)


def _write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)
    return path


def write_csv(path, cfg: RunConfig | None, columns: Sequence[str], rows, **extra) -> Path:
    lines = [header_line(cfg, **extra), ",".join(columns)]
    for row in rows:
        if len(row) != len(columns):
            raise DomainError("row length does not match the header")
        lines.append(",".join(format_number(v) for v in row))
    return _write_text(path, "\n".join(lines) + "\n")


def _parse_header(line: str) -> dict:
    meta = {}
    tokens = line.lstrip("#").split()
    if len(tokens) >= 2 and tokens[0] == "gravistoch":
        meta["version"] = tokens[1]
    for tok in tokens[2:]:
        if "=" in tok:
            k, v = tok.split("=", 1)
            meta[k] = v
    return meta


def read_csv(path) -> tuple[dict, list[str], np.ndarray]:
    """Return ``(header metadata, column names, float array)``."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        meta = _parse_header(first) if first.startswith("#") else {}
        columns = (fh.readline() if first.startswith("#") else first).rstrip("\n").split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2, dtype=float)
    if data.size == 0:
        data = data.reshape(0, len(columns))
    return meta, columns, data


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def meta_block(cfg: RunConfig | None) -> dict:
    meta = {"tool": "gravistoch", "version": __version__}
    if cfg is not None:
        meta.update(config_hash=cfg.config_hash, seed=cfg.seed, config=cfg.resolved())
    return meta


def write_json(path, cfg: RunConfig | None, payload: dict) -> Path:
    doc = {"meta": meta_block(cfg), **payload}
    return _write_text(path, json.dumps(_jsonable(doc), indent=2, allow_nan=False) + "\n")


# -- trajectories ----------------------------------------------------------

def trajectory_filename(member: int, fmt: str) -> str:
    return f"member_{member:06d}{_TRAJ_SUFFIX[fmt]}"


def write_trajectory(path, cfg: RunConfig, traj: Trajectory, grid: ModeGrid, fmt: str) -> Path:
    Q = np.asarray(traj.Q)
    if fmt == "csv":
        cols = ["t"] + [f"{p}Q_{m}" for m in range(grid.n_modes) for p in ("Re", "Im")]
        body = np.empty((Q.shape[0], 1 + 2 * grid.n_modes))
        body[:, 0] = traj.times
        body[:, 1::2], body[:, 2::2] = Q.real, Q.imag
        return write_csv(path, cfg, cols, body, member=traj.member_index, grid=grid.digest())
    if fmt == "json":
        return write_json(path, cfg, {
            "member": traj.member_index, "grid_digest": grid.digest(),
            "t0": traj.t0, "dt": traj.dt, "re": Q.real, "im": Q.imag,
        })
    if fmt == "binary":
        head = {
            "version": __version__, "config_hash": cfg.config_hash, "seed": cfg.seed,
            "grid_digest": grid.digest(), "member": traj.member_index,
            "n_times": int(Q.shape[0]), "n_modes": int(Q.shape[1]), "t0": traj.t0, "dt": traj.dt,
        }
        hb = json.dumps(head, sort_keys=True).encode()
        data = np.stack([Q.real, Q.imag], axis=-1).astype("<f8")
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(MAGIC + struct.pack("<I", len(hb)) + hb + data.tobytes())
        return path
    raise ConfigError("format", f"unknown trajectory format {fmt!r}")


def read_trajectory(path) -> tuple[dict, np.ndarray]:
    """Return ``(metadata, Q)`` with ``Q`` of shape ``(n_times, n_modes)``."""
    path = Path(path)
    if path.suffix == ".bin":
        raw = path.read_bytes()
        if raw[:8] != MAGIC:
            raise DomainError(f"{path} is not a gravistoch trajectory")
        (n,) = struct.unpack("<I", raw[8:12])
        head = json.loads(raw[12:12 + n])
        data = np.frombuffer(raw[12 + n:], dtype="<f8")
        data = data.reshape(head["n_times"], head["n_modes"], 2)
        return head, data[..., 0] + 1j * data[..., 1]
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        meta = {"grid_digest": doc["grid_digest"], "member": doc["member"], "t0": doc["t0"], "dt": doc["dt"]}
        return meta, np.asarray(doc["re"]) + 1j * np.asarray(doc["im"])
    meta, _, data = read_csv(path)
    meta["grid_digest"] = meta.pop("grid", None)
    meta["t0"] = float(data[0, 0])
    return meta, data[:, 1::2] + 1j * data[:, 2::2]


def write_manifest(directory, cfg: RunConfig, grid: ModeGrid, files: Sequence[str], t0: float) -> Path:
    return write_json(Path(directory) / "manifest.json", cfg, {
        "grid_digest": grid.digest(),
        "modes": [{"index": m, "polarization": lab, "n": list(n)}
                  for m, (lab, n) in enumerate(grid.representatives)],
        "t0": t0,
        "dt": cfg["dt"],
        "members": list(range(cfg["first_member"], cfg["first_member"] + cfg["members"])),
        "format": cfg["format"],
        "files": list(files),
    })


def load_ensemble(directory) -> Ensemble:
    """Rebuild an :class:`Ensemble` from a directory written by ``simulate``."""
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except FileNotFoundError:
        raise ConfigError("input", f"no manifest.json in {directory}") from None
    conf = manifest["meta"]["config"]
    grid = build_grid(conf)
    if grid.digest() != manifest["grid_digest"]:
        raise DomainError("manifest grid digest does not match its configuration")
    c = PhysicalConstants(hbar=conf["hbar"], G=conf["G"], nu=conf["nu"],
                          beta=0.0 if conf.get("beta") is None else conf["beta"])
    Qs = []
    for name in manifest["files"]:
        meta, Q = read_trajectory(directory / name)
        if meta.get("grid_digest") != manifest["grid_digest"]:
            raise DomainError(f"{name}: grid digest mismatch")
        Qs.append(Q)
    return Ensemble(grid=grid, constants=c, t0=float(manifest["t0"]), dt=float(manifest["dt"]),
                    Q=np.stack(Qs), seed=int(manifest["meta"]["seed"]),
                    members=np.asarray(manifest["members"]), method=conf.get("method", "euler"))


# -- grid fields -----------------------------------------------------------

def write_grid_field(path, field: GridField, cfg: RunConfig | None = None) -> Path:
    """Flat CSV: node indices ``it, ix, iy, iz`` then the 10 independent components."""
    idx = np.indices(field.shape).reshape(4, -1).T
    iu = np.triu_indices(4)
    comps = field.values[..., iu[0], iu[1]].reshape(-1, 10)
    rows = [list(map(int, i)) + list(v) for i, v in zip(idx, comps)]
    return write_csv(path, cfg, ["it", "ix", "iy", "iz"] + _TENSOR_COLUMNS, rows,
                     spacing=",".join(format_number(s) for s in field.spacing),
                     origin=",".join(format_number(o) for o in field.origin))


def read_grid_field(path, cls=GridField) -> GridField:
    meta, columns, data = read_csv(path)
    if columns != ["it", "ix", "iy", "iz"] + _TENSOR_COLUMNS:
        raise DomainError(f"{path}: unexpected grid-field columns")
    try:
        spacing = [float(v) for v in meta["spacing"].split(",")]
        origin = [float(v) for v in meta["origin"].split(",")]
    except KeyError:
        raise DomainError(f"{path}: header lacks spacing/origin") from None
    idx = data[:, :4].astype(int)
    shape = tuple(idx.max(axis=0) + 1)
    values = np.zeros(shape + (4, 4))
    iu = np.triu_indices(4)
    for col, (m, n) in enumerate(zip(*iu)):
        values[idx[:, 0], idx[:, 1], idx[:, 2], idx[:, 3], m, n] = data[:, 4 + col]
        values[idx[:, 0], idx[:, 1], idx[:, 2], idx[:, 3], n, m] = data[:, 4 + col]
    return cls(values, spacing, origin)
