"""CSV, NPZ and JSON persistence for states, kernels, tables and reports.

CSV files start with ``# key: value`` metadata lines. The optional
``# written:`` timestamp line is the only non-deterministic content and can
be suppressed so that identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
from pathlib import Path

import numpy as np

from .grid import Grid1D
from .states import DensityMatrix, WaveFunction


def _meta_lines(meta: dict | None, timestamp: bool) -> list[str]:
    lines = [f"# {k}: {_scalar(v)}" for k, v in (meta or {}).items()]
    if timestamp:
        lines.append(f"# written: {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}")
    return lines


def _scalar(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)
                               for x in v) + "]"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def read_metadata(path) -> dict:
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
    return meta


def write_wavefunction_csv(path, psi: WaveFunction, meta: dict | None = None,
                           timestamp: bool = True) -> Path:
    """Columns ``x, re, im``; grid and units go into the header."""
    path = Path(path)
    header = {"n": psi.grid.n_points, "x_min": psi.grid.x_min, "x_max": psi.grid.x_max,
              "time": psi.time, "m": psi.m, "hbar": psi.hbar}
    header.update(meta or {})
    with open(path, "w", newline="") as fh:
        for line in _meta_lines(header, timestamp):
            fh.write(line + "\n")
        w = csv.writer(fh)
        w.writerow(["x", "re", "im"])
        for x, v in zip(psi.grid.x, psi.values):
            w.writerow([repr(float(x)), repr(float(v.real)), repr(float(v.imag))])
    return path


def read_wavefunction_csv(path) -> WaveFunction:
    meta = read_metadata(path)
    rows = read_table_csv(path)
    data = np.array([[float(r["x"]), float(r["re"]), float(r["im"])] for r in rows])
    grid = Grid1D(int(meta["n"]), float(meta["x_min"]), float(meta["x_max"]))
    return WaveFunction(grid, data[:, 1] + 1j * data[:, 2], float(meta["time"]),
                        float(meta["m"]), float(meta["hbar"]))


def save_density_matrix(path, rho: DensityMatrix) -> Path:
    path = Path(path)
    np.savez_compressed(path, kernel=rho.kernel,
                        grid=np.array([rho.grid.n_points, rho.grid.x_min, rho.grid.x_max]),
                        time=rho.time, m=rho.m, hbar=rho.hbar)
    return path


def load_density_matrix(path) -> DensityMatrix:
    with np.load(path) as data:
        n, x_min, x_max = data["grid"]
        return DensityMatrix(Grid1D(int(n), float(x_min), float(x_max)), data["kernel"],
                             float(data["time"]), float(data["m"]), float(data["hbar"]))


def write_table_csv(path, rows, meta: dict | None = None, timestamp: bool = True,
                    columns=None) -> Path:
    """Write a list of flat dicts; column order follows the first row unless given."""
    path = Path(path)
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="") as fh:
        for line in _meta_lines(meta, timestamp):
            fh.write(line + "\n")
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: _scalar(row.get(k, "")) for k in columns})
    return path


def read_table_csv(path) -> list[dict]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=False) + "\n")
    return path
