"""Snapshots (``.npz``) and CSV exports.

Floats are written with ``repr`` so files round-trip bit for bit and two
identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import os
import re
import zipfile

import numpy as np

from .engine import LEDGER_COLUMNS, EnergyLedger
from .exceptions import ConfigurationError
from .fields import Grid2D, ScalarField, VectorField
from .kinetic import PhaseDistribution, VelocityGrid
from .state import SimState

SNAPSHOT_RE = re.compile(r"snapshot_(\d{6})\.npz$")


def _cell(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_rows(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r[c]) for c in columns])


def read_rows(path):
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        return [{k: float(v) for k, v in r.items()} for r in rd]


def write_ledger(ledger: EnergyLedger, path):
    write_rows(path, LEDGER_COLUMNS, ledger.rows)


def read_ledger(path) -> EnergyLedger:
    led = EnergyLedger()
    try:
        rows = read_rows(path)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigurationError(f"cannot read ledger {path}: {exc}", key="ledger") from exc
    for r in rows:
        r["step"] = int(r["step"])
        led.append(r)
    return led


def _write_npz(path, arrays: dict):
    """Like ``np.savez`` but with fixed zip timestamps, so equal data gives equal bytes."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, np.asanyarray(arr), allow_pickle=False)


def save_snapshot(state: SimState, path):
    g, vg = state.grid, state.vgrid
    arrays = {
        "t": state.t,
        "step": state.step,
        "grid": np.array([g.nx, g.ny, g.Lx, g.Ly]),
        "vgrid": np.array([vg.nv, vg.Vmax]),
        "rho": state.rho.values,
        "ux": state.u.x,
        "uy": state.u.y,
        "p": state.p.values,
        "f": state.f.values,
    }
    _write_npz(path, arrays)


def load_snapshot(path) -> SimState:
    try:
        with np.load(path) as d:
            nx, ny, Lx, Ly = d["grid"]
            g = Grid2D(int(nx), int(ny), float(Lx), float(Ly))
            vg = VelocityGrid(int(d["vgrid"][0]), float(d["vgrid"][1]))
            return SimState(
                float(d["t"]),
                ScalarField(g, d["rho"]),
                VectorField(g, d["ux"], d["uy"]),
                ScalarField(g, d["p"]),
                PhaseDistribution(g, vg, d["f"]),
                int(d["step"]),
            )
    except (OSError, KeyError, ValueError, zipfile.BadZipFile, EOFError) as exc:
        raise ConfigurationError(f"corrupted snapshot {path}: {exc}", key=str(path)) from exc


def snapshot_files(directory):
    names = sorted(n for n in os.listdir(directory) if SNAPSHOT_RE.match(n))
    return [os.path.join(directory, n) for n in names]


def write_trajectory(traj, directory):
    os.makedirs(directory, exist_ok=True)
    for s in traj.snapshots:
        save_snapshot(s, os.path.join(directory, f"snapshot_{s.step:06d}.npz"))
    write_ledger(traj.ledger, os.path.join(directory, "ledger.csv"))
    if traj.diagnostics:
        cols = list(traj.diagnostics[0])
        write_rows(os.path.join(directory, "diagnostics.csv"), cols, traj.diagnostics)


def load_snapshots(directory):
    files = snapshot_files(directory)
    if not files:
        raise ConfigurationError(f"no snapshots in {directory}", key="trajectory")
    return [load_snapshot(f) for f in files]
