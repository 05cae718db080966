"""CSV writers for fields, trajectories and reports.

Reals are written as the shortest round-trip decimal (``repr``), so identical
inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .entropy import EntropyReport
from .flow import FlowTrajectory
from .geometry import ManifoldGrid, ScalarField, scalar_curvature
from .spectral import SpectralReport

TRAJECTORY_COLUMNS = ("t", "volume", "min_R", "max_R", "mass", "N", "F_perelman")
ENTROPY_COLUMNS = TRAJECTORY_COLUMNS + ("fisher", "meanQ", "residual_1_1")
SOLVE_COLUMNS = ("iterations", "residual", "epsilon", "coercivity", "compatibility_defect")
SPECTRAL_COLUMNS = ("name", "lambda1", "bound", "holds")


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence], overwrite: bool = False) -> Path:
    path = Path(path)
    with path.open("w" if overwrite else "x", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def field_rows(field: ScalarField) -> list[tuple]:
    grid = field.grid
    coords = grid.coordinates()
    if grid.ndim == 1:
        return [(i, coords[0][i], field.values[i]) for i in range(grid.shape[0])]
    nx, ny = grid.shape
    return [(i, j, coords[0][i, j], coords[1][i, j], field.values[i, j])
            for i in range(nx) for j in range(ny)]


def field_header(grid: ManifoldGrid) -> tuple[str, ...]:
    return ("i", "x", "value") if grid.ndim == 1 else ("i", "j", "x", "y", "value")


def write_field_csv(field: ScalarField, path: str | Path, overwrite: bool = False) -> Path:
    return write_csv(path, field_header(field.grid), field_rows(field), overwrite)


def read_field_csv(path: str | Path, grid: ManifoldGrid) -> ScalarField:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != field_header(grid):
            raise ValueError(f"unexpected header {reader.fieldnames!r}")
        values = np.empty(grid.shape)
        for row in reader:
            index = (int(row["i"]),) if grid.ndim == 1 else (int(row["i"]), int(row["j"]))
            values[index] = float(row["value"])
    return ScalarField(values, grid)


def trajectory_rows(traj: FlowTrajectory, residual_1_1: Sequence[float] | None = None) -> list[tuple]:
    """One row per snapshot; entropy columns are appended when reports are attached."""
    rows = []
    offset = 2  # heat-identity residuals exist for times[2:-2]
    for k, (t, metric) in enumerate(zip(traj.times, traj.metrics)):
        R = scalar_curvature(metric).values
        mass = traj.masses[k] if traj.masses is not None else None
        rep: EntropyReport | None = traj.reports[k] if traj.reports else None
        row = [t, traj.volumes[k], R.min(), R.max(), mass,
               rep.nash_N if rep else None, rep.perelman_F if rep else None]
        if residual_1_1 is not None:
            j = k - offset
            res = residual_1_1[j] if 0 <= j < len(residual_1_1) else None
            row += [rep.fisher_info if rep else None, rep.mean_Q if rep else None, res]
        rows.append(tuple(row))
    return rows


def spectral_rows(report: SpectralReport) -> list[tuple]:
    rows = []
    for check in report.checks:
        bound = "nan" if math.isnan(check.bound) else fmt(check.bound)
        holds = "not_evaluated" if check.holds is None else fmt(check.holds)
        rows.append((check.name, fmt(report.lambda1), bound, holds))
    return rows
