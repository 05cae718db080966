"""Command-line driver: ``ricci-fisher [CONFIG] [--command CMD] [--out DIR] [--set KEY=VALUE]``.

Config files hold flat ``key = value`` lines; ``#`` starts a comment.
Exit status is 0 on success, 1 on numeric or invariant failure and 2 on
usage or configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import checks
from .elliptic import Gauge, assemble_weak, oracle_1d_phase, solve
from .entropy import PhysicsParams, annotate, monotonicity_scan
from .errors import ConfigError, RicciFisherError
from .flow import FlowConfig, FlowTrajectory, conjugate_heat_backward, flow_run
from .geometry import (
    Conformal2D,
    HomogeneousEinstein,
    ManifoldGrid,
    MetricState,
    Prescribed1D,
    ScalarField,
    normalized_density,
)
from .io import (
    ENTROPY_COLUMNS,
    SOLVE_COLUMNS,
    SPECTRAL_COLUMNS,
    TRAJECTORY_COLUMNS,
    fmt,
    spectral_rows,
    trajectory_rows,
    write_csv,
    write_field_csv,
)
from .spectral import DirichletInterval, FlatTorus, RoundSphere, bound_report, lambda1_estimate

log = logging.getLogger("ricci_fisher")

COMMANDS = ("flow", "entropy", "phase", "spectral", "check")
TOPOLOGIES = ("torus2d", "sphere", "interval", "circle")


def _positive(x: float) -> bool:
    return x > 0


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    command: str = ""
    topology: str = "torus2d"
    n: int = 32
    L: float = 1.0
    dim: int = 2
    c0: float = 1.0
    phi0_amp: float = 0.1
    phi0_kx: int = 1
    phi0_ky: int = 0
    u_amp: float = 0.2
    p_amp: float = 0.5
    r_amp: float = 1.0
    dt: float = 1e-4
    t_end: float = 0.01
    safety: float = 1.0
    snapshot_every: int = 1
    conjugate: bool = True
    kappa: float = 0.25
    m: float = 1.0
    hbar: float = 1.0
    tol: float = 1e-10
    max_iter: int = 5000
    oracle_c: float = 0.3
    oracle_k: float = 0.0
    boundary_data: str = "zero"
    fields_every: int = 0
    out: str = "."
    overwrite: bool = False


_CONVERT: dict[type, Callable[[str], Any]] = {int: int, float: float, str: str, bool: _parse_bool}
_TYPES = {f.name: f.type for f in fields(RunConfig)}
_TYPES = {k: {"int": int, "float": float, "str": str, "bool": bool}[v] for k, v in _TYPES.items()}

_RULES: dict[str, tuple[Callable[[Any], bool], str]] = {
    "command": (lambda v: v in COMMANDS, f"one of {', '.join(COMMANDS)}"),
    "topology": (lambda v: v in TOPOLOGIES, f"one of {', '.join(TOPOLOGIES)}"),
    "n": (lambda v: v >= 3, ">= 3"),
    "L": (_positive, "> 0"),
    "dim": (lambda v: v >= 2, ">= 2"),
    "c0": (_positive, "> 0"),
    "u_amp": (lambda v: abs(v) < 1, "|u_amp| < 1"),
    "p_amp": (lambda v: abs(v) < 1, "|p_amp| < 1"),
    "dt": (_positive, "> 0"),
    "t_end": (_positive, "> 0"),
    "safety": (lambda v: 0 < v <= 1, "in (0, 1]"),
    "snapshot_every": (lambda v: v >= 1, ">= 1"),
    "kappa": (lambda v: v >= 0, ">= 0"),
    "m": (_positive, "> 0"),
    "hbar": (_positive, "> 0"),
    "tol": (_positive, "> 0"),
    "max_iter": (lambda v: v >= 1, ">= 1"),
    "boundary_data": (lambda v: v in ("zero", "oracle"), "zero or oracle"),
    "fields_every": (lambda v: v >= 0, ">= 0"),
}


def _set(values: dict[str, Any], key: str, raw: str, where: str) -> None:
    if key not in _TYPES:
        raise ConfigError(f"{where}: unknown key '{key}'")
    try:
        value = _CONVERT[_TYPES[key]](raw)
    except ValueError:
        raise ConfigError(f"{where}: key '{key}' expects {_TYPES[key].__name__}, got {raw!r}") from None
    if isinstance(value, float) and not math.isfinite(value):
        raise ConfigError(f"{where}: key '{key}' must be finite")
    rule = _RULES.get(key)
    if rule and not rule[0](value):
        raise ConfigError(f"{where}: key '{key}' must be {rule[1]}")
    values[key] = value


def parse_config(text: str, source: str = "<config>") -> dict[str, Any]:
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"{where}: duplicate key '{key}'")
        _set(values, key, raw, where)
    return values


def build_config(path: str | None = None, overrides: list[str] | None = None,
                 command: str | None = None, out: str | None = None) -> RunConfig:
    values: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        values.update(parse_config(text, path))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected KEY=VALUE")
        key, raw = (s.strip() for s in item.split("=", 1))
        _set(values, key, raw, "--set")
    if command is not None:
        _set(values, "command", command, "--command")
    if out is not None:
        values["out"] = out
    cfg = RunConfig(**values)
    if not cfg.command:
        raise ConfigError("no command given (set 'command' in the config or pass --command)")
    return cfg


# ---------------------------------------------------------------------------
# Pipelines


def _initial_metric(cfg: RunConfig) -> MetricState:
    if cfg.topology == "sphere":
        return HomogeneousEinstein(cfg.dim, cfg.c0)
    if cfg.topology == "torus2d":
        grid = ManifoldGrid.torus(cfg.n, cfg.L)
        x, y = grid.coordinates()
        phi = cfg.phi0_amp * np.sin(2 * np.pi * (cfg.phi0_kx * x + cfg.phi0_ky * y) / cfg.L)
        return Conformal2D(grid, phi)
    grid = ManifoldGrid.interval(cfg.n, cfg.L) if cfg.topology == "interval" else ManifoldGrid.circle(cfg.n, cfg.L)
    (x,) = grid.coordinates()
    return Prescribed1D(grid, cfg.r_amp * np.cos(2 * np.pi * x / cfg.L))


def _terminal_density(cfg: RunConfig, metric: MetricState):
    if isinstance(metric, HomogeneousEinstein):
        return normalized_density(np.array([1.0]), metric)
    x = metric.grid.coordinates()[0]
    return normalized_density(1 + cfg.u_amp * np.cos(2 * np.pi * x / cfg.L), metric)


def _run_flow(cfg: RunConfig, with_density: bool) -> FlowTrajectory:
    metric0 = _initial_metric(cfg)
    traj = flow_run(metric0, FlowConfig(cfg.t_end, cfg.dt, cfg.snapshot_every, cfg.safety))
    if with_density:
        traj = conjugate_heat_backward(traj, _terminal_density(cfg, traj.metrics[-1]))
    return traj


def _write_fields(cfg: RunConfig, out: Path, traj: FlowTrajectory) -> None:
    if not cfg.fields_every or isinstance(traj.metrics[0], HomogeneousEinstein):
        return
    for k in range(0, len(traj), cfg.fields_every):
        metric = traj.metrics[k]
        if isinstance(metric, Conformal2D):
            write_field_csv(ScalarField(metric.phi, metric.grid), out / f"field_phi_{k:05d}.csv", cfg.overwrite)
        if traj.densities is not None:
            write_field_csv(traj.densities[k].base, out / f"field_u_{k:05d}.csv", cfg.overwrite)


def cmd_flow(cfg: RunConfig, out: Path) -> int:
    traj = _run_flow(cfg, cfg.conjugate)
    write_csv(out / "trajectory.csv", TRAJECTORY_COLUMNS, trajectory_rows(traj), cfg.overwrite)
    _write_fields(cfg, out, traj)
    log.info("flow: %d snapshots, max volume residual %s", len(traj), fmt(traj.volume_residuals.max()))
    return 0


def cmd_entropy(cfg: RunConfig, out: Path) -> int:
    traj = annotate(_run_flow(cfg, True), PhysicsParams(cfg.m, cfg.hbar))
    residuals = [p.residual for p in monotonicity_scan(traj)] if len(traj) >= 5 else []
    write_csv(out / "entropy.csv", ENTROPY_COLUMNS, trajectory_rows(traj, residuals), cfg.overwrite)
    _write_fields(cfg, out, traj)
    return 0


def cmd_phase(cfg: RunConfig, out: Path) -> int:
    if cfg.topology == "sphere":
        raise ConfigError("phase: topology must be grid-backed (interval, circle or torus2d)")
    metric = _initial_metric(cfg)
    x = metric.grid.coordinates()[0]
    P = ScalarField(1 + cfg.p_amp * np.sin(2 * np.pi * x / cfg.L), metric.grid)
    bc = (0.0, 0.0)
    if cfg.topology == "interval" and cfg.boundary_data == "oracle":
        S = oracle_1d_phase(P, metric.curvature, cfg.oracle_c, cfg.oracle_k, metric.grid, cfg.m)
        bc = (float(S.values[0]), float(S.values[-1]))
    gauge = Gauge.ZERO_MEAN if metric.grid.closed and cfg.kappa == 0 else Gauge.NONE
    system = assemble_weak(P, metric, cfg.m, cfg.kappa, gauge, boundary_values=bc)
    report = solve(system, cfg.tol, cfg.max_iter)
    write_field_csv(report.solution, out / "phase_solution.csv", cfg.overwrite)
    row = report.csv_row()
    write_csv(out / "phase_report.csv", SOLVE_COLUMNS, [tuple(row[c] for c in SOLVE_COLUMNS)], cfg.overwrite)
    return 0


def cmd_spectral(cfg: RunConfig, out: Path) -> int:
    if cfg.topology == "sphere":
        example = RoundSphere(cfg.dim, cfg.c0)
        lam = lambda1_estimate(HomogeneousEinstein(cfg.dim, cfg.c0))
    elif cfg.topology == "torus2d":
        example = FlatTorus(cfg.L)
        grid = ManifoldGrid.torus(cfg.n, cfg.L)
        lam = lambda1_estimate(Conformal2D(grid, np.zeros(grid.shape)))
    elif cfg.topology == "interval":
        example = DirichletInterval(cfg.L, cfg.n)
        grid = ManifoldGrid.interval(cfg.n, cfg.L)
        lam = lambda1_estimate(Prescribed1D(grid, np.zeros(grid.shape)))
    else:
        raise ConfigError("spectral: topology must be torus2d, sphere or interval")
    report = bound_report(example, lam)
    write_csv(out / "spectral.csv", SPECTRAL_COLUMNS, spectral_rows(report), cfg.overwrite)
    return 0 if report.all_hold else 1


def cmd_check(cfg: RunConfig, out: Path) -> int:
    results = checks.run_all()
    rows = [(r.name, fmt(r.value), fmt(r.tolerance), "pass" if r.passed else "FAIL") for r in results]
    write_csv(out / "check.csv", ("name", "value", "tolerance", "status"), rows, cfg.overwrite)
    for r in results:
        log.info("%-40s %s", r.name, "pass" if r.passed else "FAIL")
    return 0 if all(r.passed for r in results) else 1


DISPATCH = {"flow": cmd_flow, "entropy": cmd_entropy, "phase": cmd_phase,
            "spectral": cmd_spectral, "check": cmd_check}


def run(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return DISPATCH[cfg.command](cfg, out)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="ricci-fisher",
                                     description="Ricci flow, entropy, phase-equation and spectral runs.")
    parser.add_argument("config", nargs="?", help="key = value config file")
    parser.add_argument("--command", choices=COMMANDS)
    parser.add_argument("--out", help="output directory (overrides 'out')")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = build_config(args.config, args.overrides, args.command, args.out)
    except ConfigError as exc:
        print(f"ricci-fisher: {exc}", file=sys.stderr)
        return 2
    try:
        return run(cfg)
    except ConfigError as exc:
        print(f"ricci-fisher: {exc}", file=sys.stderr)
        return 2
    except FileExistsError as exc:
        print(f"ricci-fisher: refusing to overwrite {exc.filename} (set overwrite = true)", file=sys.stderr)
        return 2
    except (RicciFisherError, ValueError) as exc:
        print(f"ricci-fisher: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
