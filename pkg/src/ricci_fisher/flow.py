"""Ricci flow on the supported metric families and the conjugate heat equation along it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np

from .errors import (
    CFLError,
    ConservationError,
    ExtinctionError,
    GridMismatchError,
    PositivityError,
    StateError,
    UnsupportedFamilyError,
)
from .geometry import (
    Conformal2D,
    DensityField,
    HomogeneousEinstein,
    MetricState,
    Prescribed1D,
    ScalarField,
    div_flux,
    gradient_sq,
    integrate,
    laplace_beltrami,
    scalar_curvature,
    total_volume,
    unit_sphere_volume,
)

if TYPE_CHECKING:
    from .entropy import EntropyReport

MASS_TOL = 1e-6


@dataclass(frozen=True)
class FlowConfig:
    t_end: float
    dt: float
    snapshot_every: int = 1
    safety_factor: float = 1.0

    def __post_init__(self) -> None:
        if not (self.t_end > 0 and self.dt > 0):
            raise ValueError("t_end and dt must be positive")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be a positive integer")
        if not (0 < self.safety_factor <= 1):
            raise ValueError("safety_factor must lie in (0, 1]")

    @property
    def n_steps(self) -> int:
        steps = int(round(self.t_end / self.dt))
        if steps < 1 or abs(steps * self.dt - self.t_end) > 1e-9 * self.t_end:
            raise ValueError(f"t_end={self.t_end!r} is not a whole number of steps dt={self.dt!r}")
        if steps % self.snapshot_every:
            raise ValueError("number of steps must be a multiple of snapshot_every")
        return steps


@dataclass(frozen=True, eq=False)
class FlowTrajectory:
    """Snapshots of g(t) and, after the density pass, of u(t)."""

    times: np.ndarray
    metrics: tuple[MetricState, ...]
    volumes: np.ndarray
    curvature_integrals: np.ndarray
    volume_residuals: np.ndarray
    snapshot_every: int = 1
    densities: tuple[DensityField, ...] | None = None
    masses: np.ndarray | None = None
    reports: tuple[EntropyReport, ...] = field(default=())

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("snapshot times must start at 0 and increase strictly")
        if len(self.metrics) != len(t):
            raise ValueError("one metric per snapshot time")
        if self.densities is not None and len(self.densities) != len(t):
            raise ValueError("one density per snapshot time")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def spacing(self) -> float:
        """Uniform snapshot spacing in t."""
        return float(self.times[1] - self.times[0])


def parabolic_bound(metric: MetricState, safety: float = 1.0) -> float:
    """Largest explicit step allowed for the scalar flow/heat update (inf for ODE families)."""
    if isinstance(metric, Conformal2D):
        inv_h2 = sum(1.0 / h**2 for h in metric.grid.spacing)
        return safety * float(np.exp(2.0 * metric.phi).min()) / (2.0 * inv_h2)
    return math.inf


def _scale_rate(dim: int) -> float:
    return -2.0 * (dim - 1)


def ricci_step(metric: MetricState, dt: float, safety: float = 1.0) -> MetricState:
    """Advance ``d_t g = -2 Ric`` by one step.

    Conformal surfaces use the scalar form ``phi_t = exp(-2 phi) Delta_flat phi``
    with explicit Euler; round spheres integrate ``dc/dt = -2(n-1)`` with RK4.
    The 1-D prescribed family has no intrinsic flow and is returned unchanged.
    """
    if isinstance(metric, Prescribed1D):
        return metric
    if isinstance(metric, HomogeneousEinstein):
        rate = _scale_rate(metric.dim)
        if metric.scale + rate * dt <= 0:
            raise ExtinctionError("sphere scale would become non-positive", metric.scale / -rate)
        f = lambda c: rate  # noqa: E731  autonomous right-hand side
        c = metric.scale
        k1 = f(c)
        k2 = f(c + 0.5 * dt * k1)
        k3 = f(c + 0.5 * dt * k2)
        k4 = f(c + dt * k3)
        return replace(metric, scale=c + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0)
    bound = parabolic_bound(metric, safety)
    if dt > bound:
        raise CFLError(dt, bound)
    phi = metric.phi
    return Conformal2D(metric.grid, phi + dt * np.exp(-2.0 * phi) * div_flux(phi, metric.grid))


def time_derivative(values: np.ndarray, dt: float) -> np.ndarray:
    """d/dt of uniformly sampled values along axis 0.

    Five-point centered differences in the interior, three-point centered next
    to the ends and three-point one-sided at the ends.
    """
    v = np.asarray(values, dtype=float)
    k = len(v)
    if k < 3:
        raise StateError("at least three snapshots are needed for a time derivative")
    d = np.empty_like(v)
    d[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * dt)
    d[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * dt)
    d[1:-1] = (v[2:] - v[:-2]) / (2 * dt)
    if k >= 5:
        d[2:-2] = (-v[4:] + 8 * v[3:-1] - 8 * v[1:-3] + v[:-4]) / (12 * dt)
    return d


def _volume_rates(traj_metrics: list[MetricState], volumes: np.ndarray, dt: float) -> np.ndarray:
    first = traj_metrics[0]
    if isinstance(first, HomogeneousEinstein):
        # the scale ODE is the flow: dVol/dt = dVol/dc * dc/dt
        n = first.dim
        cs = np.array([m.scale for m in traj_metrics])
        return 0.5 * n * cs ** (0.5 * n - 1) * _scale_rate(n) * unit_sphere_volume(n)
    if len(volumes) < 3:
        return np.zeros_like(volumes)
    return time_derivative(volumes, dt)


def flow_run(metric0: MetricState, cfg: FlowConfig) -> FlowTrajectory:
    """Integrate the flow to ``cfg.t_end`` and record the volume evolution residual."""
    steps = cfg.n_steps
    metric = metric0
    metrics = [metric0]
    times = [0.0]
    for k in range(1, steps + 1):
        metric = ricci_step(metric, cfg.dt, cfg.safety_factor)
        if k % cfg.snapshot_every == 0:
            metrics.append(metric)
            times.append(k * cfg.dt)
    volumes = np.array([total_volume(m) for m in metrics])
    curv = np.array([integrate(scalar_curvature(m), m) for m in metrics])
    rates = _volume_rates(metrics, volumes, cfg.dt * cfg.snapshot_every)
    return FlowTrajectory(
        times=np.array(times),
        metrics=tuple(metrics),
        volumes=volumes,
        curvature_integrals=curv,
        volume_residuals=np.abs(rates + curv),
        snapshot_every=cfg.snapshot_every,
    )


def sphere_exact(n: int, c0: float, t: float) -> tuple[float, float, float]:
    """Closed-form round-sphere flow: (scale, scalar curvature, volume) at time t."""
    if n < 2 or c0 <= 0:
        raise ValueError("need n >= 2 and c0 > 0")
    t_ext = c0 / (2.0 * (n - 1))
    if t >= t_ext:
        raise ExtinctionError(f"t={t!r} is at or beyond extinction", t_ext)
    c = c0 - 2.0 * (n - 1) * t
    return c, n * (n - 1) / c, c ** (n / 2) * unit_sphere_volume(n)


def _density_step_back(u: np.ndarray, later: MetricState, earlier: MetricState, ds: float) -> np.ndarray:
    # Conservative form of -d_t u - Delta u + R u = 0: d_s (u sqrt g) = div_flat(sqrt g g^{mn} d_n u),
    # the R u term being carried by the volume change of the stored metrics.
    if isinstance(later, HomogeneousEinstein):
        return u * total_volume(later) / total_volume(earlier)
    if isinstance(later, Conformal2D):
        bound = parabolic_bound(later)
        if ds > bound:
            raise CFLError(ds, bound)
        rho = u * np.exp(2.0 * later.phi) + ds * div_flux(u, later.grid)
        return rho * np.exp(-2.0 * earlier.phi)
    raise UnsupportedFamilyError("conjugate heat flow needs an evolving metric family")


def conjugate_heat_backward(traj: FlowTrajectory, u_terminal: DensityField,
                            mass_tol: float = MASS_TOL) -> FlowTrajectory:
    """Solve ``(-d_t - Delta + R) u = 0`` backwards from ``u_terminal`` at ``t_end``.

    Raises
    ------
    PositivityError
        ``u_terminal`` (or any intermediate u) has non-positive values.
    ConservationError
        ``|mass(t) - mass(t_end)|`` exceeds ``mass_tol`` at some snapshot.
    """
    if traj.snapshot_every != 1:
        raise StateError("conjugate heat pass requires snapshot_every = 1")
    final = traj.metrics[-1]
    if isinstance(final, Prescribed1D):
        raise UnsupportedFamilyError("Prescribed1D carries no Ricci flow to conjugate")
    if u_terminal.grid != final.grid:
        raise GridMismatchError("terminal density and metric live on different grids")
    if not np.all(u_terminal.values > 0):
        raise PositivityError("terminal density must be positive")

    u = np.array(u_terminal.values)
    fields = [u]
    for k in range(len(traj) - 1, 0, -1):
        ds = float(traj.times[k] - traj.times[k - 1])
        u = _density_step_back(u, traj.metrics[k], traj.metrics[k - 1], ds)
        if not np.all(u > 0):
            raise PositivityError(f"density lost positivity at t={traj.times[k - 1]!r}")
        fields.append(u)
    fields.reverse()

    grid = final.grid
    densities = tuple(DensityField(ScalarField(v, grid), u_terminal.normalized) for v in fields)
    masses = np.array([integrate(d.base, m) for d, m in zip(densities, traj.metrics)])
    drift = np.abs(masses - masses[-1])
    worst = int(np.argmax(drift))
    if drift[worst] > mass_tol:
        raise ConservationError(float(drift[worst]), worst)
    return replace(traj, densities=densities, masses=masses)


def f_evolution_residual(traj: FlowTrajectory) -> list[float]:
    """L2 norm of ``d_t f + Delta f - |grad f|^2 + R`` with ``f = -log u``.

    One value per snapshot ``traj.times[2:-2]`` (five-point time differences).
    """
    if traj.densities is None:
        raise StateError("trajectory carries no densities; run conjugate_heat_backward first")
    if len(traj) < 5:
        raise StateError("need at least five snapshots")
    fs = np.array([-np.log(d.values) for d in traj.densities])
    ft = time_derivative(fs, traj.spacing)
    out = []
    for k in range(2, len(traj) - 2):
        metric = traj.metrics[k]
        f = ScalarField(fs[k], metric.grid)
        r = ft[k] + scalar_curvature(metric).values
        if not isinstance(metric, HomogeneousEinstein):
            r = r + laplace_beltrami(f, metric).values - gradient_sq(f, metric).values
        out.append(math.sqrt(integrate(f.with_values(r * r), metric)))
    return out
