"""Nash entropy, Perelman's functional, Fisher information and the quantum potential.

Gradients of ``f = -log u`` are taken through the chain rule,
``|grad f|^2 = |grad u|^2 / u^2``, on the same stencil as ``|grad u|^2``.  This
keeps ``F = Fisher + int R u dV`` an algebraic identity at the discrete level.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import PositivityError, StateError
from .flow import FlowTrajectory, time_derivative
from .geometry import (
    DensityField,
    HomogeneousEinstein,
    MetricState,
    ScalarField,
    gradient_sq,
    integrate,
    laplace_beltrami,
    scalar_curvature,
)


@dataclass(frozen=True)
class PhysicsParams:
    mass: float = 1.0
    hbar: float = 1.0

    def __post_init__(self) -> None:
        if not (self.mass > 0 and self.hbar > 0):
            raise ValueError("mass and hbar must be strictly positive")

    @property
    def q_prefactor(self) -> float:
        """hbar^2 / (8 m)."""
        return self.hbar**2 / (8.0 * self.mass)


@dataclass(frozen=True)
class EntropyReport:
    t: float
    nash_N: float
    perelman_F: float
    fisher_info: float
    mean_Q: float
    mass: float
    curvature_integral: float


class MonotonicityPoint(NamedTuple):
    t: float
    dN_dt: float
    F: float
    residual: float
    curvature_nonneg: bool


def _as_density(u: DensityField | ScalarField) -> ScalarField:
    base = u.base if isinstance(u, DensityField) else u
    if not np.all(base.values > 0):
        raise PositivityError("density must be positive at every node")
    return base


def _grad_sq(f: ScalarField, metric: MetricState) -> np.ndarray:
    # uniform fields on the sphere family have no gradient
    if isinstance(metric, HomogeneousEinstein):
        return np.zeros_like(f.values)
    return gradient_sq(f, metric).values


def _laplacian(f: ScalarField, metric: MetricState) -> np.ndarray:
    if isinstance(metric, HomogeneousEinstein):
        return np.zeros_like(f.values)
    return laplace_beltrami(f, metric).values


def nash_entropy(u: DensityField | ScalarField, metric: MetricState) -> float:
    """``int u log u dV``."""
    base = _as_density(u)
    return integrate(base.with_values(base.values * np.log(base.values)), metric)


def fisher_info(u: DensityField | ScalarField, metric: MetricState) -> float:
    """``int |grad u|^2 / u dV``."""
    base = _as_density(u)
    return integrate(base.with_values(_grad_sq(base, metric) / base.values), metric)


def perelman_F(u: DensityField | ScalarField, metric: MetricState) -> float:
    """``int (|grad f|^2 + R) exp(-f) dV`` with ``f = -log u``."""
    base = _as_density(u)
    u_vals = base.values
    grad_f_sq = _grad_sq(base, metric) / u_vals**2
    R = scalar_curvature(metric).values
    return integrate(base.with_values((grad_f_sq + R) * u_vals), metric)


def quantum_potential(P: DensityField | ScalarField, metric: MetricState,
                      params: PhysicsParams = PhysicsParams()) -> ScalarField:
    """Bohm potential ``Q = -(hbar^2/8m) [ |grad P|^2/P^2 - 2 Delta P / P ]``."""
    base = _as_density(P)
    p = base.values
    q = -params.q_prefactor * (_grad_sq(base, metric) / p**2 - 2.0 * _laplacian(base, metric) / p)
    return base.with_values(q)


def mean_quantum_potential(P: DensityField | ScalarField, metric: MetricState,
                           params: PhysicsParams = PhysicsParams()) -> float:
    """``<Q> = int P Q dV``; equals ``-(hbar^2/8m) * fisher_info(P)`` on closed grids."""
    base = _as_density(P)
    q = quantum_potential(base, metric, params)
    return integrate(base.with_values(base.values * q.values), metric)


def entropy_report(u: DensityField | ScalarField, metric: MetricState, t: float = 0.0,
                   params: PhysicsParams = PhysicsParams()) -> EntropyReport:
    base = _as_density(u)
    R = scalar_curvature(metric)
    return EntropyReport(
        t=float(t),
        nash_N=nash_entropy(base, metric),
        perelman_F=perelman_F(base, metric),
        fisher_info=fisher_info(base, metric),
        mean_Q=mean_quantum_potential(base, metric, params),
        mass=integrate(base, metric),
        curvature_integral=integrate(base.with_values(R.values * base.values), metric),
    )


def annotate(traj: FlowTrajectory, params: PhysicsParams = PhysicsParams()) -> FlowTrajectory:
    """Attach an :class:`EntropyReport` to every snapshot of a trajectory with densities."""
    if traj.densities is None:
        raise StateError("trajectory carries no densities")
    reports = tuple(
        entropy_report(u, g, t, params) for t, g, u in zip(traj.times, traj.metrics, traj.densities)
    )
    return replace(traj, reports=reports)


def monotonicity_scan(traj: FlowTrajectory) -> list[MonotonicityPoint]:
    """Compare ``dN/dt`` (five-point centered differences) with ``F`` at ``traj.times[2:-2]``."""
    if traj.densities is None:
        raise StateError("trajectory carries no densities")
    if len(traj) < 5:
        raise StateError("need at least five snapshots")
    if traj.reports:
        N = np.array([r.nash_N for r in traj.reports])
        F = np.array([r.perelman_F for r in traj.reports])
    else:
        N = np.array([nash_entropy(u, g) for g, u in zip(traj.metrics, traj.densities)])
        F = np.array([perelman_F(u, g) for g, u in zip(traj.metrics, traj.densities)])
    min_R = np.array([scalar_curvature(g).values.min() for g in traj.metrics])
    dN = time_derivative(N, traj.spacing)
    out = []
    for k in range(2, len(traj) - 2):
        nonneg = bool(min_R[k - 2:k + 3].min() >= 0)
        out.append(MonotonicityPoint(float(traj.times[k]), float(dN[k]), float(F[k]),
                                     float(abs(dN[k] - F[k])), nonneg))
    return out
