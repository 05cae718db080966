"""Weak solution of the phase equation ``(1/m) div(P grad S) = Delta P - R P``.

The discrete bilinear form is

    B(S, psi) = (1/m) int P grad S . grad psi dV + kappa int S psi dV

assembled as a symmetric stiffness matrix over the unknown nodes.  Coercivity
comes from ``P >= eps > 0`` together with ``kappa > 0``, Dirichlet boundary
rows, or the zero-mean gauge on closed grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.integrate import cumulative_trapezoid

from .errors import (
    CompatibilityError,
    GridMismatchError,
    IterationError,
    PositivityError,
    UnderdeterminedError,
    UnsupportedFamilyError,
)
from .geometry import (
    Boundary,
    DensityField,
    HomogeneousEinstein,
    ManifoldGrid,
    MetricState,
    ScalarField,
    Topology,
    div_flux,
    integrate,
    laplace_beltrami,
    scalar_curvature,
    stiffness_matrix,
    volume_element,
)
from .spectral import inverse_power, lambda1_estimate


class Gauge(str, Enum):
    NONE = "none"
    ZERO_MEAN = "zero_mean"


def _positive(P: DensityField | ScalarField, metric: MetricState) -> ScalarField:
    if isinstance(metric, HomogeneousEinstein):
        raise UnsupportedFamilyError("the phase equation is solved on grid-backed metrics only")
    base = P.base if isinstance(P, DensityField) else P
    if base.grid != metric.grid:
        raise GridMismatchError("P and metric live on different grids")
    if not np.all(base.values > 0):
        raise PositivityError(f"P must be positive (min {base.values.min()!r})")
    return base


def phase_rhs(P: DensityField | ScalarField, metric: MetricState) -> ScalarField:
    """``F = R P - Delta P``."""
    base = _positive(P, metric)
    R = scalar_curvature(metric).values
    return base.with_values(R * base.values - laplace_beltrami(base, metric).values)


@dataclass(frozen=True, eq=False)
class WeakSystem:
    operator: sp.csr_matrix
    rhs: np.ndarray
    kappa: float
    mass: float
    gauge: Gauge
    boundary: Boundary
    metric: MetricState
    P: ScalarField
    source: ScalarField
    weights: np.ndarray
    active: np.ndarray
    lift: np.ndarray

    @property
    def grid(self) -> ManifoldGrid:
        return self.metric.grid


def assemble_weak(P: DensityField | ScalarField, metric: MetricState, m: float = 1.0,
                  kappa: float = 0.0, gauge: Gauge | str = Gauge.NONE,
                  rhs: ScalarField | None = None,
                  boundary_values: tuple[float, float] = (0.0, 0.0)) -> WeakSystem:
    """Assemble ``-(1/m) div(P grad S) + kappa S = F`` in weak form.

    ``rhs`` defaults to :func:`phase_rhs`.  On intervals the endpoint values of
    S are fixed to ``boundary_values`` and eliminated from the system.
    """
    base = _positive(P, metric)
    gauge = Gauge(gauge)
    if m <= 0:
        raise ValueError("mass m must be positive")
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    grid = metric.grid
    if grid.closed and kappa == 0 and gauge is Gauge.NONE:
        raise UnderdeterminedError("kappa = 0 on a closed grid needs the zero_mean gauge")

    source = phase_rhs(base, metric) if rhs is None else rhs
    if source.grid != grid:
        raise GridMismatchError("rhs and metric live on different grids")

    weights = (volume_element(metric).values * grid.quadrature_weights()).ravel()
    K = stiffness_matrix(grid, base.values / m) + kappa * sp.diags(weights)
    K = K.tocsr()
    b = weights * source.values.ravel()

    lift = np.zeros(grid.size)
    if grid.topology is Topology.INTERVAL:
        lift[0], lift[-1] = boundary_values
        active = np.flatnonzero(grid.interior_mask().ravel())
        b = b[active] - K[active] @ lift
        K = K[active][:, active]
    else:
        active = np.arange(grid.size)
    return WeakSystem(K.tocsr(), b, float(kappa), float(m), gauge, grid.boundary, metric,
                      base, source, weights, active, lift)


@dataclass(frozen=True)
class CoercivityReport:
    epsilon: float
    constant: float
    friedrich_c: float | None


def coercivity_report(P: DensityField | ScalarField, metric: MetricState, m: float = 1.0,
                      kappa: float = 0.0) -> CoercivityReport:
    """Lower bound for ``B(S, S) / ||S||^2``.

    ``kappa > 0`` gives ``min(eps/m, kappa)``; otherwise the Friedrich
    (Dirichlet) or Poincare-Wirtinger (mean-zero, closed) constant
    ``c = 1/lambda_1`` gives ``eps / (m (1 + c))``.
    """
    base = _positive(P, metric)
    eps = float(base.values.min())
    c = None
    if not metric.grid.closed or kappa == 0:
        c = 1.0 / lambda1_estimate(metric)
    if kappa > 0:
        constant = min(eps / m, kappa)
    else:
        constant = eps / (m * (1.0 + c))
    return CoercivityReport(eps, constant, c)


@dataclass(frozen=True)
class SolveReport:
    solution: ScalarField
    iterations: int
    residual_norm: float
    epsilon_P: float
    coercivity_constant: float
    compatibility_defect: float

    def csv_row(self) -> dict[str, float]:
        return {
            "iterations": self.iterations,
            "residual": self.residual_norm,
            "epsilon": self.epsilon_P,
            "coercivity": self.coercivity_constant,
            "compatibility_defect": self.compatibility_defect,
        }


def conjugate_gradient(A: sp.spmatrix, b: np.ndarray, tol: float = 1e-10, max_iter: int = 1000,
                       project=None) -> tuple[np.ndarray, int, float]:
    """Unpreconditioned CG for SPD ``A`` (SPD on the range of ``project`` when given).

    Convergence is declared on the true relative residual ``||b - Ax|| / ||b||``;
    when the recursive residual drops below ``tol`` but the true one does not,
    the iteration restarts from the true residual.
    """
    proj = project or (lambda v: v)
    x = np.zeros_like(b)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return x, 0, 0.0
    r = proj(b.copy())
    p = r.copy()
    rs = float(r @ r)
    history: list[float] = []
    for it in range(1, max_iter + 1):
        Ap = A @ p
        alpha = rs / float(p @ Ap)
        x += alpha * p
        r = proj(r - alpha * Ap)
        rs_new = float(r @ r)
        history.append(math.sqrt(rs_new) / bnorm)
        if history[-1] <= tol:
            r = proj(b - A @ x)
            rs_new = float(r @ r)
            true_rel = math.sqrt(rs_new) / bnorm
            if true_rel <= tol:
                return x, it, true_rel
            p = r.copy()
            rs = rs_new
            continue
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise IterationError(f"CG did not reach {tol!r} in {max_iter} iterations", history)


def solve(system: WeakSystem, tol: float = 1e-10, max_iter: int | None = None) -> SolveReport:
    """Conjugate-gradient solve of an assembled :class:`WeakSystem`.

    Under the zero-mean gauge (closed grid, ``kappa = 0``) the right-hand side
    must satisfy ``|int F dV| <= tol * int |F| dV``; the returned solution has
    zero Riemannian mean.
    """
    grid = system.grid
    b = system.rhs
    defect = float(np.sum(system.weights * system.source.values.ravel()))
    project = None
    gauged = grid.closed and system.kappa == 0
    if gauged:
        threshold = tol * float(np.sum(np.abs(b)))
        if abs(float(np.sum(b))) > threshold:
            raise CompatibilityError(defect, threshold)

        def project(v: np.ndarray) -> np.ndarray:
            return v - v.mean()

    x, iterations, rel = conjugate_gradient(system.operator, b, tol, max_iter or 10 * len(b), project)

    S = system.lift.copy()
    S[system.active] = x
    if gauged:
        S -= np.sum(system.weights * S) / np.sum(system.weights)
    coer = coercivity_report(system.P, system.metric, system.mass, system.kappa)
    return SolveReport(
        solution=ScalarField(S.reshape(grid.shape), grid),
        iterations=iterations,
        residual_norm=rel,
        epsilon_P=coer.epsilon,
        coercivity_constant=coer.constant,
        compatibility_defect=defect,
    )


def smallest_ritz_value(system: WeakSystem, tol: float = 1e-10) -> float:
    """Smallest eigenvalue of the operator with respect to the L2(dV) inner product."""
    mass = system.weights[system.active]
    deflate = system.grid.closed and system.kappa == 0
    lam, _, _ = inverse_power(system.operator, mass, deflate_constants=deflate, tol=tol)
    return lam


# ---------------------------------------------------------------------------
# 1-D closed form


def oracle_1d_phase(P: np.ndarray | ScalarField, R: np.ndarray | ScalarField, c: float, k: float,
                    grid: ManifoldGrid, m: float = 1.0) -> ScalarField:
    """Closed-form solution of ``(P S')' = m (P'' - R P)`` on an interval.

    ``S = m (log P - int_0^x (1/P) int_0^y R P) + c int_0^x 1/P + k``, nested
    integrals by cumulative trapezoid from the left endpoint.
    """
    if grid.topology is not Topology.INTERVAL:
        raise ValueError("the 1-D oracle needs an interval grid")
    p = np.asarray(P.values if isinstance(P, ScalarField) else P, dtype=float)
    r = np.asarray(R.values if isinstance(R, ScalarField) else R, dtype=float)
    if p.shape != grid.shape or r.shape != grid.shape:
        raise GridMismatchError("P and R must be sampled on the grid nodes")
    if not np.all(p > 0):
        raise PositivityError("P must be positive")
    (x,) = grid.coordinates()
    inner = cumulative_trapezoid(r * p, x, initial=0.0)
    outer = cumulative_trapezoid(inner / p, x, initial=0.0)
    inv_p = cumulative_trapezoid(1.0 / p, x, initial=0.0)
    return ScalarField(m * (np.log(p) - outer) + c * inv_p + k, grid)


def oracle_residual(S: ScalarField, P: np.ndarray, R: np.ndarray, m: float = 1.0) -> float:
    """Interior L2 norm of ``(P S')' - m (P'' - R P)`` on the conservative stencil."""
    grid = S.grid
    p = np.asarray(P, dtype=float)
    res = div_flux(S.values, grid, p) - m * (div_flux(p, grid) - np.asarray(R) * p)
    (h,) = grid.spacing
    return float(math.sqrt(h * np.sum(res[1:-1] ** 2)))


def l2_error(a: ScalarField, b: ScalarField, metric: MetricState) -> float:
    d = a.values - b.values
    return math.sqrt(integrate(a.with_values(d * d), metric))
