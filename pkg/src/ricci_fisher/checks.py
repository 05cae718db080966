"""Self-check suite run by ``ricci-fisher check``.

Each check returns ``(value, tolerance)`` and passes when ``value <= tolerance``;
checks phrased as lower bounds are rewritten as a non-negative shortfall.
Everything is seeded, so repeated runs produce identical numbers.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from .elliptic import (
    assemble_weak,
    l2_error,
    oracle_1d_phase,
    oracle_residual,
    smallest_ritz_value,
    solve,
)
from .entropy import PhysicsParams, fisher_info, mean_quantum_potential, monotonicity_scan, perelman_F
from .flow import FlowConfig, conjugate_heat_backward, flow_run
from .geometry import (
    Conformal2D,
    HomogeneousEinstein,
    ManifoldGrid,
    Prescribed1D,
    ScalarField,
    det_derivative_check,
    flat_torus,
    gradient_sq,
    integrate,
    laplace_beltrami,
    normalized_density,
    scalar_curvature,
)
from .spectral import DirichletInterval, FlatTorus, RoundSphere, bound_report, lambda1_estimate


class CheckResult(NamedTuple):
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tolerance)


def random_spd_pairs(count: int, seed: int = 0, dim: int = 3):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        G = rng.standard_normal((dim, dim))
        A = G @ G.T + dim * np.eye(dim) * rng.uniform(0.1, 1.0)
        H = rng.standard_normal((dim, dim))
        yield A, 0.5 * (H + H.T)


def smooth_random_field(grid: ManifoldGrid, rng: np.random.Generator, modes: int = 4) -> np.ndarray:
    """Random trigonometric polynomial on a periodic grid."""
    coords = grid.coordinates()
    out = np.zeros(grid.shape)
    for _ in range(modes):
        k = rng.integers(-3, 4, size=len(coords))
        phase = rng.uniform(0, 2 * np.pi)
        arg = sum(2 * np.pi * ki * c / L for ki, c, L in zip(k, coords, grid.side_lengths))
        out += rng.standard_normal() * np.cos(arg + phase)
    return out


def random_conformal_torus(n: int, rng: np.random.Generator, amp: float = 0.2) -> Conformal2D:
    grid = ManifoldGrid.torus(n)
    phi = smooth_random_field(grid, rng)
    return Conformal2D(grid, amp * phi / np.abs(phi).max())


def random_positive(grid: ManifoldGrid, rng: np.random.Generator) -> np.ndarray:
    v = smooth_random_field(grid, rng)
    return np.exp(0.5 * v / np.abs(v).max())


def check_determinant() -> CheckResult:
    worst = 0.0
    for A, B in random_spd_pairs(100):
        analytic, numeric = det_derivative_check(A, B)
        worst = max(worst, abs(analytic - numeric) / (1e-6 * (1 + abs(analytic))))
    return CheckResult("determinant_identity_scaled_error", worst, 1.0)


def check_fisher_identities() -> list[CheckResult]:
    rng = np.random.default_rng(1)
    params = PhysicsParams(mass=1.0, hbar=1.0)
    worst_a = worst_b = 0.0
    for _ in range(5):
        metric = random_conformal_torus(32, rng)
        u = normalized_density(random_positive(metric.grid, rng), metric)
        F = perelman_F(u, metric)
        fi = fisher_info(u, metric)
        Ru = integrate(u.base.with_values(scalar_curvature(metric).values * u.values), metric)
        worst_a = max(worst_a, abs(F - fi - Ru) / max(abs(F), 1e-300))
        mq = mean_quantum_potential(u, metric, params)
        target = -params.q_prefactor * fi
        worst_b = max(worst_b, abs(mq - target) / abs(target))
    return [CheckResult("identity_A_F_eq_fisher_plus_Ru", worst_a, 1e-10),
            CheckResult("identity_B_meanQ_eq_fisher", worst_b, 1e-8)]


def check_operator_identities() -> list[CheckResult]:
    rng = np.random.default_rng(2)
    quad = div = sym = 0.0
    for _ in range(10):
        metric = random_conformal_torus(32, rng)
        f = ScalarField(rng.standard_normal(metric.grid.shape), metric.grid)
        g = ScalarField(rng.standard_normal(metric.grid.shape), metric.grid)
        lf = laplace_beltrami(f, metric)
        lg = laplace_beltrami(g, metric)
        lhs = integrate(f.with_values(-lf.values * f.values), metric)
        rhs = integrate(gradient_sq(f, metric), metric)
        quad = max(quad, abs(lhs - rhs) / abs(rhs))
        div = max(div, abs(integrate(lf, metric)) / integrate(f.with_values(np.abs(lf.values)), metric))
        a = integrate(f.with_values(lf.values * g.values), metric)
        b = integrate(f.with_values(f.values * lg.values), metric)
        sym = max(sym, abs(a - b) / max(abs(a), 1.0))
    return [CheckResult("quadratic_identity", quad, 1e-8),
            CheckResult("discrete_divergence_theorem", div, 1e-10),
            CheckResult("laplacian_symmetry", sym, 1e-10)]


def check_sphere_flow() -> list[CheckResult]:
    out = []
    for n in (2, 3):
        t_end = 0.8 * 1.0 / (2 * (n - 1))
        traj = flow_run(HomogeneousEinstein(n, 1.0), FlowConfig(t_end, 1e-3))
        c = np.array([m.scale for m in traj.metrics])
        out.append(CheckResult(f"sphere{n}_scale_error", float(np.abs(c - (1 - 2 * (n - 1) * traj.times)).max()), 1e-8))
        out.append(CheckResult(f"sphere{n}_volume_residual", float(traj.volume_residuals.max()), 1e-8))
        if n == 2:
            u = normalized_density(np.array([1.0]), traj.metrics[-1])
            traj = conjugate_heat_backward(traj, u)
            scan = monotonicity_scan(traj)
            out.append(CheckResult("sphere2_entropy_identity", max(p.residual for p in scan), 1e-6))
            out.append(CheckResult("sphere2_mass_drift", float(np.abs(traj.masses - 1).max()), 1e-6))
    return out


def check_torus_mass() -> CheckResult:
    grid = ManifoldGrid.torus(32)
    x, _ = grid.coordinates()
    traj = flow_run(Conformal2D(grid, 0.1 * np.sin(2 * np.pi * x)), FlowConfig(5e-3, 1e-4))
    u = normalized_density(1 + 0.2 * np.cos(2 * np.pi * x), traj.metrics[-1])
    traj = conjugate_heat_backward(traj, u)
    return CheckResult("torus_mass_drift", float(np.abs(traj.masses - 1).max()), 1e-6)


def oracle_study(ns=(64, 128, 256)) -> tuple[list[float], list[float]]:
    """L2 distance weak-solve vs 1-D oracle and oracle self-residual per resolution."""
    errors, residuals = [], []
    for n in ns:
        grid = ManifoldGrid.interval(n)
        (x,) = grid.coordinates()
        P = 1 + 0.5 * np.sin(2 * np.pi * x)
        R = np.cos(2 * np.pi * x)
        metric = Prescribed1D(grid, R)
        S = oracle_1d_phase(P, R, 0.3, 0.0, grid)
        system = assemble_weak(ScalarField(P, grid), metric, 1.0, 0.0,
                               boundary_values=(S.values[0], S.values[-1]))
        errors.append(l2_error(solve(system).solution, S, metric))
        residuals.append(oracle_residual(S, P, R))
    return errors, residuals


def observed_orders(values: list[float]) -> list[float]:
    return [math.log2(a / b) for a, b in zip(values, values[1:])]


def check_oracle() -> list[CheckResult]:
    errors, residuals = oracle_study()
    return [CheckResult("oracle_weak_solve_order_shortfall", max(0.0, 1.9 - min(observed_orders(errors))), 0.0),
            CheckResult("oracle_residual_order_shortfall", max(0.0, 1.9 - min(observed_orders(residuals))), 0.0)]


def check_coercivity() -> list[CheckResult]:
    out = []
    for grid in (ManifoldGrid.circle(256), ManifoldGrid.interval(256)):
        (x,) = grid.coordinates()
        P = ScalarField(1 + 0.5 * np.sin(2 * np.pi * x), grid)
        metric = Prescribed1D(grid, np.cos(2 * np.pi * x))
        system = assemble_weak(P, metric, 1.0, 0.25)
        ritz = smallest_ritz_value(system)
        report = solve(system, tol=1e-10, max_iter=500)
        name = grid.topology.value
        out.append(CheckResult(f"{name}_ritz_shortfall", max(0.0, 0.25 - ritz), 1e-6))
        out.append(CheckResult(f"{name}_cg_iterations", float(report.iterations), 500.0))
    return out


def check_spectral() -> list[CheckResult]:
    lam_i = lambda1_estimate(Prescribed1D(ManifoldGrid.interval(256), np.zeros(257)))
    lam_t = lambda1_estimate(flat_torus(128))
    reports = [
        bound_report(DirichletInterval(), lam_i),
        bound_report(FlatTorus(1.0), lam_t),
        bound_report(RoundSphere(2, 1.0), 2.0),
        bound_report(RoundSphere(3, 1.0), 3.0),
    ]
    failed = sum(1 for r in reports for c in r.checks if c.holds is False)
    return [CheckResult("lambda1_interval_rel_error", abs(lam_i - math.pi**2) / math.pi**2, 1e-2),
            CheckResult("lambda1_torus_rel_error", abs(lam_t - 4 * math.pi**2) / (4 * math.pi**2), 1e-2),
            CheckResult("eigenvalue_bound_failures", float(failed), 0.0)]


SUITE: tuple[Callable[[], CheckResult | list[CheckResult]], ...] = (
    check_determinant,
    check_fisher_identities,
    check_operator_identities,
    check_sphere_flow,
    check_torus_mass,
    check_oracle,
    check_coercivity,
    check_spectral,
)


def run_all() -> list[CheckResult]:
    results: list[CheckResult] = []
    for check in SUITE:
        r = check()
        results.extend(r if isinstance(r, list) else [r])
    return results
