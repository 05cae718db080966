import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import wavy_torus
from ricci_fisher.checks import observed_orders, oracle_study
from ricci_fisher.elliptic import (
    Gauge,
    assemble_weak,
    coercivity_report,
    conjugate_gradient,
    l2_error,
    oracle_1d_phase,
    oracle_residual,
    phase_rhs,
    smallest_ritz_value,
    solve,
)
from ricci_fisher.errors import (
    CompatibilityError,
    GridMismatchError,
    IterationError,
    PositivityError,
    UnderdeterminedError,
    UnsupportedFamilyError,
)
from ricci_fisher.geometry import (
    HomogeneousEinstein,
    ManifoldGrid,
    Prescribed1D,
    ScalarField,
    flat_torus,
    gradient_sq,
    integrate,
    stiffness_matrix,
)


def flat_interval(n, length=1.0, R=0.0):
    grid = ManifoldGrid.interval(n, length)
    return grid, Prescribed1D(grid, np.full(n + 1, R))


def sine_P(grid, amp=0.5):
    x = grid.coordinates()[0]
    return ScalarField(1 + amp * np.sin(2 * np.pi * x), grid)


class TestPhaseRhs:
    def test_constant_P_flat(self):
        metric = flat_torus(8)
        np.testing.assert_array_equal(phase_rhs(ScalarField(np.full((8, 8), 3.0), metric.grid), metric).values, 0.0)

    def test_curvature_term(self):
        grid = ManifoldGrid.circle(16)
        metric = Prescribed1D(grid, np.full(16, 2.0))
        np.testing.assert_allclose(phase_rhs(ScalarField(np.full(16, 1.5), grid), metric).values, 3.0)

    def test_quadratic_P(self):
        grid, metric = flat_interval(20)
        (x,) = grid.coordinates()
        np.testing.assert_allclose(phase_rhs(ScalarField(1 + x**2, grid), metric).values, -2.0, atol=1e-10)

    def test_sphere_unsupported(self):
        metric = HomogeneousEinstein(2, 1.0)
        with pytest.raises(UnsupportedFamilyError):
            phase_rhs(ScalarField(np.array([1.0]), metric.grid), metric)


class TestAssemble:
    def test_identity_shift(self):
        grid = ManifoldGrid.circle(16)
        metric = Prescribed1D(grid, np.zeros(16))
        system = assemble_weak(ScalarField(np.ones(16), grid), metric, kappa=1.0)
        np.testing.assert_allclose(system.operator @ np.ones(16), system.weights, atol=1e-14)
        K = system.operator.toarray()
        np.testing.assert_allclose(K, K.T)

    def test_quadratic_form_oracle(self, rng):
        metric = wavy_torus(16)
        P = ScalarField(np.exp(0.3 * rng.standard_normal((16, 16))), metric.grid)
        S = ScalarField(rng.standard_normal((16, 16)), metric.grid)
        m, kappa = 2.0, 0.3
        system = assemble_weak(P, metric, m, kappa)
        s = S.values.ravel()
        form = s @ (system.operator @ s)
        grad = integrate(S.with_values(P.values * gradient_sq(S, metric).values / m), metric)
        mass = integrate(S.with_values(S.values**2), metric)
        assert form == pytest.approx(grad + kappa * mass, rel=1e-12)

    def test_dirichlet_ritz_value(self):
        grid, metric = flat_interval(256)
        system = assemble_weak(ScalarField(np.ones(257), grid), metric, rhs=ScalarField(np.zeros(257), grid))
        assert system.operator.shape == (255, 255)
        assert smallest_ritz_value(system) == pytest.approx(math.pi**2, rel=1e-4)

    def test_underdetermined(self):
        metric = flat_torus(8)
        with pytest.raises(UnderdeterminedError):
            assemble_weak(ScalarField(np.ones((8, 8)), metric.grid), metric, kappa=0.0)

    def test_non_positive_P(self):
        grid, metric = flat_interval(8)
        with pytest.raises(PositivityError):
            assemble_weak(ScalarField(np.zeros(9), grid), metric)

    def test_rhs_grid_mismatch(self):
        grid, metric = flat_interval(8)
        other = ManifoldGrid.interval(16)
        with pytest.raises(GridMismatchError):
            assemble_weak(ScalarField(np.ones(9), grid), metric, rhs=ScalarField(np.ones(17), other))

    @pytest.mark.parametrize("kwargs", [dict(m=0.0), dict(kappa=-1.0)])
    def test_parameter_validation(self, kwargs):
        grid, metric = flat_interval(8)
        with pytest.raises(ValueError):
            assemble_weak(ScalarField(np.ones(9), grid), metric, **kwargs)


class TestSolve:
    def test_zero_rhs(self):
        grid, metric = flat_interval(32)
        system = assemble_weak(ScalarField(np.ones(33), grid), metric, rhs=ScalarField(np.zeros(33), grid))
        report = solve(system)
        assert report.iterations == 0
        np.testing.assert_array_equal(report.solution.values, 0.0)

    def test_manufactured_sine_second_order(self):
        errors = []
        for n in (32, 64, 128):
            grid, metric = flat_interval(n)
            (x,) = grid.coordinates()
            rhs = ScalarField(math.pi**2 * np.sin(math.pi * x), grid)
            report = solve(assemble_weak(ScalarField(np.ones(n + 1), grid), metric, rhs=rhs))
            assert report.residual_norm <= 1e-10
            errors.append(l2_error(report.solution, rhs.with_values(np.sin(math.pi * x)), metric))
        assert min(observed_orders(errors)) > 1.9

    def test_boundary_lifting(self):
        grid, metric = flat_interval(16)
        (x,) = grid.coordinates()
        system = assemble_weak(ScalarField(np.ones(17), grid), metric,
                               rhs=ScalarField(np.zeros(17), grid), boundary_values=(1.0, 3.0))
        np.testing.assert_allclose(solve(system).solution.values, 1 + 2 * x, atol=1e-10)

    def test_zero_mean_gauge_log_P(self):
        # flat torus: -(1/m) div(P grad S) = -Delta P is solved by S = m log P
        errors = []
        for n in (32, 64):
            metric = flat_torus(n)
            P = sine_P(metric.grid)
            system = assemble_weak(P, metric, m=2.0, gauge=Gauge.ZERO_MEAN)
            report = solve(system)
            S = report.solution
            assert integrate(S, metric) == pytest.approx(0.0, abs=1e-12)
            assert abs(report.compatibility_defect) < 1e-13
            ref = 2.0 * np.log(P.values)
            ref -= integrate(P.with_values(ref), metric)
            errors.append(l2_error(S, S.with_values(ref), metric))
        assert errors[0] < 1e-2
        assert observed_orders(errors)[0] > 1.9

    def test_compatibility_error(self):
        metric = wavy_torus(32)
        P = sine_P(metric.grid)
        system = assemble_weak(P, metric, gauge="zero_mean")
        with pytest.raises(CompatibilityError) as err:
            solve(system)
        expected = integrate(P.with_values(phase_rhs(P, metric).values), metric)
        assert err.value.defect == pytest.approx(expected, rel=1e-12)
        assert abs(err.value.defect) > 1e-3

    def test_iteration_error(self):
        grid, metric = flat_interval(256)
        system = assemble_weak(sine_P(grid), metric, rhs=ScalarField(np.ones(257), grid))
        with pytest.raises(IterationError) as err:
            solve(system, max_iter=3)
        assert len(err.value.history) == 3

    def test_report_row(self):
        grid = ManifoldGrid.circle(64)
        metric = Prescribed1D(grid, np.cos(2 * np.pi * grid.coordinates()[0]))
        report = solve(assemble_weak(sine_P(grid), metric, kappa=0.25))
        row = report.csv_row()
        assert list(row) == ["iterations", "residual", "epsilon", "coercivity", "compatibility_defect"]
        assert row["epsilon"] == pytest.approx(0.5, abs=1e-3)
        assert row["coercivity"] == min(row["epsilon"], 0.25)
        assert row["iterations"] > 0 and row["residual"] <= 1e-10


def test_cg_matches_direct(rng):
    A = rng.standard_normal((20, 20))
    A = A @ A.T + 20 * np.eye(20)
    b = rng.standard_normal(20)
    x, its, rel = conjugate_gradient(A, b, tol=1e-12, max_iter=100)
    np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=1e-10)
    assert rel <= 1e-12 and its <= 40


class TestCoercivity:
    def test_kappa_dominates(self):
        grid = ManifoldGrid.circle(64)
        metric = Prescribed1D(grid, np.zeros(64))
        rep = coercivity_report(sine_P(grid), metric, 1.0, 0.25)
        assert rep.epsilon == pytest.approx(0.5, abs=1e-3)
        assert rep.constant == 0.25
        assert rep.friedrich_c is None

    def test_epsilon_dominates(self):
        grid = ManifoldGrid.circle(64)
        metric = Prescribed1D(grid, np.zeros(64))
        rep = coercivity_report(sine_P(grid, 0.9), metric, 2.0, 1.0)
        assert rep.constant == pytest.approx(rep.epsilon / 2.0)

    def test_dirichlet_friedrich_constant(self):
        grid, metric = flat_interval(256)
        rep = coercivity_report(ScalarField(np.ones(257), grid), metric)
        assert rep.friedrich_c == pytest.approx(1 / math.pi**2, rel=1e-4)
        assert rep.constant == pytest.approx(1 / (1 + rep.friedrich_c))

    def test_closed_zero_kappa_poincare(self):
        metric = flat_torus(32)
        rep = coercivity_report(ScalarField(np.ones((32, 32)), metric.grid), metric)
        assert rep.friedrich_c == pytest.approx(1 / (4 * math.pi**2), rel=1e-2)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), kappa=st.sampled_from([0.0, 0.1, 2.0]), m=st.floats(0.5, 3.0))
def test_form_dominates_h1_norm(seed, kappa, m):
    rng = np.random.default_rng(seed)
    grid, metric = flat_interval(48)
    P = ScalarField(np.exp(0.5 * rng.standard_normal(49)), grid)
    system = assemble_weak(P, metric, m, kappa)
    rep = coercivity_report(P, metric, m, kappa)
    S = np.zeros(49)
    S[1:-1] = rng.standard_normal(47)
    s = S[1:-1]
    form = s @ (system.operator @ s)
    w = grid.quadrature_weights()
    h1 = np.sum(w * S**2) + S @ (stiffness_matrix(grid) @ S)
    assert form >= rep.constant * h1 * (1 - 1e-8)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), kappa=st.sampled_from([0.0, 0.5]))
def test_ritz_value_above_coercivity(seed, kappa):
    rng = np.random.default_rng(seed)
    grid, metric = flat_interval(64)
    P = ScalarField(np.exp(0.5 * rng.standard_normal(65)), grid)
    system = assemble_weak(P, metric, 1.0, kappa)
    assert smallest_ritz_value(system) >= coercivity_report(P, metric, 1.0, kappa).constant * (1 - 1e-8)


class TestOracle:
    def test_linear_when_source_free(self):
        grid, _ = flat_interval(10)
        (x,) = grid.coordinates()
        S = oracle_1d_phase(np.ones(11), np.zeros(11), 2.0, 1.0, grid)
        np.testing.assert_allclose(S.values, 2 * x + 1, atol=1e-14)

    def test_log_P(self):
        grid, _ = flat_interval(10)
        (x,) = grid.coordinates()
        S = oracle_1d_phase(np.exp(x), np.zeros(11), 0.0, 0.0, grid, m=3.0)
        np.testing.assert_allclose(S.values, 3 * x, atol=1e-14)

    def test_constant_curvature_closed_form(self):
        # P = 1, R = r: S = -m r x^2 / 2 exactly under trapezoid nesting up to O(h^2)
        grid, _ = flat_interval(200)
        (x,) = grid.coordinates()
        S = oracle_1d_phase(np.ones(201), np.full(201, 4.0), 0.0, 0.0, grid)
        np.testing.assert_allclose(S.values, -2 * x**2, atol=1e-4)

    def test_residual_second_order(self):
        _, residuals = oracle_study()
        assert min(observed_orders(residuals)) > 1.9

    def test_weak_solve_cross_check(self):
        errors, _ = oracle_study()
        assert min(observed_orders(errors)) > 1.9
        assert errors[-1] < 1e-4

    def test_residual_direct(self):
        grid, _ = flat_interval(64)
        (x,) = grid.coordinates()
        P = 1 + 0.5 * np.sin(2 * np.pi * x)
        R = np.cos(2 * np.pi * x)
        S = oracle_1d_phase(P, R, 0.3, 0.0, grid)
        assert oracle_residual(S, P, R) < 1e-2

    def test_requires_interval(self):
        grid = ManifoldGrid.circle(8)
        with pytest.raises(ValueError):
            oracle_1d_phase(np.ones(8), np.zeros(8), 0.0, 0.0, grid)

    def test_shape_mismatch(self):
        grid, _ = flat_interval(8)
        with pytest.raises(GridMismatchError):
            oracle_1d_phase(np.ones(5), np.zeros(9), 0.0, 0.0, grid)
