import math

import numpy as np
import pytest

from conftest import wavy_torus
from ricci_fisher.errors import (
    CFLError,
    ExtinctionError,
    PositivityError,
    StateError,
    UnsupportedFamilyError,
)
from ricci_fisher.flow import (
    FlowConfig,
    conjugate_heat_backward,
    f_evolution_residual,
    flow_run,
    parabolic_bound,
    ricci_step,
    sphere_exact,
    time_derivative,
)
from ricci_fisher.geometry import (
    DensityField,
    HomogeneousEinstein,
    ManifoldGrid,
    Prescribed1D,
    ScalarField,
    flat_torus,
    normalized_density,
)


def torus_trajectory(n, dt, t_end, length=1.0, u_amp=0.2):
    metric = wavy_torus(n, length=length)
    traj = flow_run(metric, FlowConfig(t_end, dt))
    x, _ = metric.grid.coordinates()
    u = normalized_density(1 + u_amp * np.cos(2 * np.pi * x), traj.metrics[-1])
    return conjugate_heat_backward(traj, u)


def sphere_trajectory(n=2, dt=1e-3, t_end=0.4):
    traj = flow_run(HomogeneousEinstein(n, 1.0), FlowConfig(t_end, dt))
    return conjugate_heat_backward(traj, normalized_density(np.array([1.0]), traj.metrics[-1]))


class TestFlowConfig:
    def test_whole_steps_required(self):
        with pytest.raises(ValueError):
            FlowConfig(0.105, 0.01).n_steps

    def test_snapshot_multiple(self):
        with pytest.raises(ValueError):
            FlowConfig(0.1, 0.01, snapshot_every=3).n_steps

    @pytest.mark.parametrize("kwargs", [dict(t_end=0.0, dt=0.1), dict(t_end=1.0, dt=0.1, safety_factor=1.5)])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            FlowConfig(**kwargs)


class TestRicciStep:
    def test_flat_fixed_point(self):
        m = flat_torus(16)
        np.testing.assert_array_equal(ricci_step(m, 1e-4).phi, 0.0)

    def test_sphere_linear_decay(self):
        assert ricci_step(HomogeneousEinstein(2, 1.0), 0.1).scale == pytest.approx(0.8, abs=1e-15)

    def test_prescribed_identity(self):
        g = ManifoldGrid.interval(8)
        m = Prescribed1D(g, np.ones(9))
        assert ricci_step(m, 0.5) is m

    def test_cfl_violation(self):
        m = wavy_torus(64)
        with pytest.raises(CFLError) as err:
            ricci_step(m, 2 * parabolic_bound(m))
        assert err.value.bound == pytest.approx(parabolic_bound(m))

    def test_extinction(self):
        with pytest.raises(ExtinctionError) as err:
            ricci_step(HomogeneousEinstein(3, 0.1), 0.05)
        assert err.value.extinction_time == pytest.approx(0.025)

    def test_sup_phi_decays_monotonically(self):
        m = wavy_torus(32)
        dt = 1e-4
        sups = [np.abs(m.phi).max()]
        coarse = m
        for _ in range(100):
            coarse = ricci_step(coarse, dt)
            sups.append(np.abs(coarse.phi).max())
        assert np.all(np.diff(sups) < 0)
        # fine-step reference run over the same interval
        fine = m
        for _ in range(1000):
            fine = ricci_step(fine, dt / 10)
        assert np.abs(fine.phi).max() < sups[0]
        assert np.abs(coarse.phi - fine.phi).max() < 1e-3 * sups[0]


class TestTimeDerivative:
    def test_exact_on_quartic(self):
        t = np.linspace(0, 1, 11)
        v = 1 + t - 2 * t**2 + t**3 - 0.5 * t**4
        d = time_derivative(v, t[1] - t[0])
        exact = 1 - 4 * t + 3 * t**2 - 2 * t**3
        np.testing.assert_allclose(d[2:-2], exact[2:-2], atol=1e-12)

    def test_three_point_ends_exact_on_quadratic(self):
        t = np.linspace(0, 1, 7)
        d = time_derivative(t**2, t[1] - t[0])
        np.testing.assert_allclose(d, 2 * t, atol=1e-12)


class TestFlowRun:
    def test_sphere_volume_linear(self):
        traj = flow_run(HomogeneousEinstein(2, 1.0), FlowConfig(0.4, 1e-3))
        np.testing.assert_allclose(traj.volumes, 4 * math.pi * (1 - 2 * traj.times), rtol=0, atol=1e-8)
        rates = time_derivative(traj.volumes, 1e-3)
        np.testing.assert_allclose(rates, -8 * math.pi, atol=1e-8)
        assert traj.volume_residuals.max() <= 1e-8

    def test_sphere_matches_closed_form(self):
        for n in (2, 3, 4):
            t_end = 0.8 / (2 * (n - 1))
            traj = flow_run(HomogeneousEinstein(n, 1.0), FlowConfig(round(t_end, 3), 1e-3))
            for t, m in zip(traj.times[::50], traj.metrics[::50]):
                c, R, vol = sphere_exact(n, 1.0, t)
                assert m.scale == pytest.approx(c, abs=1e-8)

    def test_flat_torus_static(self):
        traj = flow_run(flat_torus(16), FlowConfig(1e-3, 1e-4))
        for m in traj.metrics:
            np.testing.assert_array_equal(m.phi, 0.0)
        np.testing.assert_array_equal(traj.volume_residuals, 0.0)

    def test_snapshot_every(self):
        traj = flow_run(HomogeneousEinstein(2, 1.0), FlowConfig(0.1, 0.01, snapshot_every=5))
        np.testing.assert_allclose(traj.times, [0.0, 0.05, 0.1])

    def test_volume_residual_refinement(self):
        # residual is O(dt + h^2): halve dt and h^2 together
        coarse = flow_run(wavy_torus(30), FlowConfig(0.01, 2e-4))
        fine = flow_run(wavy_torus(42), FlowConfig(0.01, 1e-4))
        ratio = coarse.volume_residuals.max() / fine.volume_residuals.max()
        assert ratio > 1.7
        assert coarse.volume_residuals.max() < 0.05


class TestSphereExact:
    def test_start(self):
        c, R, v = sphere_exact(2, 1.0, 0.0)
        assert (c, R) == (1.0, 2.0)
        assert v == pytest.approx(4 * math.pi)

    def test_two_dim(self):
        c, R, v = sphere_exact(2, 1.0, 0.25)
        assert c == pytest.approx(0.5)
        assert R == pytest.approx(4.0)
        assert v == pytest.approx(2 * math.pi)

    def test_three_dim(self):
        c, R, v = sphere_exact(3, 1.0, 0.2)
        assert c == pytest.approx(0.2)
        assert R == pytest.approx(30.0)
        assert v == pytest.approx(0.2**1.5 * 2 * math.pi**2)

    def test_extinct(self):
        with pytest.raises(ExtinctionError):
            sphere_exact(2, 1.0, 0.5)


class TestConjugateHeat:
    def test_sphere_uniform_exact(self):
        traj = sphere_trajectory()
        for m, u in zip(traj.metrics, traj.densities):
            assert u.values[0] == pytest.approx(1 / (4 * math.pi * m.scale), rel=1e-12)

    def test_flat_torus_stationary(self):
        metric = flat_torus(16)
        traj = flow_run(metric, FlowConfig(1e-3, 1e-4))
        traj = conjugate_heat_backward(traj, normalized_density(np.ones(metric.grid.shape), metric))
        for u in traj.densities:
            np.testing.assert_allclose(u.values, 1.0, rtol=1e-14)

    @pytest.mark.parametrize("n,dt", [(32, 1e-4), (48, 5e-5)])
    def test_torus_mass_conserved(self, n, dt):
        traj = torus_trajectory(n, dt, 0.01)
        assert np.abs(traj.masses - 1.0).max() <= 1e-6
        assert all(np.all(u.values > 0) for u in traj.densities)

    def test_requires_dense_snapshots(self):
        traj = flow_run(HomogeneousEinstein(2, 1.0), FlowConfig(0.1, 0.01, snapshot_every=2))
        with pytest.raises(StateError):
            conjugate_heat_backward(traj, normalized_density(np.array([1.0]), traj.metrics[-1]))

    def test_prescribed_unsupported(self):
        g = ManifoldGrid.circle(8)
        m = Prescribed1D(g, np.zeros(8))
        traj = flow_run(m, FlowConfig(0.1, 0.01))
        with pytest.raises(UnsupportedFamilyError):
            conjugate_heat_backward(traj, normalized_density(np.ones(8), m))

    def test_non_positive_terminal(self):
        with pytest.raises(PositivityError):
            DensityField(ScalarField(np.array([-1.0]), ManifoldGrid.sphere()))


class TestFEvolution:
    def test_sphere_spatially_constant(self):
        assert max(f_evolution_residual(sphere_trajectory())) <= 1e-6

    def test_static_flat_torus(self):
        metric = flat_torus(16)
        traj = flow_run(metric, FlowConfig(1e-3, 1e-4))
        traj = conjugate_heat_backward(traj, normalized_density(np.ones(metric.grid.shape), metric))
        assert max(f_evolution_residual(traj)) == pytest.approx(0.0, abs=1e-12)

    def test_refinement_halves_residual(self):
        coarse = max(f_evolution_residual(torus_trajectory(32, 1e-4, 0.01)))
        fine = max(f_evolution_residual(torus_trajectory(45, 5e-5, 0.01)))
        assert coarse / fine >= 1.8

    def test_requires_densities(self):
        traj = flow_run(HomogeneousEinstein(2, 1.0), FlowConfig(0.1, 0.01))
        with pytest.raises(StateError):
            f_evolution_residual(traj)
