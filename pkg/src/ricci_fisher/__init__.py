"""Ricci flow, conjugate heat flow, Perelman/Nash entropies, Fisher information
and the weak phase equation on small structured grids."""

from .elliptic import Gauge, SolveReport, WeakSystem, assemble_weak, coercivity_report, oracle_1d_phase, phase_rhs, solve
from .entropy import (
    EntropyReport,
    PhysicsParams,
    fisher_info,
    monotonicity_scan,
    nash_entropy,
    perelman_F,
    quantum_potential,
)
from .flow import FlowConfig, FlowTrajectory, conjugate_heat_backward, f_evolution_residual, flow_run, ricci_step, sphere_exact
from .geometry import (
    Boundary,
    Conformal2D,
    DensityField,
    HomogeneousEinstein,
    ManifoldGrid,
    Prescribed1D,
    ScalarField,
    Topology,
    det_derivative_check,
    gradient_sq,
    integrate,
    laplace_beltrami,
    normalized_density,
    scalar_curvature,
    volume_element,
)
from .spectral import SpectralReport, bound_report, lambda1_estimate

__version__ = "0.1.0"
