"""Discrete manifolds, metric families and the differential operators on them.

All stencils are second-order conservative finite differences.  The Laplacian
is the trace Laplacian ``div grad`` (negative semidefinite).  Edge coefficients
are arithmetic means of node values, which makes three identities hold to
roundoff on closed grids:

* ``integrate(laplace_beltrami(f)) == 0``
* ``integrate(-laplace_beltrami(f) * f) == integrate(gradient_sq(f))``
* ``integrate(a * gradient_sq(f)) == f @ stiffness_matrix(grid, a) @ f``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

from .errors import GridMismatchError, PositivityError, SingularMatrixError, UnsupportedFamilyError


class Topology(str, Enum):
    INTERVAL = "interval"
    CIRCLE = "circle"
    TORUS2D = "torus2d"
    SPHERE_FAMILY = "sphere_family"


class Boundary(str, Enum):
    PERIODIC = "periodic"
    DIRICHLET_ZERO = "dirichlet_zero"


@dataclass(frozen=True)
class ManifoldGrid:
    """Structured chart of a manifold.

    ``node_counts`` are cell counts.  Periodic axes carry exactly that many
    nodes; an interval with ``n`` cells carries ``n + 1`` nodes including both
    endpoints.  The sphere family has no grid at all: fields on it are single
    spatially uniform values.
    """

    topology: Topology
    node_counts: tuple[int, ...]
    side_lengths: tuple[float, ...]
    boundary: Boundary

    def __post_init__(self) -> None:
        object.__setattr__(self, "topology", Topology(self.topology))
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        object.__setattr__(self, "node_counts", tuple(int(n) for n in self.node_counts))
        object.__setattr__(self, "side_lengths", tuple(float(s) for s in self.side_lengths))
        if self.topology is Topology.SPHERE_FAMILY:
            return
        expected = 2 if self.topology is Topology.TORUS2D else 1
        if len(self.node_counts) != expected or len(self.side_lengths) != expected:
            raise ValueError(f"{self.topology.value} needs {expected} axis entries")
        if any(n < 3 for n in self.node_counts):
            raise ValueError("node_counts must be >= 3 on every axis")
        if any(not (s > 0 and math.isfinite(s)) for s in self.side_lengths):
            raise ValueError("side_lengths must be positive")
        if self.topology is Topology.INTERVAL and self.boundary is not Boundary.DIRICHLET_ZERO:
            raise ValueError("interval grids use dirichlet_zero boundaries")
        if self.topology is not Topology.INTERVAL and self.boundary is not Boundary.PERIODIC:
            raise ValueError(f"{self.topology.value} grids are periodic")

    @classmethod
    def interval(cls, n: int, length: float = 1.0) -> ManifoldGrid:
        return cls(Topology.INTERVAL, (n,), (length,), Boundary.DIRICHLET_ZERO)

    @classmethod
    def circle(cls, n: int, length: float = 1.0) -> ManifoldGrid:
        return cls(Topology.CIRCLE, (n,), (length,), Boundary.PERIODIC)

    @classmethod
    def torus(cls, n: int, length: float = 1.0, ny: int | None = None,
              width: float | None = None) -> ManifoldGrid:
        return cls(Topology.TORUS2D, (n, ny or n), (length, width or length), Boundary.PERIODIC)

    @classmethod
    def sphere(cls) -> ManifoldGrid:
        return cls(Topology.SPHERE_FAMILY, (), (), Boundary.PERIODIC)

    @property
    def has_grid(self) -> bool:
        return self.topology is not Topology.SPHERE_FAMILY

    @property
    def closed(self) -> bool:
        return self.boundary is Boundary.PERIODIC

    @property
    def ndim(self) -> int:
        return len(self.node_counts)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(s / n for s, n in zip(self.side_lengths, self.node_counts))

    @property
    def shape(self) -> tuple[int, ...]:
        if not self.has_grid:
            return (1,)
        if self.topology is Topology.INTERVAL:
            return (self.node_counts[0] + 1,)
        return self.node_counts

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Node coordinates, one array of ``shape`` per axis (``ij`` indexing)."""
        _require_grid(self)
        axes = [np.arange(m) * h for m, h in zip(self.shape, self.spacing)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def quadrature_weights(self) -> np.ndarray:
        """Flat-measure node weights: uniform on periodic grids, trapezoid on intervals."""
        _require_grid(self)
        w = np.full(self.shape, float(np.prod(self.spacing)))
        if self.topology is Topology.INTERVAL:
            w[0] *= 0.5
            w[-1] *= 0.5
        return w

    def interior_mask(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        if self.topology is Topology.INTERVAL:
            mask[0] = mask[-1] = False
        return mask


def _require_grid(grid: ManifoldGrid) -> None:
    if not grid.has_grid:
        raise UnsupportedFamilyError("sphere_family carries no grid")


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Node-sampled real function on a grid (read-only values)."""

    values: np.ndarray
    grid: ManifoldGrid

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.shape == () and not self.grid.has_grid:
            v = v.reshape(1)
        if v.shape != self.grid.shape:
            raise GridMismatchError(f"values of shape {v.shape} do not match grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("scalar field has non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: ManifoldGrid, fn: Callable[..., np.ndarray]) -> ScalarField:
        coords = grid.coordinates()
        return cls(np.broadcast_to(fn(*coords), grid.shape), grid)

    @classmethod
    def constant(cls, grid: ManifoldGrid, value: float) -> ScalarField:
        return cls(np.full(grid.shape, float(value)), grid)

    def with_values(self, values: np.ndarray) -> ScalarField:
        return ScalarField(values, self.grid)


@dataclass(frozen=True, eq=False)
class DensityField:
    """Positive density ``u = exp(-f)``; ``normalized`` records that its mass was set to 1."""

    base: ScalarField
    normalized: bool = False

    def __post_init__(self) -> None:
        if not np.all(self.base.values > 0):
            raise PositivityError(f"density has non-positive values (min {self.base.values.min()!r})")

    @property
    def values(self) -> np.ndarray:
        return self.base.values

    @property
    def grid(self) -> ManifoldGrid:
        return self.base.grid


# ---------------------------------------------------------------------------
# Metric families


@dataclass(frozen=True, eq=False)
class Prescribed1D:
    """Flat line element on an interval or circle with a prescribed curvature field."""

    grid: ManifoldGrid
    curvature: np.ndarray

    def __post_init__(self) -> None:
        if self.grid.topology not in (Topology.INTERVAL, Topology.CIRCLE):
            raise ValueError("Prescribed1D lives on an interval or circle grid")
        object.__setattr__(self, "curvature", ScalarField(self.curvature, self.grid).values)


@dataclass(frozen=True, eq=False)
class Conformal2D:
    """Metric ``exp(2 phi) * flat`` on a 2-D torus."""

    grid: ManifoldGrid
    phi: np.ndarray

    def __post_init__(self) -> None:
        if self.grid.topology is not Topology.TORUS2D:
            raise ValueError("Conformal2D lives on a torus2d grid")
        phi = ScalarField(self.phi, self.grid).values
        w = np.exp(2.0 * phi)
        if not (np.all(np.isfinite(w)) and np.all(w > 0)):
            raise ValueError("conformal factor exp(2 phi) must be finite and positive")
        object.__setattr__(self, "phi", phi)


@dataclass(frozen=True)
class HomogeneousEinstein:
    """``scale`` times the unit round n-sphere."""

    dim: int
    scale: float
    grid: ManifoldGrid = field(default_factory=ManifoldGrid.sphere, repr=False)

    def __post_init__(self) -> None:
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError("sphere dimension must be an integer >= 2")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError("sphere scale must be positive")


MetricState = Union[Prescribed1D, Conformal2D, HomogeneousEinstein]


def flat_torus(n: int, length: float = 1.0) -> Conformal2D:
    grid = ManifoldGrid.torus(n, length)
    return Conformal2D(grid, np.zeros(grid.shape))


def unit_sphere_volume(n: int) -> float:
    """Volume of the unit round n-sphere, 2 pi^((n+1)/2) / Gamma((n+1)/2)."""
    return 2.0 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2)


def _grid_metric(metric: MetricState) -> None:
    if isinstance(metric, HomogeneousEinstein):
        raise UnsupportedFamilyError("sphere_family is an analytic family without a grid")


def _check_same_grid(f: ScalarField, metric: MetricState) -> None:
    if f.grid != metric.grid:
        raise GridMismatchError("field and metric are defined on different grids")


# ---------------------------------------------------------------------------
# Flat conservative stencils


def div_flux(values: np.ndarray, grid: ManifoldGrid, coeff: np.ndarray | None = None) -> np.ndarray:
    """Flat ``div(coeff * grad v)`` in conservative flux form.

    Edge coefficients are arithmetic means.  On intervals the two endpoint
    values are linearly extrapolated from the interior (they are not part of
    any Dirichlet problem).
    """
    _require_grid(grid)
    v = np.asarray(values, dtype=float)
    a = np.ones_like(v) if coeff is None else np.asarray(coeff, dtype=float)
    if grid.topology is Topology.INTERVAL:
        (h,) = grid.spacing
        a_edge = 0.5 * (a[1:] + a[:-1])
        flux = a_edge * np.diff(v) / h
        out = np.empty_like(v)
        out[1:-1] = np.diff(flux) / h
        out[0] = 2.0 * out[1] - out[2]
        out[-1] = 2.0 * out[-2] - out[-3]
        return out
    out = np.zeros_like(v)
    for axis, h in enumerate(grid.spacing):
        a_edge = 0.5 * (a + np.roll(a, -1, axis))
        flux = a_edge * (np.roll(v, -1, axis) - v) / h
        out += (flux - np.roll(flux, 1, axis)) / h
    return out


def flat_gradient_sq(values: np.ndarray, grid: ManifoldGrid) -> np.ndarray:
    """Node-wise flat |grad v|^2 as the mean of squared forward and backward differences."""
    _require_grid(grid)
    v = np.asarray(values, dtype=float)
    if grid.topology is Topology.INTERVAL:
        (h,) = grid.spacing
        d2 = (np.diff(v) / h) ** 2
        out = np.empty_like(v)
        out[1:-1] = 0.5 * (d2[:-1] + d2[1:])
        out[0] = d2[0]
        out[-1] = d2[-1]
        return out
    out = np.zeros_like(v)
    for axis, h in enumerate(grid.spacing):
        fwd = (np.roll(v, -1, axis) - v) / h
        out += 0.5 * (fwd**2 + np.roll(fwd, 1, axis) ** 2)
    return out


def stiffness_matrix(grid: ManifoldGrid, coeff: np.ndarray | None = None) -> sp.csr_matrix:
    """Sparse symmetric matrix ``K`` with ``S @ K @ S = sum_edges a_e (dS)^2 h^(d-2)``.

    ``K @ S`` equals ``-weights * div_flux(S, coeff)`` at every node that has a
    full stencil.  Rows are in C order of ``grid.shape``.
    """
    _require_grid(grid)
    a = np.ones(grid.shape) if coeff is None else np.asarray(coeff, dtype=float)
    cell = float(np.prod(grid.spacing))
    idx = np.arange(grid.size).reshape(grid.shape)
    rows, cols, data = [], [], []
    for axis, h in enumerate(grid.spacing):
        if grid.topology is Topology.INTERVAL:
            i, j = idx[:-1], idx[1:]
            w = 0.5 * (a[:-1] + a[1:])
        else:
            i, j = idx, np.roll(idx, -1, axis)
            w = 0.5 * (a + np.roll(a, -1, axis))
        i, j, w = i.ravel(), j.ravel(), w.ravel() * cell / h**2
        rows += [i, j, i, j]
        cols += [i, j, j, i]
        data += [w, w, -w, -w]
    K = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.size, grid.size),
    )
    return K.tocsr()


# ---------------------------------------------------------------------------
# Geometric operations


def volume_element(metric: MetricState) -> ScalarField:
    """sqrt|g| per node."""
    _grid_metric(metric)
    if isinstance(metric, Conformal2D):
        return ScalarField(np.exp(2.0 * metric.phi), metric.grid)
    return ScalarField.constant(metric.grid, 1.0)


def total_volume(metric: MetricState) -> float:
    if isinstance(metric, HomogeneousEinstein):
        return metric.scale ** (metric.dim / 2) * unit_sphere_volume(metric.dim)
    return float(np.sum(volume_element(metric).values * metric.grid.quadrature_weights()))


def integrate(f: ScalarField, metric: MetricState) -> float:
    """Riemannian integral of ``f`` with the node-weight rule of the grid.

    On the sphere family ``f`` is a single uniform value and the integral is
    that value times the volume.
    """
    _check_same_grid(f, metric)
    if isinstance(metric, HomogeneousEinstein):
        return float(f.values[0]) * total_volume(metric)
    w = volume_element(metric).values * metric.grid.quadrature_weights()
    return float(np.sum(f.values * w))


def laplace_beltrami(f: ScalarField, metric: MetricState) -> ScalarField:
    _grid_metric(metric)
    _check_same_grid(f, metric)
    lap = div_flux(f.values, metric.grid)
    if isinstance(metric, Conformal2D):
        lap = np.exp(-2.0 * metric.phi) * lap
    return ScalarField(lap, metric.grid)


def gradient_sq(f: ScalarField, metric: MetricState) -> ScalarField:
    """g^{mn} d_m f d_n f per node; the stencil pairs with :func:`laplace_beltrami`."""
    _grid_metric(metric)
    _check_same_grid(f, metric)
    g2 = flat_gradient_sq(f.values, metric.grid)
    if isinstance(metric, Conformal2D):
        g2 = np.exp(-2.0 * metric.phi) * g2
    return ScalarField(g2, metric.grid)


def scalar_curvature(metric: MetricState) -> ScalarField:
    if isinstance(metric, HomogeneousEinstein):
        n = metric.dim
        return ScalarField(np.array([n * (n - 1) / metric.scale]), metric.grid)
    if isinstance(metric, Prescribed1D):
        return ScalarField(metric.curvature, metric.grid)
    # R = -2 exp(-2 phi) Delta_flat phi for g = exp(2 phi) * flat
    return ScalarField(-2.0 * np.exp(-2.0 * metric.phi) * div_flux(metric.phi, metric.grid), metric.grid)


def det_derivative_check(A: np.ndarray, B: np.ndarray, step: float = 1e-5) -> tuple[float, float]:
    """d/ds det(A + sB) at s=0: ``trace(A^-1 B) det A`` and a central difference."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
        raise GridMismatchError("A and B must be square matrices of the same shape")
    if np.linalg.cond(A) > 1.0 / np.finfo(float).eps:
        raise SingularMatrixError("A is singular to working precision")
    analytic = float(np.trace(np.linalg.solve(A, B)) * np.linalg.det(A))
    numeric = float((np.linalg.det(A + step * B) - np.linalg.det(A - step * B)) / (2.0 * step))
    return analytic, numeric


def normalized_density(values: np.ndarray | ScalarField, metric: MetricState) -> DensityField:
    """Scale positive node values so that their Riemannian mass is 1."""
    f = values if isinstance(values, ScalarField) else ScalarField(values, metric.grid)
    if not np.all(f.values > 0):
        raise PositivityError("density values must be positive")
    mass = integrate(f, metric)
    return DensityField(f.with_values(f.values / mass), normalized=True)
