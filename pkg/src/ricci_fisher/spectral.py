"""First eigenvalue of -Delta by inverse power iteration and classical lower bounds for it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import IterationError, UnsupportedFamilyError
from .geometry import (
    HomogeneousEinstein,
    ManifoldGrid,
    MetricState,
    ScalarField,
    flat_gradient_sq,
    stiffness_matrix,
    volume_element,
)


def inverse_power(K: sp.spmatrix, mass: np.ndarray, *, deflate_constants: bool = False,
                  tol: float = 1e-10, max_iter: int = 1000,
                  seed: int = 0) -> tuple[float, np.ndarray, int]:
    """Smallest eigenpair of the pencil ``K v = lam diag(mass) v``.

    With ``deflate_constants`` the constant nullspace of ``K`` is removed: the
    iterate is kept mass-orthogonal to constants and the singular solve is done
    on the system with node 0 pinned (exact for compatible right-hand sides).
    Stops when successive Rayleigh quotients differ by less than ``tol``.
    """
    K = sp.csc_matrix(K)
    m = np.asarray(mass, dtype=float).ravel()
    n = K.shape[0]
    if deflate_constants:
        lu = splu(K[1:, 1:].tocsc())
        total = m.sum()

        def project(y: np.ndarray) -> np.ndarray:
            return y - (m @ y) / total

        def solve(b: np.ndarray) -> np.ndarray:
            y = np.zeros(n)
            y[1:] = lu.solve(b[1:])
            return project(y)
    else:
        lu = splu(K)

        def project(y: np.ndarray) -> np.ndarray:
            return y

        solve = lu.solve

    x = project(np.random.default_rng(seed).standard_normal(n))
    x /= math.sqrt(x @ (m * x))
    lam_old = float(x @ (K @ x))
    for it in range(1, max_iter + 1):
        y = solve(m * x)
        x = y / math.sqrt(y @ (m * y))
        lam = float(x @ (K @ x))
        if abs(lam - lam_old) < tol:
            return lam, x, it
        lam_old = lam
    raise IterationError(f"inverse power iteration did not converge in {max_iter} steps", [lam_old])


def laplacian_pencil(metric: MetricState) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
    """``(K, mass, active)``: stiffness and lumped mass of -Delta restricted to the unknown nodes."""
    if isinstance(metric, HomogeneousEinstein):
        raise UnsupportedFamilyError("sphere eigenvalues are analytic; no grid operator exists")
    grid = metric.grid
    # sqrt|g| g^{mn} is the identity for flat 1-D and conformal 2-D metrics
    K = stiffness_matrix(grid)
    mass = (volume_element(metric).values * grid.quadrature_weights()).ravel()
    active = np.flatnonzero(grid.interior_mask().ravel())
    if not grid.closed:
        K = K[active][:, active]
        mass = mass[active]
    return K.tocsr(), mass, active


def first_eigenpair(metric: MetricState, tol: float = 1e-10,
                    max_iter: int = 1000) -> tuple[float, ScalarField]:
    """First Dirichlet (or first nonzero periodic) eigenvalue of -Delta and its eigenfunction."""
    K, mass, active = laplacian_pencil(metric)
    lam, vec, _ = inverse_power(K, mass, deflate_constants=metric.grid.closed,
                                tol=tol, max_iter=max_iter)
    full = np.zeros(metric.grid.size)
    full[active] = vec
    return lam, ScalarField(full.reshape(metric.grid.shape), metric.grid)


def lambda1_estimate(metric: MetricState, tol: float = 1e-10, max_iter: int = 1000) -> float:
    if isinstance(metric, HomogeneousEinstein):
        return metric.dim / metric.scale
    return first_eigenpair(metric, tol, max_iter)[0]


# ---------------------------------------------------------------------------
# Bound checks


@dataclass(frozen=True)
class FlatTorus:
    length: float = 1.0


@dataclass(frozen=True)
class RoundSphere:
    dim: int = 2
    scale: float = 1.0


@dataclass(frozen=True)
class DirichletInterval:
    length: float = 1.0
    n: int = 256
    samples: int = 10
    seed: int = 0


SpectralExample = Union[FlatTorus, RoundSphere, DirichletInterval]


@dataclass(frozen=True)
class BoundCheck:
    """One bound.  ``holds`` is None when the bound could not be evaluated."""

    name: str
    bound: float
    holds: bool | None


@dataclass(frozen=True)
class SpectralReport:
    lambda1: float
    method: str
    diameter: float
    curvature_bound: float
    checks: tuple[BoundCheck, ...] = field(default=())

    @property
    def all_hold(self) -> bool:
        return all(c.holds is not False for c in self.checks)


def _lower_bound(name: str, bound: float, lam: float, rtol: float = 1e-12) -> BoundCheck:
    return BoundCheck(name, bound, bool(bound <= lam * (1.0 + rtol)))


def _friedrich_samples(example: DirichletInterval) -> np.ndarray:
    grid = ManifoldGrid.interval(example.n, example.length)
    (x,) = grid.coordinates()
    rng = np.random.default_rng(example.seed)
    fields = []
    for _ in range(example.samples):
        modes = np.arange(1, 9)
        coef = rng.standard_normal(len(modes)) / modes**2
        psi = np.sin(np.pi * np.outer(modes, x) / example.length).T @ coef
        noise = rng.standard_normal(x.shape) * 1e-2
        noise[0] = noise[-1] = 0.0
        fields.append(psi + noise)
    return np.array(fields)


def bound_report(example: SpectralExample, lambda1: float) -> SpectralReport:
    """Evaluate the eigenvalue bounds that apply to ``example`` against ``lambda1``.

    Friedrich rows report ``lambda1 * max ||psi||^2 / ||grad psi||^2``, which
    is at most 1 exactly when ``||psi||^2 <= ||grad psi||^2 / lambda1``.
    """
    if isinstance(example, FlatTorus):
        d = example.length * math.sqrt(2.0) / 2.0
        checks = (_lower_bound("zhong_yang", math.pi**2 / d**2, lambda1),)
        return SpectralReport(lambda1, "inverse_power", d, 0.0, checks)

    if isinstance(example, RoundSphere):
        n, c = example.dim, example.scale
        d = math.pi * math.sqrt(c)
        K = 1.0 / c  # Ric = (n-1) K g
        checks = [
            _lower_bound("zhong_yang", math.pi**2 / d**2, lambda1),
            _lower_bound("lichnerowicz", n * K, lambda1),
        ]
        if n == 3:
            # needs the nodal-domain inradius, which is not available here
            checks.append(BoundCheck("ling_refined", math.nan, None))
        return SpectralReport(lambda1, "analytic", d, K, tuple(checks))

    if isinstance(example, DirichletInterval):
        L = example.length
        grid = ManifoldGrid.interval(example.n, L)
        w = grid.quadrature_weights()
        ratios = []
        for psi in _friedrich_samples(example):
            l2 = float(np.sum(w * psi**2))
            h1 = float(np.sum(w * flat_gradient_sq(psi, grid)))
            ratios.append(l2 / h1)
        sampled = lambda1 * max(ratios)
        # psi = x (L - x): int psi^2 = L^5/30, int psi'^2 = L^3/3
        poly = lambda1 * (L**5 / 30.0) / (L**3 / 3.0)
        checks = (
            BoundCheck(f"friedrich_random_{example.samples}", sampled, bool(sampled <= 1.0 + 1e-9)),
            BoundCheck("friedrich_poly", poly, bool(poly <= 1.0 + 1e-9)),
        )
        return SpectralReport(lambda1, "inverse_power", L, 0.0, checks)

    raise UnsupportedFamilyError(f"no bounds are defined for {example!r}")
