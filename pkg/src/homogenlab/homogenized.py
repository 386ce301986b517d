"""Macroscopic Brinkman flow coupled to a fluid/suspension two-temperature model.

The suspension temperature ``tau`` obeys a pointwise algebraic balance
with the fluid temperature, so it is eliminated and the fluid temperature
solves a single advection-diffusion equation with an enlarged source.
``tau`` needs no boundary condition and is recovered afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ZeroGamma
from .grid import GridSpec, ScalarField, VectorFieldMAC, sample_source
from .linalg import CsrMatrix, SolverConfig
from .micro import PhysicalParams, picard_loop, solve_linear_thermal, solve_saddle
from .stencils import assemble_advection, assemble_diffusion, assemble_stokes

# drag coefficient of a unit-capacity array of small spheres (Stokes drag per unit gamma)
BRINKMAN_COEFF = 6.0 * math.pi
# heat exchange coefficient between the two temperatures (capacity of the unit ball)
EXCHANGE_COEFF = 4.0 * math.pi


@dataclass(eq=False)
class MacroSolution:
    u: VectorFieldMAC
    p: ScalarField
    theta: ScalarField
    tau: ScalarField
    picard_iters: int
    picard_residual: float = 0.0
    history: list = field(default_factory=list, repr=False)


def brinkman_system(grid: GridSpec, gamma):
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return assemble_stokes(grid, zeroth=BRINKMAN_COEFF * gamma)


def solve_brinkman(grid: GridSpec, gamma, force: VectorFieldMAC, cfg=None, system=None):
    """``-Lap u + 6 pi gamma u + grad p = force``, ``div u = 0``, ``u = 0`` on the walls."""
    system = system or brinkman_system(grid, gamma)
    return solve_saddle(system, force, cfg or SolverConfig())


def reduced_source(grid: GridSpec, params: PhysicalParams):
    """``f + (4 pi b / 3) g`` on the cell centres."""
    f = sample_source(params.f, grid).values
    g = sample_source(params.g, grid).values
    return f + (EXCHANGE_COEFF * params.b / 3.0) * g


def _thermal_operator(grid, u):
    K = assemble_diffusion(grid, np.ones(grid.n))
    moving = u is not None and any(np.any(c) for c in u)
    if moving:
        K = K + assemble_advection(grid, u)
    return K, moving


def solve_macro_thermal(grid: GridSpec, params: PhysicalParams, u: VectorFieldMAC, cfg=None, block=False):
    """Fluid temperature of the two-temperature model for a given velocity.

    The default solves the reduced equation.  ``block=True`` instead
    solves for ``(theta, tau)`` together with the exchange term kept
    explicit; it exists to cross-check the elimination and returns
    ``(theta, tau)``.
    """
    cfg = cfg or SolverConfig()
    K, moving = _thermal_operator(grid, u)
    if not block:
        x = solve_linear_thermal(K, reduced_source(grid, params).ravel(), cfg, symmetric=not moving)
        return ScalarField(grid, x.reshape(grid.n))

    if params.gamma <= 0:
        raise ZeroGamma("the block form needs gamma > 0")
    N = grid.size
    c = EXCHANGE_COEFF * params.gamma
    Ks = K.to_scipy()
    eye = sp.identity(N, format="csr")
    M = CsrMatrix.from_scipy(sp.bmat([[Ks + c * eye, -c * eye], [-c * eye, c * eye]], format="csr"))
    f = sample_source(params.f, grid).values.ravel()
    g = sample_source(params.g, grid).values.ravel()
    rhs = np.concatenate([f, (EXCHANGE_COEFF * params.b / 3.0) * g])
    x = solve_linear_thermal(M, rhs, cfg, symmetric=not moving)
    return ScalarField(grid, x[:N].reshape(grid.n)), ScalarField(grid, x[N:].reshape(grid.n))


def tau_from_theta(theta: ScalarField, g: ScalarField, b, gamma):
    """Suspension temperature ``theta + b g / (3 gamma)``."""
    if gamma == 0:
        raise ZeroGamma("tau is undefined for gamma = 0")
    return ScalarField(theta.grid, theta.values + (b / (3.0 * gamma)) * g.values)


def closure_residual(theta: ScalarField, tau: ScalarField, g: ScalarField, b, gamma):
    """Largest cell value of ``|4 pi gamma (tau - theta) - (4 pi b / 3) g|``."""
    r = EXCHANGE_COEFF * gamma * (tau.values - theta.values) - (EXCHANGE_COEFF * b / 3.0) * g.values
    return float(np.max(np.abs(r)))


def picard_macro(grid: GridSpec, params: PhysicalParams, cfg=None, relax=0.7, max_outer=100, theta0=None):
    """Coupled macro solve, same fixed-point scheme as the perforated problem."""
    cfg = cfg or SolverConfig()
    inner = cfg.tightened(0.01)
    system = brinkman_system(grid, params.gamma)
    K, _ = _thermal_operator(grid, None)
    rhs = reduced_source(grid, params).ravel()

    def stokes(force):
        return solve_saddle(system, force, inner)

    def thermal(u, prev):
        moving = any(np.any(c) for c in u)
        A = K + assemble_advection(grid, u) if moving else K
        x = solve_linear_thermal(A, rhs, inner, symmetric=not moving, x0=prev.values.ravel())
        return ScalarField(grid, x.reshape(grid.n))

    u, p, theta, iters, res, hist = picard_loop(grid, params.a, stokes, thermal, relax, max_outer, cfg.rel_tol, theta0)
    tau = tau_from_theta(theta, sample_source(params.g, grid), params.b, params.gamma)
    return MacroSolution(u, p, theta, tau, iters, res, hist)


@dataclass(frozen=True)
class ExactField:
    """Closed-form temperature vanishing on the box, with its negative Laplacian."""

    name: str
    value: object
    neg_laplacian: object


def _product_sine(box):
    def value(X, Y, Z):
        out = np.ones(np.broadcast(X, Y, Z).shape)
        for x, lo, e in zip((X, Y, Z), box.lo, box.extent):
            out = out * np.sin(np.pi * (x - lo) / e)
        return out

    k2 = sum((np.pi / e) ** 2 for e in box.extent)
    return ExactField("product_sine", value, lambda X, Y, Z: k2 * value(X, Y, Z))


def exact_field(name, box):
    if name == "product_sine":
        return _product_sine(box)
    if name == "zero":
        zero = lambda X, Y, Z: np.zeros(np.broadcast(X, Y, Z).shape)
        return ExactField("zero", zero, zero)
    raise ValueError(f"unknown exact field {name!r}")


def manufactured_residual(grid: GridSpec, params: PhysicalParams, exact="product_sine", cfg=None):
    """Solve the reduced heat equation (at rest) with a source built from ``exact``.

    The fluid source is chosen so that ``f + (4 pi b/3) g`` equals the
    exact negative Laplacian, whatever ``g`` is.  Returns
    ``(l2_error, max_error)``.
    """
    cfg = cfg or SolverConfig(rel_tol=1e-12)
    ex = exact_field(exact, grid.box) if isinstance(exact, str) else exact
    X, Y, Z = grid.cell_mesh()
    rhs = ex.neg_laplacian(X, Y, Z)
    K, _ = _thermal_operator(grid, None)
    x = solve_linear_thermal(K, rhs.ravel(), cfg, symmetric=True).reshape(grid.n)
    err = x - ex.value(X, Y, Z)
    return math.sqrt(grid.cell_volume * float(np.sum(err**2))), float(np.max(np.abs(err)))
