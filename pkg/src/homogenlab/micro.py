"""Coupled flow and heat solve on the perforated box.

The temperature is a single cell-centred field over the whole box.  Solid
cells get conductivity ``b (eps/r_eps)^3`` and the radiant source
``b (eps/r_eps)^3 g``; the interface conditions between the phases are
then the natural ones of the finite-volume flux balance.  Velocity lives
on the MAC faces of the fluid part, with no-slip on every face of a solid
cell.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MaxIterExceeded, PicardDiverged
from .grid import (
    PerforatedDomain,
    ScalarField,
    SourceSpec,
    VectorFieldMAC,
    cells_to_faces,
    sample_source,
)
from .linalg import SolverConfig, bicgstab_solve, cg_solve, uzawa_solve
from .stencils import (
    StokesSystem,
    assemble_advection,
    assemble_diffusion,
    assemble_stokes,
)

logger = logging.getLogger(__name__)

DIVERGENCE_STREAK = 5


@dataclass(frozen=True)
class PhysicalParams:
    """Rayleigh number ``a``, conductivity coefficient ``b``, capacity ``gamma`` and sources.

    ``a = 0`` is accepted and means the flow and heat problems decouple.
    """

    a: float = 1.0
    b: float = 1.0
    gamma: float = 1.0
    f: SourceSpec = field(default_factory=SourceSpec)
    g: SourceSpec = field(default_factory=SourceSpec)

    def __post_init__(self):
        for name in ("a", "b", "gamma"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
        if self.a < 0:
            raise ValueError("a must be non-negative")
        if self.b <= 0:
            raise ValueError("b must be positive")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


@dataclass(eq=False)
class MicroSolution:
    u: VectorFieldMAC
    p: ScalarField
    theta: ScalarField
    picard_iters: int
    picard_residual: float
    history: list = field(default_factory=list, repr=False)


def phase_conductivity(dom: PerforatedDomain, b):
    """Cell conductivity: 1 in the fluid, ``b (eps/r_eps)^3`` in the solid."""
    return np.where(dom.solid, b * dom.conductivity_ratio, 1.0)


def micro_source(dom: PerforatedDomain, params: PhysicalParams):
    """Right-hand side values: f on fluid cells, ``b (eps/r_eps)^3 g`` on solid cells."""
    f = sample_source(params.f, dom.grid).values
    g = sample_source(params.g, dom.grid).values
    return np.where(dom.solid, params.b * dom.conductivity_ratio * g, f)


def assemble_thermal_micro(dom: PerforatedDomain, params: PhysicalParams, u: VectorFieldMAC, scheme="upwind"):
    """Matrix and right-hand side of the steady two-phase heat equation.

    The velocity vanishes on every solid face, so the advection term only
    acts on fluid cells.  ``scheme="skew"`` swaps upwinding for the
    centred skew-symmetric convection operator.
    """
    kappa = phase_conductivity(dom, params.b)
    A = assemble_diffusion(dom.grid, kappa)
    if any(np.any(c) for c in u):
        A = A + assemble_advection(dom.grid, u, scheme)
    return A, micro_source(dom, params).ravel()


def stokes_system(dom: PerforatedDomain) -> StokesSystem:
    return assemble_stokes(dom.grid, dom.solid)


def buoyancy_force(grid, a, theta: ScalarField) -> VectorFieldMAC:
    """Face force ``a theta e3``."""
    comps = [np.zeros(grid.face_shape(d)) for d in range(3)]
    comps[2] = a * cells_to_faces(theta.values, 2)
    return VectorFieldMAC(grid, tuple(comps))


def solve_saddle(system: StokesSystem, force: VectorFieldMAC, cfg: SolverConfig):
    res = uzawa_solve(
        system.A, system.B, system.momentum_rhs(force), cfg, g=system.g, zero_mean=system.pressure_has_kernel
    )
    return system.scatter(res.velocity), system.pressure_field(res.pressure)


def solve_stokes_perforated(dom: PerforatedDomain, force: VectorFieldMAC, cfg: SolverConfig, system=None):
    """No-slip Stokes flow through the perforated box; force on blocked faces is ignored."""
    system = system or stokes_system(dom)
    return solve_saddle(system, force, cfg)


def solve_linear_thermal(A, rhs, cfg, symmetric, x0=None):
    if symmetric:
        return cg_solve(A, rhs, cfg, x0=x0).solution
    return bicgstab_solve(A, rhs, cfg, x0=x0).solution


def picard_loop(grid, a, stokes, thermal, relax, max_outer, tol, theta0=None):
    """Fixed-point iteration between a flow solve and a heat solve.

    ``stokes(force)`` returns ``(u, p)``; ``thermal(u, theta_prev)``
    returns the new temperature.  With ``a = 0`` one pass is exact.
    Returns ``(u, p, theta, iterations, residual, history)``.
    """
    if not 0.0 < relax <= 1.0:
        raise ValueError("relaxation must lie in (0, 1]")
    theta = theta0 if theta0 is not None else ScalarField.zeros(grid)
    if a == 0.0:
        u, p = stokes(VectorFieldMAC.zeros(grid))
        return u, p, thermal(u, theta), 1, 0.0, [0.0]

    u = VectorFieldMAC.zeros(grid)
    history = []
    streak = 0
    for it in range(1, max_outer + 1):
        u_new, p = stokes(buoyancy_force(grid, a, theta))
        t_new = thermal(u_new, theta)
        diff = math.hypot((u_new - u).l2_norm(), ScalarField(grid, t_new.values - theta.values).l2_norm())
        size = math.hypot(u_new.l2_norm(), t_new.l2_norm())
        res = diff / size if size > 0 else 0.0
        history.append(res)
        logger.info("picard %d: relative change %.3e", it, res)
        if res < tol:
            return u_new, p, t_new, it, res, history
        streak = streak + 1 if len(history) > 1 and res > history[-2] else 0
        if streak >= DIVERGENCE_STREAK:
            raise PicardDiverged(f"Picard change grew {streak} times in a row (now {res:.3e} at iteration {it})")
        theta = ScalarField(grid, relax * t_new.values + (1.0 - relax) * theta.values)
        u = u_new
    raise MaxIterExceeded(f"Picard did not reach {tol:.3e} in {max_outer} iterations (at {history[-1]:.3e})")


def picard_micro(dom: PerforatedDomain, params: PhysicalParams, cfg=None, relax=0.7, max_outer=100, theta0=None):
    """Solve the coupled perforated problem.

    Stops when the relative L2 change of ``(u, theta)`` drops below
    ``cfg.rel_tol``; the inner linear solves run 100 times tighter.
    """
    cfg = cfg or SolverConfig()
    inner = cfg.tightened(0.01)
    system = stokes_system(dom)
    kappa = phase_conductivity(dom, params.b)
    K = assemble_diffusion(dom.grid, kappa)
    rhs = micro_source(dom, params).ravel()
    grid = dom.grid

    def stokes(force):
        return solve_saddle(system, force, inner)

    def thermal(u, prev):
        moving = any(np.any(c) for c in u)
        A = K + assemble_advection(grid, u) if moving else K
        x = solve_linear_thermal(A, rhs, inner, symmetric=not moving, x0=prev.values.ravel())
        return ScalarField(grid, x.reshape(grid.n))

    u, p, theta, iters, res, hist = picard_loop(grid, params.a, stokes, thermal, relax, max_outer, cfg.rel_tol, theta0)
    return MicroSolution(u, p, theta, iters, res, hist)
