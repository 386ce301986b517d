"""Randomized property checks of the averaging estimates on a configured sweep."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import analysis as an
from .grid import (
    GridSpec,
    PerforatedDomain,
    RRule,
    ScalarField,
    build_perforated_domain,
)

CAPACITY_TOL = 1e-3
IDENTITY_TOL = 1e-2
MASS_TOL = 1e-13
SPREAD_LIMIT = 10.0

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AuditResult:
    name: str
    passed: bool
    worst: float
    detail: str

    def line(self):
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict}  {self.name:<24} worst={self.worst:.6g}  {self.detail}"


def random_smooth_field(rng, grid: GridSpec, n_modes=3, strength=0.5):
    """Product sine times ``exp`` of a random low-frequency perturbation.

    The field vanishes on the box faces and is positive inside, so no
    lattice centre sits on a nodal surface.
    """
    X = grid.cell_mesh()
    pert = np.zeros(grid.n)
    base = np.ones(grid.n)
    for a in range(3):
        base = base * np.sin(math.pi * (X[a] - grid.box.lo[a]) / grid.box.extent[a])
    for _ in range(n_modes):
        k = rng.integers(1, 3, size=3)
        phase = rng.uniform(0.0, 2.0 * math.pi, size=3)
        term = rng.normal() / n_modes
        for a in range(3):
            term = term * np.cos(k[a] * math.pi * (X[a] - grid.box.lo[a]) / grid.box.extent[a] + phase[a])
        pert += term
    return ScalarField(grid, base * np.exp(strength * pert))


def audit_capacity(rng, power=1.0, quad_n=2000, trials=5):
    pairs = [(1.0, 2.0)]
    for _ in range(trials):
        r1 = float(rng.uniform(0.1, 2.0))
        pairs.append((r1, r1 * float(rng.uniform(1.2, 50.0))))
    worst = max(abs(an.corrector_energy(r1, r2, quad_n, power) / an.capacity(r1, r2) - 1.0) for r1, r2 in pairs)
    return AuditResult(
        "capacity_equality",
        worst <= CAPACITY_TOL,
        worst,
        f"corrector energy / capacity - 1 over {len(pairs)} annuli (limit {CAPACITY_TOL:g})",
    )


def audit_annulus_inequality(rng, n_profiles=20):
    worst = math.inf
    for _ in range(n_profiles):
        r1 = float(rng.uniform(0.1, 2.0))
        r2 = r1 * float(rng.uniform(1.1, 20.0))
        nodes, vals = an.random_radial_profile(rng, r1, r2)
        bound = an.capacity(r1, r2) * (vals[-1] - vals[0]) ** 2
        energy = an.radial_energy(nodes, vals)
        worst = min(worst, energy / bound if bound > 0 else math.inf)
    return AuditResult(
        "annulus_inequality",
        worst >= 1.0,
        worst,
        f"min energy / lower bound over {n_profiles} random radial profiles (must be >= 1)",
    )


def audit_measure_mass(doms):
    worst = 0.0
    for dom in doms:
        w = an.measure_weights(dom, "analytic")
        worst = max(worst, abs(w.total() - w.target()) / w.target())
    return AuditResult(
        "measure_mass", worst <= MASS_TOL, worst, "relative gap of the analytic measure mass to card*eps^3"
    )


def audit_tilde_identity(fields, doms):
    worst = 0.0
    for dom in doms:
        h = np.array(dom.grid.h)
        cells = np.concatenate([dom.epsilon / h, np.array(dom.grid.box.lo) / h])
        if not np.allclose(cells, np.round(cells), rtol=0, atol=1e-9):
            log.warning("eps=%g: period cubes do not align with the voxels; the dx side carries O(h/eps) error",
                        dom.epsilon)
        w = an.measure_weights(dom, "analytic")
        for f in fields:
            for t in an.build_tilde_fields(f, dom):
                dx = float(np.sum(t.values**2)) * dom.grid.cell_volume
                dm = an.measure_integral(ScalarField(dom.grid, t.values**2), w)
                if dx > 0:
                    worst = max(worst, abs(dx - dm) / dx)
    return AuditResult(
        "averaged_field_identity",
        worst <= IDENTITY_TOL,
        worst,
        f"relative gap between dx and dm norms of the averaged fields (limit {IDENTITY_TOL:g})",
    )


def audit_ratio_spread(fields, doms):
    worst = 1.0
    names = an.InequalityRatios._fields
    for f in fields:
        table = np.array([an.inequality_ratios(f, dom) for dom in doms])
        for j, name in enumerate(names):
            col = table[:, j]
            col = col[np.isfinite(col)]
            if len(col) < 2:
                continue
            if col.min() <= 0:
                worst = math.inf
            elif name == "ratio19":
                # one-sided: only growth along the sweep counts
                worst = max(worst, float(np.max(col / np.minimum.accumulate(col))))
            else:
                worst = max(worst, float(col.max() / col.min()))
    return AuditResult(
        "estimate_ratios_bounded",
        worst < SPREAD_LIMIT,
        worst,
        f"max/min of each estimate ratio across eps, growth only for ratio19 (limit {SPREAD_LIMIT:g})",
    )


def audit_averaging_defect(fields, doms):
    worst = 0.0
    for f in fields:
        d = [an.averaging_defect(f, dom) / math.sqrt(an.measure_weights(dom, "analytic").total()) for dom in doms]
        worst = max(worst, max(b / a for a, b in itertools.pairwise(d)))
    return AuditResult(
        "test_function_averaging",
        worst < 1.0,
        worst,
        "largest step ratio of the mass-normalized averaging defect along the sweep (must be < 1)",
    )


def sweep_domains(box, epsilons, gamma, grid, R_rule=RRule.GEOMETRIC) -> list[PerforatedDomain]:
    return [build_perforated_domain(box, e, gamma, grid, R_rule) for e in sorted(epsilons, reverse=True)]


def run_audit(grid, epsilons, gamma, seed=0, n_profiles=20, n_fields=10, corrector_power=1.0, quad_n=2000,
              R_rule=RRule.GEOMETRIC):
    """All audit properties; returns a list of :class:`AuditResult`."""
    rng = np.random.default_rng(seed)
    doms = sweep_domains(grid.box, epsilons, gamma, grid, R_rule)
    fields = [random_smooth_field(rng, grid) for _ in range(n_fields)]
    results = [
        audit_capacity(rng, corrector_power, quad_n),
        audit_annulus_inequality(rng, n_profiles),
        audit_measure_mass(doms),
        audit_tilde_identity(fields, doms),
    ]
    if len(doms) >= 2:
        results.append(audit_ratio_spread(fields, doms))
        results.append(audit_averaging_defect(fields, doms))
    return results
