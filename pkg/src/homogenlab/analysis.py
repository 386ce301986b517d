"""Diagnostics tying the discrete solutions to the homogenization estimates.

Correctors and annulus capacities, the rescaled suspension measure,
sphere averages, inequality ratios, the single-sphere drag problem and
micro versus macro error metrics.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import (
    DomainError,
    GridMismatch,
    SphereOutOfDomain,
    UnresolvedSphere,
    ZeroGradient,
)
from .grid import (
    BoxDomain,
    GridSpec,
    PerforatedDomain,
    ScalarField,
    SourceSpec,
    sample_source,
)
from .homogenized import BRINKMAN_COEFF
from .linalg import SolverConfig, uzawa_solve
from .stencils import (
    ANTIMIRROR,
    MIRROR,
    assemble_stokes,
    solid_reaction_force,
    thermal_energy,
)

logger = logging.getLogger(__name__)

DEFAULT_QUAD_ORDER = 16

TEST_FUNCTIONS = (
    SourceSpec("constant", 1.0),
    SourceSpec("product_sine", 1.0),
    SourceSpec("gaussian", 1.0, None, 0.25),
)


# correctors and capacities


def _check_radii(r1, r2):
    if not (0.0 < r1 < r2 and math.isfinite(r2)):
        raise DomainError(f"need 0 < r1 < r2, got r1={r1}, r2={r2}")


def corrector_profile(r, r1, r2):
    """Radial harmonic profile equal to 1 at ``r1`` and 0 at ``r2``."""
    _check_radii(r1, r2)
    ra = np.asarray(r, dtype=float)
    slack = 1e-12 * r2
    if np.any(ra < r1 - slack) or np.any(ra > r2 + slack):
        raise DomainError(f"r must lie in [{r1}, {r2}]")
    w = r1 / (r2 - r1) * (r2 / ra - 1.0)
    return float(w) if w.ndim == 0 else w


def capacity(r1, r2):
    """Minimal Dirichlet energy ``4 pi r1 r2 / (r2 - r1)`` of the annulus."""
    _check_radii(r1, r2)
    return 4.0 * math.pi * r1 * r2 / (r2 - r1)


def radial_energy(nodes, values):
    """Exact ``int |grad u|^2`` of a radial, piecewise-linear profile on its annulus."""
    r = np.asarray(nodes, dtype=float)
    v = np.asarray(values, dtype=float)
    slope = np.diff(v) / np.diff(r)
    return float(np.sum(4.0 * math.pi * slope**2 * (r[1:] ** 3 - r[:-1] ** 3) / 3.0))


def corrector_energy(r1, r2, quad_n=2000, power=1):
    """Dirichlet energy of the corrector over the annulus, by radial quadrature.

    The profile is sampled at ``quad_n`` log-spaced radii and its
    piecewise-linear interpolant is integrated exactly.  ``power`` raises
    the profile to that power before integrating (1 is the corrector
    itself; anything else is a deliberately wrong profile).
    """
    _check_radii(r1, r2)
    if quad_n < 2:
        raise DomainError("quad_n must be at least 2")
    r = np.geomspace(r1, r2, int(quad_n))
    r[0], r[-1] = r1, r2
    return radial_energy(r, corrector_profile(r, r1, r2) ** power)


def random_radial_profile(rng, r1, r2, n_knots=8):
    """Piecewise-linear radial profile with random interior knots and values."""
    inner = np.sort(rng.uniform(r1, r2, size=n_knots - 2))
    nodes = np.concatenate([[r1], inner, [r2]])
    return nodes, rng.normal(size=n_knots)


def build_w_eps_field(dom: PerforatedDomain) -> ScalarField:
    """Cut-off function: 1 in the balls, corrector profile in each annulus, 0 elsewhere."""
    d, _ = nearest_center_distance(dom)
    r, R = dom.r_eps, dom.R_eps
    w = np.zeros(dom.grid.n)
    w[d < r] = 1.0
    if R > r:
        ann = (d >= r) & (d <= R)
        w[ann] = corrector_profile(d[ann], r, R)
    return ScalarField(dom.grid, w)


def nearest_center_distance(dom: PerforatedDomain, reach=None):
    """Distance from each cell centre to the nearest lattice centre within ``reach``.

    Cells farther than ``reach`` (default eps/2) from every centre get
    ``inf``.  Returns ``(distance, sphere_id)`` arrays.
    """
    grid = dom.grid
    reach = 0.5 * dom.epsilon if reach is None else reach
    dist = np.full(grid.n, np.inf)
    owner = np.full(grid.n, -1, dtype=np.int64)
    xs = [grid.centers(a) for a in range(3)]
    h = grid.h
    for s, c in enumerate(dom.centers):
        sl = []
        for a in range(3):
            i0 = max(0, math.floor((c[a] - reach - grid.box.lo[a]) / h[a]) - 1)
            i1 = min(grid.n[a], math.ceil((c[a] + reach - grid.box.lo[a]) / h[a]) + 1)
            sl.append(slice(i0, i1))
        sl = tuple(sl)
        dx = xs[0][sl[0]][:, None, None] - c[0]
        dy = xs[1][sl[1]][None, :, None] - c[1]
        dz = xs[2][sl[2]][None, None, :] - c[2]
        dd = np.sqrt(dx * dx + dy * dy + dz * dz)
        sub = dist[sl]
        closer = (dd < sub) & (dd <= reach)
        sub[closer] = dd[closer]
        owner[sl][closer] = s
    return dist, owner


# measures


@dataclass(frozen=True, eq=False)
class MeasureWeights:
    """Cell weights of the rescaled suspension measure.

    ``voxel`` mode gives every solid cell ``(3/4pi)(eps/r_eps)^3`` times
    its volume.  ``analytic`` mode rescales the cells of each sphere so
    that the sphere carries exactly ``eps^3``, the mass of the exact ball.
    """

    domain: PerforatedDomain
    weights: np.ndarray
    mode: str

    def total(self):
        return float(np.sum(self.weights))

    def target(self):
        return self.domain.n_spheres * self.domain.epsilon**3


def measure_weights(dom: PerforatedDomain, mode="voxel") -> MeasureWeights:
    w = np.zeros(dom.grid.n)
    solid = dom.solid
    if mode == "voxel":
        w[solid] = 3.0 / (4.0 * math.pi) * dom.conductivity_ratio * dom.grid.cell_volume
    elif mode == "analytic":
        counts = dom.voxel_counts()
        if np.any(counts == 0):
            raise UnresolvedSphere("a sphere covers no cell centre", min_cells=None)
        ids = dom.sphere_index[solid]
        w[solid] = dom.epsilon**3 / counts[ids]
    else:
        raise ValueError(f"unknown measure mode {mode!r}")
    w.setflags(write=False)
    return MeasureWeights(dom, w, mode)


def measure_integral(field: ScalarField, w: MeasureWeights):
    """``int field dm_eps`` as a weighted sum over the solid cells."""
    if field.grid != w.domain.grid:
        raise GridMismatch("field and measure live on different grids")
    return float(np.sum(w.weights * field.values))


# sphere averages and piecewise-constant fields


def field_interpolator(field: ScalarField):
    """Trilinear interpolant through the cell centres, linearly extended to the walls."""
    g = field.grid
    return RegularGridInterpolator(
        tuple(g.centers(a) for a in range(3)), field.values, method="linear", bounds_error=False, fill_value=None
    )


def sphere_quadrature(quad_order=DEFAULT_QUAD_ORDER):
    """Unit directions and weights (summing to 1) of a latitude-longitude rule.

    Gauss-Legendre in ``cos(polar angle)`` with ``quad_order`` nodes and
    ``2 * quad_order`` equally spaced longitudes.
    """
    if quad_order < 1:
        raise ValueError("quad_order must be positive")
    mu, wmu = np.polynomial.legendre.leggauss(int(quad_order))
    nphi = 2 * int(quad_order)
    phi = 2.0 * math.pi * (np.arange(nphi) + 0.5) / nphi
    s = np.sqrt(1.0 - mu**2)
    dirs = np.stack(
        [np.outer(s, np.cos(phi)).ravel(), np.outer(s, np.sin(phi)).ravel(), np.repeat(mu, nphi)], axis=1
    )
    weights = np.repeat(wmu / 2.0, nphi) / nphi
    return dirs, weights


def _check_sphere(box: BoxDomain, center, radius):
    for a in range(3):
        if center[a] - radius < box.lo[a] - 1e-12 or center[a] + radius > box.hi[a] + 1e-12:
            raise SphereOutOfDomain(f"sphere at {tuple(center)} with radius {radius} leaves the box")


def sphere_averages(field: ScalarField, centers, radius, quad_order=DEFAULT_QUAD_ORDER, interp=None):
    """Mean of ``field`` over the sphere of ``radius`` around each of ``centers``."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if radius < max(field.grid.h):
        logger.warning("sphere radius %g is below the grid spacing %g", radius, max(field.grid.h))
    for c in centers:
        _check_sphere(field.grid.box, c, radius)
    interp = interp or field_interpolator(field)
    dirs, weights = sphere_quadrature(quad_order)
    pts = centers[:, None, :] + radius * dirs[None, :, :]
    vals = interp(pts.reshape(-1, 3)).reshape(len(centers), -1)
    return vals @ weights


def sphere_surface_average(field: ScalarField, center, radius, quad_order=DEFAULT_QUAD_ORDER):
    return float(sphere_averages(field, [center], radius, quad_order)[0])


def period_cell_index(dom: PerforatedDomain):
    """Id of the period cube containing each cell centre, -1 outside every cube."""
    grid = dom.grid
    eps = dom.epsilon
    lat = dom.lattice
    kmin = lat.min(axis=0)
    kmax = lat.max(axis=0)
    span = kmax - kmin + 1
    ks = []
    inside = np.ones(grid.n, dtype=bool)
    for a in range(3):
        k = np.floor(grid.centers(a) / eps + 0.5 + 1e-9).astype(np.int64)
        shape = [1, 1, 1]
        shape[a] = -1
        k = k.reshape(shape)
        inside &= (k >= kmin[a]) & (k <= kmax[a])
        ks.append(k - kmin[a])
    ids = (ks[0] * span[1] + ks[1]) * span[2] + ks[2]
    return np.where(inside, np.broadcast_to(ids, grid.n), -1)


def build_tilde_fields(theta: ScalarField, dom: PerforatedDomain, quad_order=DEFAULT_QUAD_ORDER):
    """Piecewise-constant fields from sphere averages of ``theta``.

    On each period cube the first field is the average over the sphere of
    radius ``r_eps``, the second over radius ``R_eps``; both vanish
    outside the cubes.
    """
    if theta.grid != dom.grid:
        raise GridMismatch("theta and domain use different grids")
    interp = field_interpolator(theta)
    cube = period_cell_index(dom)
    inside = cube >= 0
    out = []
    for radius in (dom.r_eps, dom.R_eps):
        avg = sphere_averages(theta, dom.centers, radius, quad_order, interp)
        v = np.zeros(dom.grid.n)
        v[inside] = avg[cube[inside]]
        out.append(ScalarField(dom.grid, v))
    return out[0], out[1]


# inequality ratios


def cell_gradient_sq(grid: GridSpec, values):
    """Per-cell share of ``|grad theta|^2``, zero Dirichlet data on the box.

    Each face difference is split evenly between its two cells; boundary
    faces use the half-cell difference to the wall, so the sum over all
    cells times the cell volume is the discrete Dirichlet energy.
    """
    v = np.asarray(values, dtype=float)
    out = np.zeros(v.shape)
    for a, h in enumerate(grid.h):
        pad = [(0, 0)] * 3
        pad[a] = (1, 1)
        ext = np.pad(v, pad)
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        d = (ext[tuple(hi)] - ext[tuple(lo)]) / h
        # end differences reach the wall over half a cell
        first = [slice(None)] * 3
        last = [slice(None)] * 3
        first[a] = 0
        last[a] = -1
        d[tuple(first)] *= 2.0
        d[tuple(last)] *= 2.0
        d2 = d**2
        out += 0.5 * (d2[tuple(lo)] + d2[tuple(hi)])
    return out


class InequalityRatios(NamedTuple):
    ratio17: float
    ratio18: float
    ratio19: float
    ratio_p24: float


def _ratio(num, den):
    return num / den if den > 0 else float("nan")


def inequality_ratios(theta: ScalarField, dom: PerforatedDomain, weights=None, quad_order=DEFAULT_QUAD_ORDER):
    """Left side over right side (without the constant) of the averaging estimates.

    * ``ratio17``: ``int |theta - theta~|^2`` against ``(eps^3/R_eps) int |grad theta|^2``.
    * ``ratio18``: ``int_T |theta - tau~|^2`` against ``r_eps^2 int_T |grad theta|^2``.
    * ``ratio19``: ``int |theta~ - tau~|^2`` against ``(eps^3/r_eps)`` times the
      gradient energy in the annuli; NaN when there is no annulus.
    * ``ratio_p24``: ``int theta^2 dm`` against ``max(1, eps^3/r_eps) int |grad theta|^2``.
    """
    grid = dom.grid
    vol = grid.cell_volume
    grad = cell_gradient_sq(grid, theta.values)
    total = float(np.sum(grad)) * vol
    if not total > 0:
        raise ZeroGradient("theta has no gradient; the ratios are undefined")
    weights = weights or measure_weights(dom)
    tau_t, theta_t = build_tilde_fields(theta, dom, quad_order)
    th = theta.values
    solid = dom.solid
    eps3 = dom.epsilon**3
    d, _ = nearest_center_distance(dom)
    annulus = (d >= dom.r_eps) & (d <= dom.R_eps) if dom.R_eps > dom.r_eps else np.zeros(grid.n, bool)

    lhs17 = float(np.sum((th - theta_t.values) ** 2)) * vol
    lhs18 = float(np.sum(((th - tau_t.values) ** 2)[solid])) * vol
    lhs19 = float(np.sum((theta_t.values - tau_t.values) ** 2)) * vol
    lhs24 = float(np.sum(weights.weights * th**2))
    return InequalityRatios(
        _ratio(lhs17, eps3 / dom.R_eps * total),
        _ratio(lhs18, dom.r_eps**2 * float(np.sum(grad[solid])) * vol),
        _ratio(lhs19, eps3 / dom.r_eps * float(np.sum(grad[annulus])) * vol),
        _ratio(lhs24, max(1.0, eps3 / dom.r_eps) * total),
    )


def apriori_energy(theta: ScalarField, dom: PerforatedDomain, b):
    """``|grad theta|^2`` over the fluid plus ``b (eps/r_eps)^3 |grad theta|^2`` over the solid.

    Evaluated face by face with the harmonic-mean conductivities of the
    heat operator, so faces on the interface are weighted consistently.
    """
    kappa = np.where(dom.solid, b * dom.conductivity_ratio, 1.0)
    return thermal_energy(dom.grid, kappa, theta.values)


def averaged_test_function(phi: ScalarField, dom: PerforatedDomain):
    """Test function replaced on each ball by its mean over the period cube, zero elsewhere."""
    cube = period_cell_index(dom)
    n = dom.n_spheres
    inside = cube >= 0
    sums = np.bincount(cube[inside], weights=phi.values[inside], minlength=n)
    counts = np.bincount(cube[inside], minlength=n)
    means = sums / np.maximum(counts, 1)
    out = np.zeros(dom.grid.n)
    solid = dom.solid
    out[solid] = means[dom.sphere_index[solid]]
    return ScalarField(dom.grid, out)


def averaging_defect(phi: ScalarField, dom: PerforatedDomain, weights=None):
    """``|phi - phi_eps|`` in the measure norm, ``phi_eps`` from :func:`averaged_test_function`."""
    weights = weights or measure_weights(dom)
    diff = phi.values - averaged_test_function(phi, dom).values
    return math.sqrt(float(np.sum(weights.weights * diff**2)))


# single-sphere drag


class DragResult(NamedTuple):
    force: np.ndarray
    drag: float
    ratio: float
    cells: int
    iterations: int


def cell_stokes_drag(r, R, grid_n, cfg=None, direction=1.0):
    """Force on a ball of radius ``r`` held in a cube of half-side ``R`` moving at ``direction * e1``.

    ``grid_n`` is the number of cells across the radius.  The flow is
    symmetric under reflection in the two planes through the centre
    parallel to e1 and reversed by reflection in the plane normal to e1,
    so only the octant ``[0, R]^3`` is solved and the force is scaled
    by 8.  ``ratio`` is the drag over the free-space value ``6 pi r``.
    """
    if not (r > 0 and math.isfinite(R)):
        raise DomainError("radius must be positive")
    if R < 4.0 * r:
        raise DomainError(f"outer half-width R={R} must be at least 4 r={4 * r}")
    if grid_n < 4:
        raise UnresolvedSphere(f"{grid_n} cells across the radius; need at least 4", min_cells=4)
    cfg = cfg or SolverConfig(rel_tol=1e-3)
    n = math.ceil(grid_n * R / r - 1e-9)
    grid = GridSpec(BoxDomain((0.0, 0.0, 0.0), (R, R, R)), n)
    X, Y, Z = grid.cell_mesh()
    solid = X**2 + Y**2 + Z**2 < r * r
    planes = {(0, -1): ANTIMIRROR, (1, -1): MIRROR, (2, -1): MIRROR}
    sys_ = assemble_stokes(grid, solid, wall_velocity=(float(direction), 0.0, 0.0), planes=planes)
    res = uzawa_solve(sys_.A, sys_.B, sys_.bc_rhs, cfg, g=sys_.g, zero_mean=sys_.pressure_has_kernel)
    F = 8.0 * solid_reaction_force(sys_, sys_.scatter(res.velocity), sys_.pressure_field(res.pressure))
    # the transverse parts cancel between octants
    force = np.array([F[0], 0.0, 0.0])
    drag = abs(F[0])
    return DragResult(force, drag, drag / (BRINKMAN_COEFF * r), n, res.iterations)


# micro versus macro


CSV_COLUMNS = (
    "eps",
    "r_eps",
    "n",
    "err_theta_L2",
    "err_u_L2",
    "gap_phi1",
    "gap_phi2",
    "gap_phi3",
    "ratio17",
    "ratio18",
    "ratio19",
    "ratio_p24",
    "picard_iters",
    "seconds",
)


@dataclass
class ConvergenceRow:
    eps: float
    r_eps: float
    n: int
    err_theta_L2: float
    err_u_L2: float
    gap_phi1: float
    gap_phi2: float
    gap_phi3: float
    ratio17: float
    ratio18: float
    ratio19: float
    ratio_p24: float
    picard_iters: int
    seconds: float = 0.0
    # diagnostics kept out of the fixed CSV layout
    apriori_energy: float = float("nan")
    measure_total: float = float("nan")
    box_volume: float = float("nan")
    macro_picard_iters: int = 0

    def csv_values(self):
        return [getattr(self, c) for c in CSV_COLUMNS]


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda row: -row.eps)

    def add(self, row: ConvergenceRow):
        self.rows.append(row)
        self.rows.sort(key=lambda r: -r.eps)

    def column(self, name):
        return [getattr(r, name) for r in self.rows]

    def strictly_decreasing(self, name):
        vals = self.column(name)
        return all(b < a for a, b in itertools.pairwise(vals))

    def spread(self, name):
        """max/min of a positive column, the boundedness indicator for an estimate."""
        vals = np.asarray(self.column(name), dtype=float)
        vals = vals[np.isfinite(vals)]
        if len(vals) == 0 or np.min(vals) <= 0:
            return float("nan")
        return float(np.max(vals) / np.min(vals))

    @staticmethod
    def diagnostic_names():
        return [f.name for f in fields(ConvergenceRow) if f.name not in CSV_COLUMNS]


def micro_macro_errors(micro, macro, dom: PerforatedDomain, test_functions=TEST_FUNCTIONS, b=1.0, seconds=0.0):
    """One sweep row comparing a perforated solution with the homogenized one.

    The perforated velocity is already zero on the solid faces, which is
    its extension by zero.  Measure gaps use the analytic-mode weights.
    """
    grid = dom.grid
    if micro.theta.grid != grid or macro.theta.grid != grid:
        raise GridMismatch("micro, macro and domain grids must coincide")
    if len(test_functions) != 3:
        raise ValueError("the report layout has room for exactly three test functions")
    w = measure_weights(dom, "analytic")
    err_theta = ScalarField(grid, micro.theta.values - macro.theta.values).l2_norm()
    err_u = (micro.u - macro.u).l2_norm()
    gaps = []
    for spec in test_functions:
        phi = sample_source(spec, grid)
        lhs = measure_integral(ScalarField(grid, micro.theta.values * phi.values), w)
        rhs = ScalarField(grid, macro.tau.values * phi.values).integrate()
        gaps.append(abs(lhs - rhs))
    try:
        ratios = inequality_ratios(micro.theta, dom)
    except ZeroGradient:
        ratios = InequalityRatios(*(float("nan"),) * 4)
    return ConvergenceRow(
        eps=dom.epsilon,
        r_eps=dom.r_eps,
        n=grid.n[0],
        err_theta_L2=err_theta,
        err_u_L2=err_u,
        gap_phi1=gaps[0],
        gap_phi2=gaps[1],
        gap_phi3=gaps[2],
        ratio17=ratios.ratio17,
        ratio18=ratios.ratio18,
        ratio19=ratios.ratio19,
        ratio_p24=ratios.ratio_p24,
        picard_iters=micro.picard_iters,
        seconds=seconds,
        apriori_energy=apriori_energy(micro.theta, dom, b),
        measure_total=w.total(),
        box_volume=dom.box.volume,
        macro_picard_iters=macro.picard_iters,
    )
