"""Uniform 3D cell grid, perforated-box geometry and field containers.

Scalars live at cell centres. Vector fields use the MAC staggering: the
component along axis ``d`` is stored on the faces normal to ``d``, so its
array has one extra entry along that axis.
"""

from __future__ import annotations

import enum
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDomain, InvalidDomain, UnresolvedSphere

logger = logging.getLogger(__name__)

FLUID = 0
SOLID = 1


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class BoxDomain:
    lo: tuple = (0.0, 0.0, 0.0)
    hi: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise InvalidDomain("box corners must be 3-vectors")
        if any(h <= l for l, h in zip(lo, hi)):
            raise InvalidDomain(f"box needs hi > lo on every axis, got lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def extent(self):
        return tuple(h - l for l, h in zip(self.lo, self.hi))

    @property
    def volume(self):
        return math.prod(self.extent)

    @property
    def center(self):
        return tuple(0.5 * (l + h) for l, h in zip(self.lo, self.hi))


@dataclass(frozen=True)
class GridSpec:
    box: BoxDomain
    n: tuple

    def __post_init__(self):
        n = self.n
        if isinstance(n, (int, np.integer)):
            n = (n, n, n)
        n = tuple(int(v) for v in n)
        if len(n) != 3 or any(v < 4 for v in n):
            raise InvalidDomain(f"grid needs at least 4 cells per axis, got {n}")
        object.__setattr__(self, "n", n)

    @property
    def h(self):
        return tuple(e / m for e, m in zip(self.box.extent, self.n))

    @property
    def shape(self):
        return self.n

    @property
    def size(self):
        return math.prod(self.n)

    @property
    def cell_volume(self):
        return math.prod(self.h)

    def centers(self, axis):
        """1D coordinates of the cell centres along ``axis``."""
        return self.box.lo[axis] + (np.arange(self.n[axis]) + 0.5) * self.h[axis]

    def nodes(self, axis):
        return self.box.lo[axis] + np.arange(self.n[axis] + 1) * self.h[axis]

    def cell_mesh(self):
        return np.meshgrid(self.centers(0), self.centers(1), self.centers(2), indexing="ij")

    def face_shape(self, axis):
        s = list(self.n)
        s[axis] += 1
        return tuple(s)

    def face_mesh(self, axis):
        """Coordinates of the faces normal to ``axis``."""
        axes = [self.nodes(d) if d == axis else self.centers(d) for d in range(3)]
        return np.meshgrid(*axes, indexing="ij")


class RRule(str, enum.Enum):
    """How the intermediate radius R_eps is picked between r_eps and eps/2."""

    GEOMETRIC = "geometric"  # sqrt(r_eps * eps)
    QUARTER_PERIOD = "quarter_period"  # eps / 4

    def radius(self, r_eps, epsilon):
        if self is RRule.GEOMETRIC:
            return math.sqrt(r_eps * epsilon)
        return 0.25 * epsilon


@dataclass(frozen=True, eq=False)
class PerforatedDomain:
    box: BoxDomain
    epsilon: float
    gamma: float
    r_eps: float
    R_eps: float
    centers: np.ndarray
    grid: GridSpec
    phase_mask: np.ndarray
    sphere_index: np.ndarray = field(repr=False)
    lattice: np.ndarray = field(repr=False)

    @property
    def n_spheres(self):
        return len(self.centers)

    @property
    def solid(self):
        return self.phase_mask == SOLID

    @property
    def fluid(self):
        return self.phase_mask == FLUID

    @property
    def conductivity_ratio(self):
        """(eps / r_eps)^3, the factor multiplying b inside the suspensions."""
        return (self.epsilon / self.r_eps) ** 3

    def voxel_counts(self):
        """Number of solid cells belonging to each sphere."""
        ids = self.sphere_index[self.sphere_index >= 0]
        return np.bincount(ids, minlength=self.n_spheres)


def min_cells_for_radius(box, r_eps):
    """Smallest per-axis cell count with r_eps >= 2 h on every axis."""
    need = 4
    for e in box.extent:
        n = max(4, math.ceil(2.0 * e / r_eps - 1e-9))
        while r_eps < 2.0 * (e / n):
            n += 1
        need = max(need, n)
    return need


def intermediate_radius(r_eps, epsilon, R_rule=RRule.GEOMETRIC):
    """R_eps from the rule, moved to the middle of (r_eps, eps/2) if the rule falls outside.

    An inscribed sphere (r_eps = eps/2) leaves no room for an annulus;
    then R_eps = r_eps and annulus-based diagnostics are undefined.
    """
    half = 0.5 * epsilon
    if r_eps >= half * (1.0 - 1e-12):
        logger.warning("r_eps=%g fills its period cell; no annulus between r_eps and eps/2", r_eps)
        return r_eps
    R_eps = RRule(R_rule).radius(r_eps, epsilon)
    if not r_eps < R_eps < half:
        mid = 0.5 * (r_eps + half)
        logger.info("R_eps=%g from rule %s is outside (r_eps, eps/2); using %g", R_eps, RRule(R_rule).value, mid)
        R_eps = mid
    return R_eps


def build_perforated_domain(box, epsilon, gamma, grid, R_rule=RRule.GEOMETRIC):
    """Place balls of radius gamma*eps^3 at every eps*k whose period cell fits in the box."""
    epsilon = float(epsilon)
    gamma = float(gamma)
    if epsilon <= 0 or gamma <= 0:
        raise InvalidDomain("epsilon and gamma must be positive")
    if grid.box != box:
        raise InvalidDomain("grid is defined on a different box")
    for e in box.extent:
        q = e / epsilon
        if abs(q - round(q)) > 1e-6 * max(1.0, q):
            raise InvalidDomain(f"epsilon={epsilon} does not divide box extent {e}")
    r_eps = gamma * epsilon**3
    if r_eps > 0.5 * epsilon * (1.0 + 1e-12):
        raise InvalidDomain(f"r_eps={r_eps} exceeds epsilon/2={epsilon / 2}")
    R_eps = intermediate_radius(r_eps, epsilon, R_rule)

    tol = 1e-9 * epsilon
    ranges = []
    for lo, hi in zip(box.lo, box.hi):
        kmin = math.ceil((lo + 0.5 * epsilon - tol) / epsilon)
        kmax = math.floor((hi - 0.5 * epsilon + tol) / epsilon)
        ranges.append(np.arange(kmin, kmax + 1))
    if any(len(r) == 0 for r in ranges):
        raise EmptyDomain(f"no period cell of size {epsilon} fits in {box}")
    lattice = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, 3)
    centers = epsilon * lattice.astype(float)

    hmax = max(grid.h)
    if r_eps < 2.0 * hmax:
        need = min_cells_for_radius(box, r_eps)
        raise UnresolvedSphere(
            f"r_eps={r_eps:.6g} is below 2*h={2 * hmax:.6g}; use at least {need} cells per axis",
            min_cells=need,
        )

    sphere_index = np.full(grid.n, -1, dtype=np.int64)
    xs = [grid.centers(d) for d in range(3)]
    h = grid.h
    for s, c in enumerate(centers):
        sl = []
        for d in range(3):
            i0 = max(0, math.floor((c[d] - r_eps - box.lo[d]) / h[d]) - 1)
            i1 = min(grid.n[d], math.ceil((c[d] + r_eps - box.lo[d]) / h[d]) + 1)
            sl.append(slice(i0, i1))
        dx = xs[0][sl[0]][:, None, None] - c[0]
        dy = xs[1][sl[1]][None, :, None] - c[1]
        dz = xs[2][sl[2]][None, None, :] - c[2]
        inside = dx * dx + dy * dy + dz * dz < r_eps * r_eps
        sphere_index[tuple(sl)][inside] = s
    phase = np.where(sphere_index >= 0, SOLID, FLUID).astype(np.int8)

    return PerforatedDomain(
        box=box,
        epsilon=epsilon,
        gamma=gamma,
        r_eps=r_eps,
        R_eps=R_eps,
        centers=_frozen(centers),
        grid=grid,
        phase_mask=_frozen(phase),
        sphere_index=_frozen(sphere_index),
        lattice=_frozen(lattice),
    )


def unperforated(grid):
    """Phase mask with no solid cells, for solves on the full box."""
    return np.zeros(grid.n, dtype=np.int8)


def phase_volume(dom, phase):
    """Analytic volume of a phase (ball formula, not the voxel count)."""
    solid = dom.n_spheres * (4.0 * math.pi / 3.0) * dom.r_eps**3
    if phase in (SOLID, "solid", "Solid"):
        return solid
    if phase in (FLUID, "fluid", "Fluid"):
        return dom.box.volume - solid
    raise ValueError(f"unknown phase {phase!r}")


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.n:
            raise ValueError(f"scalar field shape {v.shape} does not match grid {self.grid.n}")
        if not np.all(np.isfinite(v)):
            raise ValueError("scalar field has non-finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.n))

    def l2_norm(self):
        return math.sqrt(self.grid.cell_volume * float(np.sum(self.values**2)))

    def integrate(self):
        return self.grid.cell_volume * float(np.sum(self.values))


@dataclass(frozen=True, eq=False)
class VectorFieldMAC:
    grid: GridSpec
    components: tuple

    def __post_init__(self):
        comps = tuple(np.asarray(c, dtype=float) for c in self.components)
        if len(comps) != 3:
            raise ValueError("MAC field needs three components")
        for d, c in enumerate(comps):
            if c.shape != self.grid.face_shape(d):
                raise ValueError(
                    f"component {d} has shape {c.shape}, expected {self.grid.face_shape(d)}"
                )
            if not np.all(np.isfinite(c)):
                raise ValueError(f"component {d} has non-finite values")
        object.__setattr__(self, "components", comps)

    def __getitem__(self, d):
        return self.components[d]

    @classmethod
    def zeros(cls, grid):
        return cls(grid, tuple(np.zeros(grid.face_shape(d)) for d in range(3)))

    def __neg__(self):
        return VectorFieldMAC(self.grid, tuple(-c for c in self.components))

    def __sub__(self, other):
        return VectorFieldMAC(self.grid, tuple(a - b for a, b in zip(self, other)))

    def __iter__(self):
        return iter(self.components)

    def divergence(self):
        """Cell-centred discrete divergence."""
        h = self.grid.h
        return sum(np.diff(c, axis=d) / h[d] for d, c in enumerate(self.components))

    def l2_norm(self):
        """Discrete L2 norm, each face weighted by one cell volume."""
        return math.sqrt(self.grid.cell_volume * sum(float(np.sum(c**2)) for c in self.components))

    def cell_centered(self):
        """Average each component to cell centres; returns shape (3, *n)."""
        out = []
        for d, c in enumerate(self.components):
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[d] = slice(0, -1)
            hi[d] = slice(1, None)
            out.append(0.5 * (c[tuple(lo)] + c[tuple(hi)]))
        return np.stack(out)


def cells_to_faces(values, axis):
    """Average a cell-centred array onto the faces normal to ``axis``.

    Boundary faces take the value of their single adjacent cell.
    """
    v = np.asarray(values, dtype=float)
    shape = list(v.shape)
    shape[axis] += 1
    out = np.empty(shape)
    inner = [slice(None)] * 3
    inner[axis] = slice(1, -1)
    a = [slice(None)] * 3
    b = [slice(None)] * 3
    a[axis] = slice(0, -1)
    b[axis] = slice(1, None)
    out[tuple(inner)] = 0.5 * (v[tuple(a)] + v[tuple(b)])
    first = [slice(None)] * 3
    last = [slice(None)] * 3
    first[axis] = 0
    last[axis] = -1
    out[tuple(first)] = v[tuple(first)]
    out[tuple(last)] = v[tuple(last)]
    return out


class SourceKind(str, enum.Enum):
    CONSTANT = "constant"
    GAUSSIAN = "gaussian"
    PRODUCT_SINE = "product_sine"


@dataclass(frozen=True)
class SourceSpec:
    """Analytic heat source.

    ``gaussian``: amplitude * exp(-|x - center|^2 / (2 width^2)).
    ``product_sine``: amplitude * prod_i sin(pi (x_i - lo_i) / L_i) over the box.
    With ``support_radius`` set, the source vanishes outside the ball of that
    radius around ``center`` (box centre when ``center`` is None).
    """

    kind: SourceKind = SourceKind.CONSTANT
    amplitude: float = 1.0
    center: tuple | None = None
    width: float = 0.1
    support_radius: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SourceKind(self.kind))
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.kind is SourceKind.GAUSSIAN and self.width <= 0:
            raise ValueError("gaussian width must be positive")
        if self.support_radius is not None and self.support_radius <= 0:
            raise ValueError("support_radius must be positive")

    @classmethod
    def zero(cls):
        return cls(SourceKind.CONSTANT, 0.0)


def _eval_source_xyz(s, x, y, z, box):
    c = s.center if s.center is not None else box.center
    if s.kind is SourceKind.CONSTANT:
        val = s.amplitude * np.ones(np.broadcast(x, y, z).shape)
    elif s.kind is SourceKind.GAUSSIAN:
        r2 = (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2
        val = s.amplitude * np.exp(-r2 / (2.0 * s.width**2))
    else:
        val = s.amplitude * np.ones(np.broadcast(x, y, z).shape)
        for coord, lo, e in zip((x, y, z), box.lo, box.extent):
            val = val * np.sin(np.pi * (coord - lo) / e)
    if s.support_radius is not None:
        r2 = (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2
        val = np.where(r2 <= s.support_radius**2, val, 0.0)
    return val


def eval_source(s: SourceSpec, x: Sequence[float], box: BoxDomain | None = None) -> float:
    box = box or BoxDomain()
    return float(_eval_source_xyz(s, *(np.float64(v) for v in x), box))


def sample_source(s: SourceSpec, grid: GridSpec) -> ScalarField:
    X, Y, Z = grid.cell_mesh()
    return ScalarField(grid, _eval_source_xyz(s, X, Y, Z, grid.box))
