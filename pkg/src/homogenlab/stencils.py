"""Finite-volume stencils on the uniform grid, shared by micro and macro solvers.

Velocity uses the MAC staggering with no-slip (or free-slip symmetry)
walls imposed through ghost faces; blocked faces (box-normal faces and
every face touching a solid cell) are eliminated as prescribed values.
Temperature is cell centred with Dirichlet zero on the box faces, again
through a ghost cell, and face conductivities are harmonic means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteCoefficient
from .grid import ScalarField, VectorFieldMAC
from .linalg import CsrMatrix

_SIDES = (-1, 1)


def _shift(arr, axis, side, fill):
    """``out[I] = arr[I + side * e_axis]``, with ``fill`` where that leaves the array."""
    out = np.full(arr.shape, fill, dtype=arr.dtype)
    n = arr.shape[axis]
    dst = [slice(None)] * arr.ndim
    src = [slice(None)] * arr.ndim
    if side > 0:
        dst[axis] = slice(0, n - 1)
        src[axis] = slice(1, n)
    else:
        dst[axis] = slice(1, n)
        src[axis] = slice(0, n - 1)
    out[tuple(dst)] = arr[tuple(src)]
    return out


MIRROR = "mirror"
ANTIMIRROR = "antimirror"


def _end(axis, index):
    sl = [slice(None)] * 3
    sl[axis] = index
    return tuple(sl)


def blocked_faces(solid, axis, open_sides=()):
    """Faces normal to ``axis`` whose velocity is prescribed.

    These are the two box faces plus every face with a solid cell on
    either side.  Box faces listed in ``open_sides`` (-1 low, +1 high)
    are left free unless they touch a solid cell.
    """
    n = solid.shape
    shape = list(n)
    shape[axis] += 1
    blocked = np.zeros(shape, dtype=bool)
    if -1 not in open_sides:
        blocked[_end(axis, 0)] = True
    if 1 not in open_sides:
        blocked[_end(axis, n[axis])] = True
    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    lo[axis] = slice(0, n[axis])
    hi[axis] = slice(1, n[axis] + 1)
    blocked[tuple(lo)] |= solid
    blocked[tuple(hi)] |= solid
    return blocked


@dataclass(eq=False)
class StokesSystem:
    """Assembled MAC Stokes/Brinkman system on a (possibly perforated) box.

    ``A`` is the SPD velocity operator ``-Lap + zeroth * I`` on the free
    faces, ``B`` is minus the discrete divergence restricted to fluid
    cells (so ``B^T`` is the pressure gradient), ``bc_rhs`` and ``g``
    carry the prescribed face values.  Rows of faces lying on an
    antimirror plane hold half a control volume; ``face_weight`` records
    that factor.
    """

    grid: object
    solid: np.ndarray
    zeroth: float
    wall_velocity: tuple
    planes: dict
    A: CsrMatrix
    B: CsrMatrix
    bc_rhs: np.ndarray
    g: np.ndarray
    face_index: tuple
    face_values: tuple
    face_weight: tuple
    pressure_index: np.ndarray

    @property
    def n_velocity(self):
        return self.A.shape[0]

    @property
    def n_pressure(self):
        return self.B.shape[0]

    @property
    def pressure_has_kernel(self):
        """Constants solve ``B^T p = 0`` unless an antimirror plane pins p."""
        return ANTIMIRROR not in self.planes.values()

    def gather(self, field: VectorFieldMAC, weighted=False):
        """Restrict a face field to the free faces, in unknown ordering."""
        out = np.empty(self.n_velocity)
        for d in range(3):
            idx = self.face_index[d]
            free = idx >= 0
            vals = field[d][free]
            if weighted:
                vals = vals * self.face_weight[d][free]
            out[idx[free]] = vals
        return out

    def momentum_rhs(self, force: VectorFieldMAC):
        """Right-hand side of the reduced momentum rows for a face force."""
        return self.gather(force, weighted=True) + self.bc_rhs

    def scatter(self, x):
        comps = []
        for d in range(3):
            idx = self.face_index[d]
            c = self.face_values[d].copy()
            free = idx >= 0
            c[free] = x[idx[free]]
            comps.append(c)
        return VectorFieldMAC(self.grid, tuple(comps))

    def pressure_field(self, p):
        vals = np.zeros(self.grid.n)
        fluid = self.pressure_index >= 0
        vals[fluid] = p[self.pressure_index[fluid]]
        return ScalarField(self.grid, vals)

    def pressure_vector(self, field: ScalarField):
        fluid = self.pressure_index >= 0
        out = np.empty(self.n_pressure)
        out[self.pressure_index[fluid]] = field.values[fluid]
        return out


def _ghost_kind(planes, e, side, d):
    kind = planes.get((e, side))
    if kind is None:
        return "wall"
    if kind == MIRROR:
        return "even"
    # antimirror: the normal component is even, tangential ones are odd
    return "even_normal" if e == d else "odd"


def assemble_stokes(grid, solid=None, zeroth=0.0, wall_velocity=(0.0, 0.0, 0.0), planes=None):
    """Assemble ``-Lap u + zeroth u + grad p = f``, ``div u = 0`` on the MAC grid.

    ``wall_velocity`` is the constant velocity prescribed on the box
    faces.  ``planes`` maps ``(axis, side)`` box faces to a symmetry
    type: ``"mirror"`` is a free-slip plane (zero normal velocity, zero
    tangential stress); ``"antimirror"`` is the mid-plane of a flow that
    is reversed by the reflection (zero tangential velocity, zero
    pressure, free normal velocity).
    """
    n = grid.n
    h = grid.h
    solid = np.zeros(n, dtype=bool) if solid is None else np.asarray(solid, dtype=bool)
    planes = {(int(a), int(s)): str(k) for (a, s), k in (planes or {}).items()}
    wall = tuple(float(w) for w in wall_velocity)
    for (axis, side), kind in planes.items():
        if kind not in (MIRROR, ANTIMIRROR):
            raise ValueError(f"unknown symmetry plane type {kind!r}")
        if kind == MIRROR and wall[axis] != 0.0:
            raise ValueError("a mirror plane needs zero normal wall velocity")

    face_index = []
    face_values = []
    face_weight = []
    offset = 0
    for d in range(3):
        open_sides = tuple(s for (a, s), k in planes.items() if a == d and k == ANTIMIRROR)
        blocked = blocked_faces(solid, d, open_sides)
        idx = np.full(blocked.shape, -1, dtype=np.int64)
        count = int(np.count_nonzero(~blocked))
        idx[~blocked] = np.arange(offset, offset + count)
        offset += count
        vals = np.zeros(blocked.shape)
        weight = np.ones(blocked.shape)
        for side, end in ((-1, 0), (1, n[d])):
            kind = planes.get((d, side))
            if kind is None:
                vals[_end(d, end)] = wall[d]
            elif kind == ANTIMIRROR:
                weight[_end(d, end)] = 0.5
        face_index.append(idx)
        face_values.append(vals)
        face_weight.append(weight)
    nvel = offset

    rows, cols, data = [], [], []
    bc_rhs = np.zeros(nvel)
    diag = np.zeros(nvel)
    row_w = np.ones(nvel)
    for d in range(3):
        idx = face_index[d]
        free = idx >= 0
        me = idx[free]
        row_w[me] = face_weight[d][free]
        for e in range(3):
            c = 1.0 / h[e] ** 2
            for side in _SIDES:
                nb = _shift(idx, e, side, -2)[free]
                nbval = _shift(face_values[d], e, side, 0.0)[free]
                link = nb >= 0
                rows.append(me[link])
                cols.append(nb[link])
                data.append(np.full(np.count_nonzero(link), -c))
                diag[me] += c
                known = nb == -1
                bc_rhs[me[known]] += c * nbval[known]
                ghost = nb == -2
                if not np.any(ghost):
                    continue
                kind = _ghost_kind(planes, e, side, d)
                gme = me[ghost]
                if kind == "wall":
                    # ghost = 2 w - u puts the wall value half a cell away
                    diag[gme] += c
                    bc_rhs[gme] += 2.0 * c * wall[d]
                elif kind == "even":
                    diag[gme] -= c
                elif kind == "odd":
                    diag[gme] += c
                else:
                    # ghost mirrors the face on the far side of the plane
                    far = _shift(idx, e, -side, -2)[free][ghost]
                    farval = _shift(face_values[d], e, -side, 0.0)[free][ghost]
                    flink = far >= 0
                    rows.append(gme[flink])
                    cols.append(far[flink])
                    data.append(np.full(np.count_nonzero(flink), -c))
                    bc_rhs[gme[~flink]] += c * farval[~flink]
    diag += zeroth
    rows.append(np.arange(nvel))
    cols.append(np.arange(nvel))
    data.append(diag)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.concatenate(data) * row_w[rows]
    bc_rhs *= row_w
    A = CsrMatrix.from_coo(rows, cols, data, (nvel, nvel))

    fluid = ~solid
    pidx = np.full(n, -1, dtype=np.int64)
    npres = int(np.count_nonzero(fluid))
    pidx[fluid] = np.arange(npres)
    brows, bcols, bdata = [], [], []
    g = np.zeros(npres)
    for d in range(3):
        idx = face_index[d]
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[d] = slice(0, n[d])
        hi[d] = slice(1, n[d] + 1)
        # B = -div: low face enters with +1/h, high face with -1/h
        for sl, coef in ((tuple(lo), 1.0 / h[d]), (tuple(hi), -1.0 / h[d])):
            fidx = idx[sl][fluid]
            fval = face_values[d][sl][fluid]
            cell = pidx[fluid]
            link = fidx >= 0
            brows.append(cell[link])
            bcols.append(fidx[link])
            bdata.append(np.full(np.count_nonzero(link), coef))
            g[cell[~link]] -= coef * fval[~link]
    B = CsrMatrix.from_coo(np.concatenate(brows), np.concatenate(bcols), np.concatenate(bdata), (npres, nvel))

    return StokesSystem(
        grid=grid,
        solid=solid,
        zeroth=float(zeroth),
        wall_velocity=wall,
        planes=planes,
        A=A,
        B=B,
        bc_rhs=bc_rhs,
        g=g,
        face_index=tuple(face_index),
        face_values=tuple(face_values),
        face_weight=tuple(face_weight),
        pressure_index=pidx,
    )


def velocity_laplacian(sys: StokesSystem, u: VectorFieldMAC, d):
    """``-Lap u_d`` at every face normal to ``d``, ghosts as in the assembly.

    Matrix-free, so it can be evaluated on blocked faces too.  Prescribed
    box-normal layers are left at zero.
    """
    h = sys.grid.h
    c = u[d]
    out = np.zeros_like(c)
    for e in range(3):
        k = 1.0 / h[e] ** 2
        for side in _SIDES:
            nb = _shift(c, e, side, np.nan)
            ghost = np.isnan(nb)
            if np.any(ghost):
                kind = _ghost_kind(sys.planes, e, side, d)
                if kind == "wall":
                    nb[ghost] = 2.0 * sys.wall_velocity[d] - c[ghost]
                elif kind == "even":
                    nb[ghost] = c[ghost]
                elif kind == "odd":
                    nb[ghost] = -c[ghost]
                else:
                    nb[ghost] = _shift(c, e, -side, np.nan)[ghost]
            out += k * (c - nb)
    for side, end in ((-1, 0), (1, -1)):
        if sys.planes.get((d, side)) != ANTIMIRROR:
            out[_end(d, end)] = 0.0
    return out


def solid_reaction_force(sys: StokesSystem, u: VectorFieldMAC, p: ScalarField):
    """Force exerted by the fluid on all solid cells, by momentum balance.

    Sums the residual of the unreduced momentum equation ``-Lap u + grad p``
    over every blocked face touching a solid cell (pressure taken as zero
    inside solids), times the face control volume, and flips the sign.
    Only the part of the solid inside the computational box is counted.
    """
    h = sys.grid.h
    vol = sys.grid.cell_volume
    n = sys.grid.n
    pv = np.where(sys.solid, 0.0, p.values)
    force = np.zeros(3)
    for d in range(3):
        res = velocity_laplacian(sys, u, d)
        grad = np.zeros_like(res)
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        mid = [slice(None)] * 3
        lo[d] = slice(0, n[d] - 1)
        hi[d] = slice(1, n[d])
        mid[d] = slice(1, n[d])
        grad[tuple(mid)] = (pv[tuple(hi)] - pv[tuple(lo)]) / h[d]
        for side, end, cell in ((-1, 0, 0), (1, n[d], n[d] - 1)):
            if sys.planes.get((d, side)) == ANTIMIRROR:
                # odd pressure: the ghost cell holds -p
                grad[_end(d, end)] = -side * 2.0 * pv[_end(d, cell)] / h[d]
        res += grad
        open_sides = tuple(s for (a, s), k in sys.planes.items() if a == d and k == ANTIMIRROR)
        touch = blocked_faces(sys.solid, d, open_sides) & ~blocked_faces(np.zeros_like(sys.solid), d, open_sides)
        force[d] = -vol * float(np.sum((res * sys.face_weight[d])[touch]))
    return force


def face_conductivity(kappa, axis):
    """Harmonic mean of the two cell conductivities across interior faces."""
    n = kappa.shape[axis]
    a = np.take(kappa, np.arange(n - 1), axis=axis)
    b = np.take(kappa, np.arange(1, n), axis=axis)
    # 2 / (1/a + 1/b) cannot overflow for large finite conductivities
    return 2.0 / (1.0 / a + 1.0 / b)


def assemble_diffusion(grid, kappa):
    """``-div(kappa grad theta)`` on cell centres, theta = 0 on the box faces.

    Box faces use a ghost cell mirroring the boundary cell with opposite
    sign, i.e. the conductivity of the boundary cell over half a spacing.
    """
    kappa = np.asarray(kappa, dtype=float)
    if not np.all(np.isfinite(kappa)) or np.any(kappa <= 0):
        raise NonFiniteCoefficient("conductivities must be finite and positive")
    n = grid.n
    h = grid.h
    N = grid.size
    idx = np.arange(N).reshape(n)
    diag = np.zeros(n)
    rows, cols, data = [], [], []
    for e in range(3):
        k = face_conductivity(kappa, e) / h[e] ** 2
        a = np.take(idx, np.arange(n[e] - 1), axis=e).ravel()
        b = np.take(idx, np.arange(1, n[e]), axis=e).ravel()
        kf = k.ravel()
        rows += [a, b]
        cols += [b, a]
        data += [-kf, -kf]
        sl_a = [slice(None)] * 3
        sl_b = [slice(None)] * 3
        sl_a[e] = slice(0, n[e] - 1)
        sl_b[e] = slice(1, n[e])
        diag[tuple(sl_a)] += k
        diag[tuple(sl_b)] += k
        for end in (0, n[e] - 1):
            sl = [slice(None)] * 3
            sl[e] = end
            diag[tuple(sl)] += 2.0 * kappa[tuple(sl)] / h[e] ** 2
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    data.append(diag.ravel())
    return CsrMatrix.from_coo(np.concatenate(rows), np.concatenate(cols), np.concatenate(data), (N, N))


def assemble_advection(grid, u: VectorFieldMAC, scheme="upwind"):
    """Discrete ``u . grad theta`` in flux form on cell centres.

    ``upwind`` takes the upstream cell value on each face; ``skew`` uses
    the centred flux and keeps only its skew-symmetric part, so that
    ``theta^T C theta = 0`` exactly.  Box faces carry no flux because the
    velocity vanishes there.
    """
    n = grid.n
    h = grid.h
    N = grid.size
    idx = np.arange(N).reshape(n)
    rows, cols, data = [], [], []
    for e in range(3):
        inner = [slice(None)] * 3
        inner[e] = slice(1, n[e])
        w = u[e][tuple(inner)].ravel() / h[e]  # face between cells a (low) and b (high)
        a = np.take(idx, np.arange(n[e] - 1), axis=e).ravel()
        b = np.take(idx, np.arange(1, n[e]), axis=e).ravel()
        if scheme == "upwind":
            wp = np.maximum(w, 0.0)
            wm = np.minimum(w, 0.0)
            # flux w*theta_up leaves a and enters b
            rows += [a, a, b, b]
            cols += [a, b, a, b]
            data += [wp, wm, -wp, -wm]
        elif scheme == "skew":
            half = 0.5 * w
            rows += [a, b]
            cols += [b, a]
            data += [half, -half]
        else:
            raise ValueError(f"unknown advection scheme {scheme!r}")
    return CsrMatrix.from_coo(np.concatenate(rows), np.concatenate(cols), np.concatenate(data), (N, N))


def thermal_energy(grid, kappa, theta):
    """Sum of kappa_face |grad theta|^2 times volume, with half-cell boundary links.

    Independent of the assembled matrix; used to check discrete energy
    identities.
    """
    kappa = np.asarray(kappa, dtype=float)
    t = np.asarray(theta, dtype=float)
    h = grid.h
    vol = grid.cell_volume
    total = 0.0
    for e in range(3):
        kf = face_conductivity(kappa, e)
        dt = np.diff(t, axis=e) / h[e]
        total += float(np.sum(kf * dt**2))
        for end in (0, t.shape[e] - 1):
            tb = np.take(t, end, axis=e)
            kb = np.take(kappa, end, axis=e)
            # gradient tb/(h/2) over half a cell
            total += 0.5 * float(np.sum(kb * (2.0 * tb / h[e]) ** 2))
    return total * vol


def velocity_gradient_energy(sys: StokesSystem, u: VectorFieldMAC):
    """Sum |grad u|^2 times volume over the MAC links, wall links over half a cell.

    Links between two prescribed faces are excluded: they carry no
    unknown and do not enter the quadratic form of ``A``.
    """
    h = sys.grid.h
    vol = sys.grid.cell_volume
    total = 0.0
    for d in range(3):
        c = u[d]
        free = sys.face_index[d] >= 0
        for e in range(3):
            dc = np.diff(c, axis=e) / h[e]
            a = np.take(free, np.arange(c.shape[e] - 1), axis=e)
            b = np.take(free, np.arange(1, c.shape[e]), axis=e)
            total += float(np.sum(dc[a | b] ** 2))
            if e != d:
                for end, side in ((0, -1), (c.shape[e] - 1, 1)):
                    kind = _ghost_kind(sys.planes, e, side, d)
                    if kind == "even":
                        continue
                    wall = sys.wall_velocity[d] if kind == "wall" else 0.0
                    cb = np.take(c, end, axis=e)
                    fb = np.take(free, end, axis=e)
                    gb = 2.0 * (cb - wall) / h[e]
                    total += 0.5 * float(np.sum(gb[fb] ** 2))
    return total * vol
