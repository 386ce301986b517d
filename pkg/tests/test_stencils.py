import numpy as np
import pytest

from homogenlab.grid import BoxDomain, GridSpec, VectorFieldMAC
from homogenlab.linalg import SolverConfig, uzawa_solve
from homogenlab.stencils import (
    ANTIMIRROR,
    MIRROR,
    assemble_advection,
    assemble_diffusion,
    assemble_stokes,
    solid_reaction_force,
    thermal_energy,
)

CFG = SolverConfig(rel_tol=1e-10)


def _solve(sys_):
    res = uzawa_solve(sys_.A, sys_.B, sys_.bc_rhs, CFG, g=sys_.g, zero_mean=sys_.pressure_has_kernel)
    return sys_.scatter(res.velocity), sys_.pressure_field(res.pressure)


def _ball(grid, r):
    X, Y, Z = grid.cell_mesh()
    return X**2 + Y**2 + Z**2 < r * r


def test_stokes_operator_is_symmetric_positive():
    g = GridSpec(BoxDomain(), 6)
    solid = _ball(g, 0.0) | (np.indices(g.n).sum(axis=0) == 7)
    sys_ = assemble_stokes(g, solid)
    A = sys_.A.toarray()
    np.testing.assert_allclose(A, A.T, atol=1e-12)
    assert np.linalg.eigvalsh(A).min() > 0


@pytest.mark.parametrize("planes", [{(0, -1): ANTIMIRROR, (1, -1): MIRROR, (2, -1): MIRROR}])
def test_symmetry_planes_keep_operator_symmetric(planes):
    g = GridSpec(BoxDomain(), 5)
    sys_ = assemble_stokes(g, _ball(g, 0.4), wall_velocity=(1.0, 0.0, 0.0), planes=planes)
    A = sys_.A.toarray()
    np.testing.assert_allclose(A, A.T, atol=1e-12)


def test_octant_reduction_matches_full_box():
    # flow past a centred ball, walls moving along e1
    R, r, m = 1.0, 0.35, 8
    full = GridSpec(BoxDomain((-R,) * 3, (R,) * 3), 2 * m)
    sys_f = assemble_stokes(full, _ball(full, r), wall_velocity=(1.0, 0.0, 0.0))
    u_f, p_f = _solve(sys_f)
    F_full = solid_reaction_force(sys_f, u_f, p_f)

    octant = GridSpec(BoxDomain((0.0,) * 3, (R,) * 3), m)
    planes = {(0, -1): ANTIMIRROR, (1, -1): MIRROR, (2, -1): MIRROR}
    sys_o = assemble_stokes(octant, _ball(octant, r), wall_velocity=(1.0, 0.0, 0.0), planes=planes)
    u_o, p_o = _solve(sys_o)
    F_oct = solid_reaction_force(sys_o, u_o, p_o)

    np.testing.assert_allclose(u_o[0], u_f[0][m:, m:, m:], atol=1e-7)
    np.testing.assert_allclose(u_o[1], u_f[1][m:, m:, m:], atol=1e-7)
    np.testing.assert_allclose(u_o[2], u_f[2][m:, m:, m:], atol=1e-7)
    np.testing.assert_allclose(p_o.values, p_f.values[m:, m:, m:], atol=1e-6)
    assert 8 * F_oct[0] == pytest.approx(F_full[0], rel=1e-6)
    assert abs(F_full[1]) < 1e-6 * abs(F_full[0]) and abs(F_full[2]) < 1e-6 * abs(F_full[0])


def test_reaction_force_flips_with_wall_velocity():
    g = GridSpec(BoxDomain((-1,) * 3, (1,) * 3), 10)
    solid = _ball(g, 0.35)
    F = [solid_reaction_force(s, *_solve(s)) for s in
         (assemble_stokes(g, solid, wall_velocity=(w, 0.0, 0.0)) for w in (1.0, -1.0))]
    np.testing.assert_allclose(F[0], -F[1], rtol=1e-8, atol=1e-10)
    assert F[0][0] > 0


def test_diffusion_matrix_symmetric_and_energy_consistent():
    g = GridSpec(BoxDomain(), 5)
    kappa = 1.0 + np.random.default_rng(0).uniform(size=g.n) * 100
    K = assemble_diffusion(g, kappa)
    D = K.toarray()
    np.testing.assert_allclose(D, D.T, rtol=1e-14)
    t = np.random.default_rng(1).normal(size=g.n)
    quad = float(t.ravel() @ (K @ t.ravel())) * g.cell_volume
    assert quad == pytest.approx(thermal_energy(g, kappa, t), rel=1e-12)


def _solenoidal(g):
    # discrete curl of a node-based stream function vanishing on the box, so the MAC divergence is zero
    Xn = [g.nodes(a) for a in range(3)]
    x, y, z = np.meshgrid(*Xn, indexing="ij")
    psi = np.sin(np.pi * x) * np.sin(np.pi * y) * np.sin(np.pi * z) ** 2
    hx, hy, _hz = g.h
    # u_x = d psi / d y on x-faces, u_y = -d psi / d x on y-faces (z-averaged)
    ux = np.diff(psi, axis=1)[:, :, :-1] / hy * 0.5 + np.diff(psi, axis=1)[:, :, 1:] / hy * 0.5
    uy = -(np.diff(psi, axis=0)[:, :, :-1] / hx * 0.5 + np.diff(psi, axis=0)[:, :, 1:] / hx * 0.5)
    return VectorFieldMAC(g, (ux, uy, np.zeros(g.face_shape(2))))


def test_solenoidal_helper_is_divergence_free():
    g = GridSpec(BoxDomain(), 6)
    assert np.max(np.abs(_solenoidal(g).divergence())) < 1e-12


def test_skew_advection_is_antisymmetric_and_upwind_conserves():
    g = GridSpec(BoxDomain(), 6)
    u = _solenoidal(g)
    S = assemble_advection(g, u, "skew").toarray()
    np.testing.assert_allclose(S, -S.T, atol=1e-12)
    U = assemble_advection(g, u, "upwind").toarray()
    # flux form: column sums vanish (nothing created), row sums equal div u = 0
    np.testing.assert_allclose(U.sum(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(U.sum(axis=1), 0.0, atol=1e-10)
    with pytest.raises(ValueError):
        assemble_advection(g, u, "central")
