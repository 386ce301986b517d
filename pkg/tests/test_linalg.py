import itertools

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from homogenlab.errors import IndefiniteBreakdown, MaxIterExceeded
from homogenlab.grid import BoxDomain, GridSpec, VectorFieldMAC
from homogenlab.linalg import (
    CsrMatrix,
    SolverConfig,
    bicgstab_solve,
    cg_solve,
    uzawa_solve,
)
from homogenlab.stencils import assemble_stokes

TIGHT = SolverConfig(rel_tol=1e-12, abs_tol=1e-30)


def poisson_1d(n):
    return CsrMatrix.from_scipy(sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]))


def random_spd(seed, n):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n))
    return CsrMatrix.from_scipy(sp.csr_matrix(M @ M.T + n * np.eye(n)))


def test_csr_rejects_bad_structure():
    with pytest.raises(ValueError):
        CsrMatrix(np.array([0, 2, 1]), np.array([0, 1]), np.ones(2), (2, 2))
    with pytest.raises(ValueError):
        CsrMatrix(np.array([0, 1, 2]), np.array([0, 5]), np.ones(2), (2, 2))


def test_cg_identity_one_iteration():
    e1 = np.array([1.0, 0, 0, 0])
    res = cg_solve(CsrMatrix.identity(4), e1, TIGHT)
    np.testing.assert_array_equal(res.solution, e1)
    assert res.iterations == 1


def test_cg_poisson_three_points():
    res = cg_solve(poisson_1d(3), np.ones(3), TIGHT)
    np.testing.assert_allclose(res.solution, [1.5, 2.0, 1.5], rtol=1e-12)


def test_cg_zero_rhs():
    res = cg_solve(poisson_1d(5), np.zeros(5), TIGHT)
    assert res.iterations == 0
    assert not np.any(res.solution)


def test_cg_detects_indefinite():
    A = CsrMatrix.from_scipy(sp.diags([1.0, -1.0]))
    with pytest.raises(IndefiniteBreakdown):
        cg_solve(A, np.ones(2), SolverConfig(preconditioner="none"))


def test_cg_max_iter():
    with pytest.raises(MaxIterExceeded):
        cg_solve(poisson_1d(200), np.ones(200), SolverConfig(rel_tol=1e-12, max_iter=3, preconditioner="none"))


def test_bicgstab_bidiagonal():
    A = CsrMatrix.from_scipy(sp.csr_matrix(np.array([[1.0, 1.0], [0.0, 1.0]])))
    res = bicgstab_solve(A, np.array([2.0, 1.0]), TIGHT)
    np.testing.assert_allclose(res.solution, [1.0, 1.0], rtol=1e-12)


def test_bicgstab_zero_rhs():
    res = bicgstab_solve(poisson_1d(4), np.zeros(4), TIGHT)
    assert not np.any(res.solution)


def test_bicgstab_matches_cg_on_spd():
    A = poisson_1d(50)
    b = np.sin(np.arange(50.0))
    cfg = SolverConfig(rel_tol=1e-10)
    x1 = cg_solve(A, b, cfg).solution
    x2 = bicgstab_solve(A, b, cfg).solution
    assert np.linalg.norm(x1 - x2) <= 10 * cfg.rel_tol * np.linalg.norm(x1) * 50


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 30), method=st.sampled_from(["cg", "bicgstab"]))
def test_reported_residual_is_true_residual(seed, n, method):
    A = random_spd(seed, n)
    b = np.random.default_rng(seed + 1).normal(size=n)
    solve = cg_solve if method == "cg" else bicgstab_solve
    res = solve(A, b, SolverConfig(rel_tol=1e-10))
    true = np.linalg.norm(A @ res.solution - b)
    assert res.residual == pytest.approx(true, rel=1e-13, abs=1e-300)
    assert res.residual <= 1e-10 * np.linalg.norm(b)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 40), pc=st.sampled_from(["none", "jacobi"]))
def test_cg_reported_residuals_nonincreasing(seed, n, pc):
    # CG minimizes the A-norm of the error, so this holds on these well-conditioned
    # systems but is not a theorem for the residual 2-norm in general
    A = random_spd(seed, n)
    b = np.random.default_rng(seed + 2).normal(size=n)
    history = []
    cg_solve(A, b, SolverConfig(rel_tol=1e-10, preconditioner=pc), callback=lambda k, r: history.append(r))
    assert all(r2 <= r1 for r1, r2 in itertools.pairwise(history))


def test_uzawa_zero_force():
    sys = assemble_stokes(GridSpec(BoxDomain(), 4))
    res = uzawa_solve(sys.A, sys.B, np.zeros(sys.n_velocity), TIGHT)
    assert not np.any(res.velocity) and not np.any(res.pressure)


def test_uzawa_uniform_body_force_is_divergence_free():
    g = GridSpec(BoxDomain(), 8)
    sys = assemble_stokes(g)
    # a constant force is a pure gradient; add a swirl so the flow is nontrivial
    X, _Y, _Z = g.face_mesh(2)
    force = VectorFieldMAC(g, (np.zeros(g.face_shape(0)), np.zeros(g.face_shape(1)), 1.0 + X))
    res = uzawa_solve(sys.A, sys.B, sys.momentum_rhs(force), SolverConfig(rel_tol=1e-10))
    assert np.max(np.abs(sys.B @ res.velocity)) <= 1e-8
    assert abs(res.pressure.mean()) <= 1e-12
    assert np.max(np.abs(res.velocity)) > 0


def test_uzawa_two_cell_toy_matches_dense_kkt():
    # two velocity unknowns per pressure pair; B has the constant kernel on its rows
    A = CsrMatrix.from_scipy(sp.csr_matrix(np.array([[4.0, -1.0, 0.0], [-1.0, 4.0, -1.0], [0.0, -1.0, 4.0]])))
    B = CsrMatrix.from_scipy(sp.csr_matrix(np.array([[1.0, -1.0, 0.0], [0.0, 1.0, -1.0]])))
    f = np.array([1.0, 2.0, -0.5])
    res = uzawa_solve(A, B, f, TIGHT, zero_mean=False)
    K = np.block([[A.toarray(), B.toarray().T], [B.toarray(), np.zeros((2, 2))]])
    x = np.linalg.solve(K, np.concatenate([f, np.zeros(2)]))
    np.testing.assert_allclose(res.velocity, x[:3], rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(res.pressure, x[3:], rtol=1e-9, atol=1e-12)


def test_uzawa_pressure_mean_zero_with_kernel():
    g = GridSpec(BoxDomain(), 6)
    sys = assemble_stokes(g)
    f = np.random.default_rng(3).normal(size=sys.n_velocity)
    res = uzawa_solve(sys.A, sys.B, f, SolverConfig(rel_tol=1e-10))
    assert abs(res.pressure.mean()) <= 1e-12
    assert np.linalg.norm(sys.B @ res.velocity) <= 1e-8
    momentum = sys.A @ res.velocity + sys.B.rmatvec(res.pressure) - f
    assert np.linalg.norm(momentum) <= 1e-6 * np.linalg.norm(f)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 30))
def test_krylov_solvers_match_direct_solve(seed, n):
    rng = np.random.default_rng(seed)
    A = random_spd(seed, n)
    b = rng.normal(size=n)
    ref = spla.spsolve(A.to_scipy().tocsc(), b)
    np.testing.assert_allclose(cg_solve(A, b, TIGHT).solution, ref, rtol=1e-7, atol=1e-9)
    N = sp.csr_matrix(rng.normal(size=(n, n)) + 3 * n * np.eye(n))
    ref_n = spla.spsolve(N.tocsc(), b)
    np.testing.assert_allclose(bicgstab_solve(CsrMatrix.from_scipy(N), b, TIGHT).solution, ref_n, rtol=1e-7, atol=1e-9)
