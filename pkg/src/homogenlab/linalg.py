"""Sparse CSR storage and the Krylov solvers used by every PDE module.

The matrix-vector product is delegated to ``scipy.sparse``; the solver
iterations (CG, BiCGSTAB and the Uzawa saddle-point driver) are written
out here so that iteration counts, breakdown detection and the returned
residuals follow one contract.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import IndefiniteBreakdown, MaxIterExceeded, Stagnation

logger = logging.getLogger(__name__)

PRECONDITIONERS = ("none", "jacobi")


class CsrMatrix:
    """Compressed sparse row matrix with validated structure.

    Rows are sorted and duplicate column entries are summed on
    construction, so ``indices`` never repeats a column within a row.
    """

    def __init__(self, indptr, indices, data, shape):
        indptr = np.asarray(indptr, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        data = np.asarray(data, dtype=float)
        nrows, ncols = (int(s) for s in shape)
        if indptr.shape != (nrows + 1,) or indptr[0] != 0 or np.any(np.diff(indptr) < 0):
            raise ValueError("row offsets must be nondecreasing and start at 0")
        if indptr[-1] != len(indices) or len(indices) != len(data):
            raise ValueError("offsets, indices and values disagree in length")
        if len(indices) and (indices.min() < 0 or indices.max() >= ncols):
            raise ValueError("column index out of range")
        mat = sp.csr_matrix((data, indices, indptr), shape=(nrows, ncols))
        mat.sum_duplicates()
        mat.sort_indices()
        self._mat = mat

    @classmethod
    def from_coo(cls, rows, cols, vals, shape):
        mat = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
        return cls(mat.indptr, mat.indices, mat.data, shape)

    @classmethod
    def from_scipy(cls, mat):
        mat = sp.csr_matrix(mat)
        return cls(mat.indptr, mat.indices, mat.data, mat.shape)

    @classmethod
    def identity(cls, n):
        return cls.from_scipy(sp.identity(n, format="csr"))

    @property
    def indptr(self):
        return self._mat.indptr

    @property
    def indices(self):
        return self._mat.indices

    @property
    def data(self):
        return self._mat.data

    @property
    def shape(self):
        return self._mat.shape

    @property
    def nnz(self):
        return self._mat.nnz

    def matvec(self, x):
        return self._mat @ x

    def __matmul__(self, x):
        return self._mat @ x

    def rmatvec(self, y):
        return self._mat.T @ y

    def diagonal(self):
        return self._mat.diagonal()

    def transpose(self):
        return CsrMatrix.from_scipy(self._mat.T.tocsr())

    @property
    def T(self):
        return self.transpose()

    def __add__(self, other):
        return CsrMatrix.from_scipy(self._mat + other._mat)

    def scaled(self, alpha):
        return CsrMatrix.from_scipy(self._mat * alpha)

    def to_scipy(self):
        return self._mat.copy()

    def toarray(self):
        return self._mat.toarray()

    def __repr__(self):
        return f"CsrMatrix(shape={self.shape}, nnz={self.nnz})"


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-14
    max_iter: int = 10000
    preconditioner: str = "jacobi"

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("solver tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"preconditioner must be one of {PRECONDITIONERS}")

    def tightened(self, factor):
        return replace(self, rel_tol=self.rel_tol * factor, abs_tol=self.abs_tol * factor)


class SolveResult(NamedTuple):
    solution: np.ndarray
    iterations: int
    residual: float


def _jacobi(A, cfg):
    if cfg.preconditioner == "none":
        return None
    d = A.diagonal()
    inv = np.ones_like(d)
    nz = d != 0
    inv[nz] = 1.0 / d[nz]
    return inv


def _target(bnorm, cfg):
    return max(cfg.rel_tol * bnorm, cfg.abs_tol)


def cg_solve(A, rhs, cfg=None, x0=None, callback: Callable | None = None):
    """Jacobi-preconditioned conjugate gradients for SPD ``A``.

    Stops once ``||A x - rhs|| <= max(rel_tol ||rhs||, abs_tol)``; the
    returned residual is recomputed from the final iterate.
    ``callback(k, rnorm)`` sees the recursive residual after every step.
    """
    cfg = cfg or SolverConfig()
    b = np.asarray(rhs, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if x0 is None:
        if bnorm == 0.0:
            return SolveResult(np.zeros_like(b), 0, 0.0)
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - A @ x
    target = _target(bnorm, cfg)
    rnorm = float(np.linalg.norm(r))
    if rnorm <= target:
        return SolveResult(x, 0, rnorm)

    minv = _jacobi(A, cfg)
    z = r * minv if minv is not None else r.copy()
    p = z.copy()
    rz = float(r @ z)
    for k in range(1, cfg.max_iter + 1):
        q = A @ p
        pq = float(p @ q)
        if not pq > 0.0:
            raise IndefiniteBreakdown(f"p.Ap = {pq:.3e} at iteration {k}")
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        rnorm = float(np.linalg.norm(r))
        if callback is not None:
            callback(k, rnorm)
        if rnorm <= target:
            r = b - A @ x
            true_norm = float(np.linalg.norm(r))
            if true_norm <= target:
                return SolveResult(x, k, true_norm)
            # recursive residual drifted; restart from the true one
            z = r * minv if minv is not None else r.copy()
            p = z.copy()
            rz = float(r @ z)
            continue
        z = r * minv if minv is not None else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise MaxIterExceeded(f"CG did not reach {target:.3e} in {cfg.max_iter} iterations (at {rnorm:.3e})")


def bicgstab_solve(A, rhs, cfg=None, x0=None, callback: Callable | None = None):
    """Right-preconditioned BiCGSTAB for nonsymmetric nonsingular ``A``."""
    cfg = cfg or SolverConfig()
    b = np.asarray(rhs, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if x0 is None:
        if bnorm == 0.0:
            return SolveResult(np.zeros_like(b), 0, 0.0)
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - A @ x
    target = _target(bnorm, cfg)
    rnorm = float(np.linalg.norm(r))
    if rnorm <= target:
        return SolveResult(x, 0, rnorm)

    minv = _jacobi(A, cfg)

    def prec(v):
        return v * minv if minv is not None else v

    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    tiny = np.finfo(float).tiny
    for k in range(1, cfg.max_iter + 1):
        rho_new = float(r_hat @ r)
        if abs(rho_new) <= tiny:
            raise Stagnation(f"rho vanished at iteration {k}")
        beta = (rho_new / rho) * (alpha / omega)
        p = r + beta * (p - omega * v)
        phat = prec(p)
        v = A @ phat
        denom = float(r_hat @ v)
        if abs(denom) <= tiny:
            raise Stagnation(f"r_hat.v vanished at iteration {k}")
        alpha = rho_new / denom
        s = r - alpha * v
        snorm = float(np.linalg.norm(s))
        if snorm <= target:
            x += alpha * phat
            true_norm = float(np.linalg.norm(b - A @ x))
            if callback is not None:
                callback(k, true_norm)
            if true_norm <= target:
                return SolveResult(x, k, true_norm)
            r = b - A @ x
            r_hat = r.copy()
            rho = alpha = omega = 1.0
            v[:] = 0.0
            p[:] = 0.0
            continue
        shat = prec(s)
        t = A @ shat
        tt = float(t @ t)
        if tt <= tiny:
            raise Stagnation(f"t vanished at iteration {k}")
        omega = float(t @ s) / tt
        if omega == 0.0:
            raise Stagnation(f"omega vanished at iteration {k}")
        x += alpha * phat + omega * shat
        r = s - omega * t
        rho = rho_new
        rnorm = float(np.linalg.norm(r))
        if not math.isfinite(rnorm):
            raise Stagnation(f"non-finite residual at iteration {k}")
        if callback is not None:
            callback(k, rnorm)
        if rnorm <= target:
            true_norm = float(np.linalg.norm(b - A @ x))
            if true_norm <= target:
                return SolveResult(x, k, true_norm)
            r = b - A @ x
            r_hat = r.copy()
            rho = alpha = omega = 1.0
            v[:] = 0.0
            p[:] = 0.0
    raise MaxIterExceeded(
        f"BiCGSTAB did not reach {target:.3e} in {cfg.max_iter} iterations (at {rnorm:.3e})"
    )


@dataclass
class UzawaResult:
    velocity: np.ndarray
    pressure: np.ndarray
    iterations: int = 0
    residual: float = 0.0
    inner_iterations: int = 0
    history: list = field(default_factory=list, repr=False)

    def __iter__(self):
        yield self.velocity
        yield self.pressure


def uzawa_solve(A, B, f, cfg=None, g=None, inner_cfg=None, zero_mean=True):
    """Solve the saddle-point system ``A u + B^T p = f``, ``B u = g``.

    CG runs on the pressure Schur complement ``B A^-1 B^T``; each
    application of ``A^-1`` is an inner CG solve at 0.01 x the outer
    tolerances unless ``inner_cfg`` says otherwise.  With ``zero_mean``
    the pressure is kept orthogonal to constants, which is the kernel of
    ``B^T`` when every boundary velocity is prescribed.  The outer stop
    test is on the constraint residual ``||B u - g||`` relative to its
    value at ``p = 0``.
    """
    cfg = cfg or SolverConfig()
    inner_cfg = inner_cfg or cfg.tightened(0.01)
    f = np.asarray(f, dtype=float)
    m = B.shape[0]
    g = np.zeros(m) if g is None else np.asarray(g, dtype=float)

    if not np.any(f) and not np.any(g):
        return UzawaResult(np.zeros(A.shape[0]), np.zeros(m))

    def project(v):
        return v - v.mean() if zero_mean else v

    inner_total = 0

    def solve_a(rhs):
        nonlocal inner_total
        res = cg_solve(A, rhs, inner_cfg)
        inner_total += res.iterations
        return res.solution

    u = solve_a(f)
    p = np.zeros(m)
    r = project(B @ u - g)
    rr = float(r @ r)
    r0 = math.sqrt(rr)
    target = max(cfg.rel_tol * r0, cfg.abs_tol)
    history = [r0]
    if r0 <= target:
        return UzawaResult(u, p, 0, r0, inner_total, history)
    d = r.copy()
    for k in range(1, cfg.max_iter + 1):
        w = solve_a(B.rmatvec(d))
        sd = B @ w
        dsd = float(d @ sd)
        if not dsd > 0.0:
            raise IndefiniteBreakdown(f"Schur complement curvature {dsd:.3e} at iteration {k}")
        alpha = rr / dsd
        p += alpha * d
        u -= alpha * w
        r = project(r - alpha * sd)
        rr_new = float(r @ r)
        rnorm = math.sqrt(rr_new)
        history.append(rnorm)
        if rnorm <= target:
            if zero_mean:
                p -= p.mean()
            resid = float(np.linalg.norm(project(B @ u - g)))
            logger.debug("uzawa converged: %d outer, %d inner, residual %.3e", k, inner_total, resid)
            return UzawaResult(u, p, k, resid, inner_total, history)
        d = r + (rr_new / rr) * d
        rr = rr_new
    raise MaxIterExceeded(f"Uzawa did not reach {target:.3e} in {cfg.max_iter} outer iterations")
