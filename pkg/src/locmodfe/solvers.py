"""Conjugate-gradient solvers: plain, diagonally scaled and SSOR preconditioned."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from .exceptions import NonpositiveDiagonal, NotConverged

CG = "cg"
DPCG = "dpcg"
SSOR = "ssor"
DENSE = "dense"
METHODS = (CG, DPCG, SSOR, DENSE)
RECURSIVE = "recursive"
TRUE = "true"

RESIDUAL_REFRESH = 50
DIVERGENCE_FACTOR = 1e10  # give up once the residual grew this much
DENSE_MAX_N = 2000


@dataclass(frozen=True)
class SolverConfig:
    method: str = CG
    abs_tolerance: float = 1e-12
    max_iterations: int = 100000
    omega: float = 1.2
    raise_on_failure: bool = True
    residual: str = RECURSIVE  # stopping test on the updated or the true residual

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown solver {self.method!r}; choose from {METHODS}")
        if self.method == SSOR and not 0.0 < self.omega < 2.0:
            raise ValueError("SSOR relaxation parameter must lie in (0, 2)")
        if self.abs_tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.residual not in (RECURSIVE, TRUE):
            raise ValueError(f"residual must be {RECURSIVE!r} or {TRUE!r}")


@dataclass
class SolverReport:
    method: str
    iterations: int
    final_residual: float
    converged: bool
    wall_time: float
    residuals: list = field(default_factory=list, repr=False)
    true_residual: float = float("nan")  # ||b - A x|| of the returned iterate


def diag_scaling(A):
    """Return ``D^{-1/2}`` as a vector; raises for non-positive diagonals."""
    d = np.asarray(A.diagonal(), dtype=float)
    if np.any(d <= 0):
        raise NonpositiveDiagonal(f"diagonal entry {int(np.argmin(d))} is {d.min():.3e}")
    return 1.0 / np.sqrt(d)


def _pcg(A, b, x0, precond, tol, maxit, true_residual=False):
    """Preconditioned CG on ``A x = b``; returns ``(x, iterations, residuals, converged)``.

    By default convergence is declared on the Euclidean norm of the
    recursively updated residual, as textbook CG does.  With
    ``true_residual`` the residual is recomputed as ``b - A x`` every
    ``RESIDUAL_REFRESH`` iterations and convergence is confirmed on it, which
    can stall at the round-off floor of badly scaled systems.  Round-off
    divergence (residual growth beyond ``DIVERGENCE_FACTOR``) ends the
    iteration unconverged.
    """
    x = np.array(x0, dtype=float, copy=True)
    r = b - A @ x
    res = [float(np.linalg.norm(r))]
    if res[-1] <= tol:
        return x, 0, res, True
    z = precond(r)
    p = z.copy()
    rz = float(r @ z)
    it = 0
    while it < maxit:
        q = A @ p
        it += 1
        pq = float(p @ q)
        if not pq > 0 or not np.isfinite(pq):
            # loss of positivity or overflow: stagnation below round-off
            break
        alpha = rz / pq
        x += alpha * p
        if true_residual and it % RESIDUAL_REFRESH == 0:
            r = b - A @ x
        else:
            r -= alpha * q
        rn = float(np.linalg.norm(r))
        res.append(rn)
        if not rn <= DIVERGENCE_FACTOR * res[0]:
            break
        if rn <= tol:
            if not true_residual:
                return x, it, res, True
            # confirm with the true residual
            rt = float(np.linalg.norm(b - A @ x))
            if rt <= tol:
                res[-1] = rt
                return x, it, res, True
            r = b - A @ x
        z = precond(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, it, res, False


def _ssor_preconditioner(A, omega):
    A = sp.csr_matrix(A)
    d = A.diagonal()
    if np.any(d <= 0):
        raise NonpositiveDiagonal("SSOR needs a positive diagonal")
    dw = d / omega
    lower = (sp.tril(A, k=-1) + sp.diags(dw)).tocsr()
    upper = (sp.triu(A, k=1) + sp.diags(dw)).tocsr()
    scale = (2.0 - omega) / omega

    def apply(r):
        y = spsolve_triangular(lower, r, lower=True)
        y = dw * y
        z = spsolve_triangular(upper, y, lower=False)
        return scale * z

    return apply


def dense_cholesky_solve(A, b):
    """Unpivoted dense Cholesky; test oracle for small systems."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    if A.shape[0] > DENSE_MAX_N:
        raise ValueError(f"dense oracle limited to n <= {DENSE_MAX_N}")
    c = scipy.linalg.cho_factor(A, lower=True)
    return scipy.linalg.cho_solve(c, b)


def solve(A, b, config: SolverConfig = SolverConfig(), x0=None):
    """Solve the SPD system ``A x = b``.

    ``dpcg`` runs CG on ``D^{-1/2} A D^{-1/2}``, its residual and stopping
    test refer to the scaled system.  Iterations count matrix-vector
    products of the main loop.
    """
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    x0 = np.zeros_like(b) if x0 is None else np.asarray(x0, dtype=float)
    tol, maxit = config.abs_tolerance, config.max_iterations
    tr = config.residual == TRUE
    if config.method == DENSE:
        x = dense_cholesky_solve(A, b)
        rn = float(np.linalg.norm(b - A @ x))
        rep = SolverReport(DENSE, 0, rn, True, time.perf_counter() - t0, [rn])
        return x, rep
    if config.method == CG:
        x, it, res, ok = _pcg(A, b, x0, lambda r: r.copy(), tol, maxit, tr)
    elif config.method == DPCG:
        s = diag_scaling(A)
        As = sp.diags(s) @ A @ sp.diags(s)
        xs, it, res, ok = _pcg(sp.csr_matrix(As), s * b, x0 / s, lambda r: r.copy(), tol, maxit, tr)
        x = s * xs
    else:
        x, it, res, ok = _pcg(A, b, x0, _ssor_preconditioner(A, config.omega), tol, maxit, tr)
    rt = float(np.linalg.norm(b - A @ x))
    rep = SolverReport(config.method, it, res[-1], ok, time.perf_counter() - t0, res, rt)
    if not ok and config.raise_on_failure:
        raise NotConverged(
            f"{config.method} stopped after {it} iterations at residual {res[-1]:.3e}", x, rep
        )
    return x, rep
