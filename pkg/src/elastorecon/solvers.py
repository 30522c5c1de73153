"""Conjugate gradients with curvature monitoring, preconditioners and a Lanczos estimate."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import eigh_tridiagonal

log = logging.getLogger(__name__)

PRECONDITIONERS = ("none", "jacobi", "amg", "lu")


class SolverError(RuntimeError):
    pass


class IndefiniteOperatorError(SolverError):
    """CG met a direction of non-positive curvature."""

    def __init__(self, iteration, curvature):
        self.iteration = iteration
        self.curvature = curvature
        super().__init__(f"non-positive curvature p^T A p = {curvature:.3e} at CG iteration {iteration}")


class ConvergenceError(SolverError):
    def __init__(self, iterations, residual, tol):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"CG stopped after {iterations} iterations at relative residual {residual:.3e} > {tol:.1e}")


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float  # relative, ||b - A x|| / ||b||
    converged: bool


def make_preconditioner(A, kind="none"):
    """Return a callable applying the preconditioner, or None."""
    if kind == "none" or kind is None:
        return None
    if kind == "jacobi":
        d = A.diagonal()
        if np.any(d <= 0):
            raise IndefiniteOperatorError(0, float(d.min()))
        inv = 1.0 / d
        return lambda r: inv * r
    if kind == "amg":
        import pyamg

        ml = pyamg.smoothed_aggregation_solver(sp.csr_matrix(A), symmetry="symmetric", max_coarse=500)
        P = ml.aspreconditioner(cycle="V")
        return lambda r: P @ r
    if kind == "lu":
        # exact factorization: CG then only polishes the residual
        lu = spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A")
        return lu.solve
    raise ValueError(f"unknown preconditioner {kind!r}; expected one of {PRECONDITIONERS}")


def cg(A, b, x0=None, tol=1e-10, maxiter=None, precond="none", raise_on_fail=True):
    """Preconditioned CG for SPD ``A`` with relative residual ``tol``.

    Non-positive curvature raises :class:`IndefiniteOperatorError`; running out
    of iterations raises :class:`ConvergenceError` unless ``raise_on_fail``
    is false.
    """
    n = b.shape[0]
    maxiter = maxiter or 20 * n
    M = make_preconditioner(A, precond) if isinstance(precond, str) or precond is None else precond
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0, True)
    r = b - A @ x
    z = r if M is None else M(r)
    p = z.copy()
    rz = r @ z
    res = np.linalg.norm(r) / bnorm
    it = 0
    while res > tol and it < maxiter:
        Ap = A @ p
        curv = p @ Ap
        if not curv > 0.0:
            raise IndefiniteOperatorError(it, float(curv))
        step = rz / curv
        x += step * p
        r -= step * Ap
        it += 1
        res = np.linalg.norm(r) / bnorm
        z = r if M is None else M(r)
        rz_new = r @ z
        p *= rz_new / rz
        p += z
        rz = rz_new
    converged = res <= tol
    log.debug("cg: %d iterations, relative residual %.3e", it, res)
    if not converged and raise_on_fail:
        raise ConvergenceError(it, res, tol)
    return CGResult(x, it, float(res), converged)


def lanczos_extremes(A, steps=20, seed=0):
    """Smallest and largest Ritz values after ``steps`` Lanczos steps (full reorthogonalization)."""
    n = A.shape[0]
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    Q = np.zeros((min(steps, n), n))
    alpha, beta = [], []
    b = 0.0
    q_prev = np.zeros(n)
    for k in range(min(steps, n)):
        Q[k] = q
        w = A @ q - b * q_prev
        a = q @ w
        w -= a * q
        w -= Q[:k + 1].T @ (Q[:k + 1] @ w)
        alpha.append(a)
        b = np.linalg.norm(w)
        if b < 1e-14 or k == min(steps, n) - 1:
            break
        beta.append(b)
        q_prev, q = q, w / b
    ritz = eigh_tridiagonal(np.array(alpha), np.array(beta[:len(alpha) - 1]), eigvals_only=True)
    return float(ritz[0]), float(ritz[-1])
