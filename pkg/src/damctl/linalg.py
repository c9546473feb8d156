"""Iterative solvers for the sparse systems arising per time step."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    """Linear solve failed; ``residual`` holds the final relative residual."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


def solve_spd(A, rhs, rtol: float = 1e-10, maxiter: int | None = None, x0=None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients for symmetric positive definite ``A``."""
    A = sp.csr_matrix(A)
    b = np.asarray(rhs, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"matrix shape {A.shape} does not match rhs length {n}")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    d = A.diagonal()
    if np.any(d <= 0):
        raise SolverError("non-positive diagonal, matrix is not SPD", float("inf"))
    dinv = 1.0 / d
    maxiter = 10 * n + 100 if maxiter is None else maxiter

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    res = np.linalg.norm(r) / bnorm
    for _ in range(maxiter):
        if res <= rtol:
            return x
        Ap = A @ p
        pAp = p @ Ap
        if not pAp > 0:
            raise SolverError("conjugate gradient breakdown (p^T A p <= 0)", res)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    # recurrence residual can drift; trust the true one
    res = np.linalg.norm(b - A @ x) / bnorm
    if res <= rtol:
        return x
    raise SolverError(f"conjugate gradient did not converge in {maxiter} iterations", res)


def solve_symmetric(A, rhs, rtol: float = 1e-10, maxiter: int | None = None) -> np.ndarray:
    """Solve a symmetric, possibly indefinite system.

    Tries conjugate gradients first and falls back to MINRES when CG breaks
    down on an indefinite operator.
    """
    try:
        return solve_spd(A, rhs, rtol=rtol, maxiter=maxiter)
    except SolverError:
        pass
    A = sp.csr_matrix(A)
    b = np.asarray(rhs, dtype=float)
    bnorm = np.linalg.norm(b)
    n = b.shape[0]
    maxiter = 10 * n + 100 if maxiter is None else maxiter
    x, _info = spla.minres(A, b, rtol=rtol, maxiter=maxiter)
    res = np.linalg.norm(b - A @ x) / bnorm
    # MINRES measures a preconditioned residual; allow a little slack before giving up
    if res <= 10 * rtol:
        return x
    raise SolverError("MINRES did not converge", res)
