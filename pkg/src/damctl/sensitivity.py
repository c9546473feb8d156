"""Linearized state system and the backward adjoint system.

The adjoint is solved in reversed time ``s = T - t`` with the decoupled
scheme: at each reversed step the vector equation for ``p`` uses the
previous ``q``, then the scalar equation for ``q`` uses the new ``p``.
Results are returned in the original time orientation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import assembly as asm
from .control import Control, sigma_inner
from .linalg import SolverError, solve_spd, solve_symmetric
from .materials import eval_c, eval_f, eval_xi
from .state import StateProblem, StateTrajectory


@dataclass(eq=False)
class LinearizedTrajectory:
    tau: float
    udot: np.ndarray
    chidot: np.ndarray


@dataclass(eq=False)
class CoefficientTrajectory:
    a: np.ndarray
    b_coef: np.ndarray


@dataclass(eq=False)
class AdjointTrajectory:
    mesh: object
    tau: float
    p: np.ndarray
    q: np.ndarray

    def boundary_p(self) -> np.ndarray:
        """Trace of p on the boundary vertices, shape (M+1, n_boundary, 2)."""
        ids = self.mesh.boundary_vertex_ids
        return self.p.reshape(len(self.p), -1, 2)[:, ids, :]


def _check_pair(problem: StateProblem, traj: StateTrajectory):
    if traj.mesh is not problem.mesh or traj.M != problem.M or not np.isclose(traj.tau, problem.tau):
        raise ValueError("trajectory was not computed for this problem")


def solve_linearized(problem: StateProblem, traj: StateTrajectory, h: Control) -> LinearizedTrajectory:
    """Exact tangent of the discrete control-to-state map in direction ``h``."""
    _check_pair(problem, traj)
    problem._check_control(h)
    ops, law, tau, mesh = problem.ops, problem.law, problem.tau, problem.mesh
    M, m = problem.M, mesh.n_vertices
    A0 = ops.M + ops.K
    inertia = ops.Mv / tau**2
    visc = (law.mu_visc / tau) * ops.E1
    U, X = traj.u, traj.chi

    Ud = np.zeros((M + 1, 2 * m))
    Xd = np.zeros((M + 1, m))
    ud_prev2 = np.zeros(2 * m)
    for k in range(1, M + 1):
        r = (X[k] - X[k - 1]) / tau
        _, dxi, _ = eval_xi(law, r)
        _, d2f = eval_f(law, X[k])
        rate_op = A0 / tau + sp.diags(ops.ML * dxi / tau)
        J = rate_op + ops.K + sp.diags(ops.ML * d2f)
        _, dc_prev, d2c_prev = eval_c(law, X[k - 1])
        e_prev = asm.strain_energy_density(mesh, U[k - 1], law.lame)
        dG = 0.5 * asm.assemble_cell_load(mesh, d2c_prev * Xd[k - 1], e_prev)
        dG += asm.assemble_coupling(mesh, dc_prev, U[k - 1], law.lame).T @ Ud[k - 1]
        Xd[k] = solve_spd(J, rate_op @ Xd[k - 1] - dG, rtol=problem.rtol)

        c, dc, _ = eval_c(law, X[k])
        A = inertia + ops.elasticity(c) + visc
        forcing = asm.assemble_coupling(mesh, np.ones(m), U[k], law.lame) @ (dc * Xd[k])
        rhs = inertia @ (2.0 * Ud[k - 1] - ud_prev2) + visc @ Ud[k - 1] - forcing + ops.boundary_load(h.values[k])
        Ud[k] = solve_spd(A, rhs, rtol=problem.rtol)
        ud_prev2 = Ud[k - 1]
    return LinearizedTrajectory(tau, Ud, Xd)


def _moving_average(arr):
    out = arr.copy()
    out[1:-1] = (arr[:-2] + arr[1:-1] + arr[2:]) / 3.0
    return out


def compute_coefficients(traj: StateTrajectory, law, smooth: bool = False) -> CoefficientTrajectory:
    """Vertexwise ``a^k = xi'(chi_t)`` and ``b^k = xi''(chi_t) chi_tt`` in original time orientation.

    ``chi_t`` is the original-time backward difference, so under ``s = T - t``
    these equal ``xi'(-d_s chi)`` and ``xi''(-d_s chi) d_ss chi``.
    """
    if traj.M < 2:
        raise ValueError("coefficient trajectory needs M >= 2")
    rate, acc = traj.chi_t, traj.chi_tt
    if smooth:
        rate, acc = _moving_average(rate), _moving_average(acc)
    _, dxi, d2xi = eval_xi(law, rate)
    return CoefficientTrajectory(dxi, d2xi * acc)


def solve_adjoint(problem: StateProblem, traj: StateTrajectory, chi_T, lambda_T: float,
                  smooth: bool = False, form: str = "conservative") -> AdjointTrajectory:
    """Backward sweep for (p, q).

    ``form`` selects how the rate term ``((M + K) q + xi'(chi_t) q)_t`` is
    discretized. ``"conservative"`` differences the products
    ``(A0 + ML a^k) q`` between consecutive levels; ``"product"`` expands
    it into ``a^k d_t q + b^k q`` with ``b^k`` taken implicitly. Both are
    first-order consistent, but the product form needs ``tau |chi_tt|``
    small against ``eps_xi`` wherever chi_t enters the ramp of xi.

    The sweep covers original steps ``M-1 .. 1``. The traction at ``t = 0``
    enters no discrete equation, so ``p(0) = 0`` and ``q(0)`` repeats ``q(tau)``.
    """
    _check_pair(problem, traj)
    if form not in ("conservative", "product"):
        raise ValueError(f"unknown adjoint form {form!r}")
    ops, law, tau, mesh = problem.ops, problem.law, problem.tau, problem.mesh
    M, m = problem.M, mesh.n_vertices
    coef = compute_coefficients(traj, law, smooth=smooth)
    A0 = ops.M + ops.K
    inertia = ops.Mv / tau**2
    visc = (law.mu_visc / tau) * ops.E1
    U, X = traj.u, traj.chi

    P = np.zeros((M + 1, 2 * m))
    Q = np.zeros((M + 1, m))
    data = lambda_T * (ops.M @ (X[M] - np.broadcast_to(np.asarray(chi_T, dtype=float), (m,))))
    Q[0] = solve_spd(A0 + sp.diags(ops.ML * coef.a[M]), data, rtol=problem.rtol)
    p_prev2 = np.zeros(2 * m)
    for j in range(1, M):
        kk = M - j
        c, dc, d2c = eval_c(law, X[kk])
        _, d2f = eval_f(law, X[kk])
        B = asm.assemble_coupling(mesh, dc, U[kk], law.lame)

        A = inertia + ops.elasticity(c) + visc
        rhs = inertia @ (2.0 * P[j - 1] - p_prev2) + visc @ P[j - 1] - B @ Q[j - 1]
        P[j] = solve_spd(A, rhs, rtol=problem.rtol)
        p_prev2 = P[j - 1]

        e = asm.strain_energy_density(mesh, U[kk], law.lame)
        rate_op = A0 / tau + sp.diags(ops.ML * coef.a[kk] / tau)
        Aq = rate_op + ops.K + sp.diags(ops.ML * d2f) + 0.5 * asm.assemble_weighted_mass(mesh, d2c, e)
        if form == "product":
            Aq = Aq - sp.diags(ops.ML * coef.b_coef[kk])
            rhs_q = rate_op @ Q[j - 1]
        else:
            rhs_q = A0 @ Q[j - 1] / tau + ops.ML * coef.a[kk + 1] * Q[j - 1] / tau
        rhs_q = rhs_q - B.T @ P[j]
        try:
            Q[j] = solve_symmetric(Aq, rhs_q, rtol=problem.rtol)
        except SolverError as exc:
            raise SolverError(f"adjoint q-step {j} (original step {kk}) failed; reduce tau", exc.residual) from exc
    Q[M] = Q[M - 1]
    return AdjointTrajectory(mesh, tau, P[::-1].copy(), Q[::-1].copy())


def pair_gradient(adj: AdjointTrajectory, h, b, lambda_Sigma: float) -> float:
    """``int_Sigma (p + lambda_Sigma b) . h`` with boundary mass in space, trapezoid in time."""
    hv = np.asarray(getattr(h, "values", h), dtype=float)
    bv = np.asarray(getattr(b, "values", b), dtype=float)
    return sigma_inner(adj.mesh, adj.tau, adj.boundary_p() + lambda_Sigma * bv, hv)


def linearized_pairing(problem: StateProblem, traj: StateTrajectory, lin: LinearizedTrajectory,
                       h, b, chi_T, lambda_T: float, lambda_Sigma: float) -> float:
    """Directional derivative of the discrete reduced cost via the linearized state."""
    m = problem.mesh.n_vertices
    diff = traj.chi[-1] - np.broadcast_to(np.asarray(chi_T, dtype=float), (m,))
    track = lambda_T * float(diff @ (problem.ops.M @ lin.chidot[-1]))
    hv = np.asarray(getattr(h, "values", h), dtype=float)
    bv = np.asarray(getattr(b, "values", b), dtype=float)
    return track + lambda_Sigma * sigma_inner(problem.mesh, problem.tau, bv, hv)
