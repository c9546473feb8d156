"""Discrete counterparts of the control norm and the space-time state norms."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import assemble_mass, assemble_stiffness, boundary_mass, lumped_mass
from .control import trapezoid_weights


class BNorm(NamedTuple):
    l2_sigma: float  # squared L^2(Sigma) norm
    h_half_part: float
    h1_time_part: float
    total: float


def slobodeckij_seminorm_sq(points, weights, g, edges=None) -> float:
    """Double sum ``sum_{i != j} w_i w_j |g_i - g_j|^2 / |x_i - x_j|^2`` (the H^{1/2} seminorm on a curve).

    With ``edges`` (index pairs of neighbouring points) the diagonal cells
    are added as ``w_i^2 |d_s g|^2``, the slope averaged over the incident
    edges; this lifts the quadrature from O(h) to O(h^2).
    """
    pts = np.asarray(points, dtype=float)
    g = np.asarray(g, dtype=float).reshape(len(pts), -1)
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
    diff2 = np.sum((g[:, None, :] - g[None, :, :]) ** 2, axis=2)
    np.fill_diagonal(d2, 1.0)
    ratio = diff2 / d2
    np.fill_diagonal(ratio, 0.0)
    w = np.asarray(weights, dtype=float)
    total = float(w @ ratio @ w)
    if edges is not None:
        e = np.asarray(edges)
        slope2 = np.sum((g[e[:, 0]] - g[e[:, 1]]) ** 2, axis=1) / np.sum((pts[e[:, 0]] - pts[e[:, 1]]) ** 2, axis=1)
        acc = np.zeros(len(pts))
        cnt = np.zeros(len(pts))
        np.add.at(acc, e.ravel(), np.repeat(slope2, 2))
        np.add.at(cnt, e.ravel(), 1.0)
        total += float(np.sum(w**2 * acc / np.maximum(cnt, 1.0)))
    return total


def norm_B(b, mesh, T: float) -> BNorm:
    """Control norm ``||b||_{L2(0,T;H^1/2)} + ||b||_{H1(0,T;L2)}`` on the discrete grid."""
    values = np.asarray(getattr(b, "values", b), dtype=float)
    n_time = values.shape[0]
    if n_time < 2:
        raise ValueError("norm_B needs at least 2 time nodes")
    tau = float(T) / (n_time - 1)
    w = trapezoid_weights(n_time - 1, tau)
    Mb = boundary_mass(mesh)
    pts = mesh.boundary_points()
    arc = mesh.boundary_arc_weights()

    l2_slices = np.array([np.sum(values[k] * (Mb @ values[k])) for k in range(n_time)])
    edges = mesh.boundary_index[mesh.boundary_edges]
    semi = np.array([slobodeckij_seminorm_sq(pts, arc, values[k], edges) for k in range(n_time)])
    dt = np.diff(values, axis=0) / tau
    dt_sq = np.array([np.sum(d * (Mb @ d)) for d in dt])

    l2 = float(w @ l2_slices)
    h_half = float(np.sqrt(w @ (l2_slices + semi)))
    h1_time = float(np.sqrt(l2 + tau * dt_sq.sum()))
    return BNorm(l2, h_half, h1_time, h_half + h1_time)


class SpaceTimeNorms:
    """Discrete norms of trajectories on a fixed mesh and time step.

    Scalar trajectories have shape ``(M+1, m)``, vector ones ``(M+1, 2m)``.
    """

    def __init__(self, mesh, tau: float):
        self.mesh = mesh
        self.tau = float(tau)
        self.M = assemble_mass(mesh)
        self.K = assemble_stiffness(mesh)
        self.ML = lumped_mass(mesh)
        I2 = sp.identity(2)
        self.Mv = sp.kron(self.M, I2, format="csr")
        self.Kv = sp.kron(self.K, I2, format="csr")
        self._h1_solve = {}

    def _ops(self, x):
        vec = x.shape[-1] == 2 * self.mesh.n_vertices
        return (self.Mv, self.Kv, np.repeat(self.ML, 2)) if vec else (self.M, self.K, self.ML)

    def l2_sq(self, x):
        Mx, _, _ = self._ops(x)
        return float(x @ (Mx @ x))

    def h1_sq(self, x):
        Mx, Kx, _ = self._ops(x)
        return float(x @ (Mx @ x) + x @ (Kx @ x))

    def h2_sq(self, x):
        _, Kx, ml = self._ops(x)
        lap = Kx @ x
        return self.h1_sq(x) + float(lap @ (lap / ml))

    def dual_h1_sq(self, y):
        """Squared (H^1)* norm of the functional ``y`` (a load vector)."""
        Mx, Kx, _ = self._ops(y)
        key = Mx.shape[0]
        if key not in self._h1_solve:
            self._h1_solve[key] = spla.factorized(sp.csc_matrix(Mx + Kx))
        return float(y @ self._h1_solve[key](y))

    def _h1_time(self, X, space_sq):
        w = trapezoid_weights(len(X) - 1, self.tau)
        vals = sum(w[k] * space_sq(X[k]) for k in range(len(X)))
        rates = np.diff(X, axis=0) / self.tau
        vals += sum(self.tau * space_sq(r) for r in rates)
        return float(np.sqrt(vals))

    def xdot(self, X) -> float:
        """H^1(0,T;H^1) norm."""
        return self._h1_time(np.asarray(X, dtype=float), self.h1_sq)

    def udot(self, U) -> float:
        """H^1(0,T;H^1) + W^{1,inf}(0,T;L^2) + H^2(0,T;(H^1)*) norm."""
        U = np.asarray(U, dtype=float)
        h1h1 = self._h1_time(U, self.h1_sq)
        rates = np.diff(U, axis=0) / self.tau
        winf = max(np.sqrt(self.l2_sq(u)) for u in U) + max((np.sqrt(self.l2_sq(r)) for r in rates), default=0.0)
        acc = np.diff(U, n=2, axis=0) / self.tau**2
        Mx = self._ops(U[0])[0]
        h2 = np.sqrt(sum(self.tau * self.dual_h1_sq(Mx @ a) for a in acc))
        return h1h1 + winf + float(h2)

    def qdot(self, U, X) -> float:
        return self.udot(U) + self.xdot(X)

    def q_norm(self, U, X) -> float:
        """Strong-solution norm: H^1(H^2) + W^{1,inf}(H^1) + H^2(L^2) for u, H^1(H^2) for chi."""
        U = np.asarray(U, dtype=float)
        X = np.asarray(X, dtype=float)
        u_part = self._h1_time(U, self.h2_sq)
        rates = np.diff(U, axis=0) / self.tau
        u_part += max(np.sqrt(self.h1_sq(u)) for u in U) + max(np.sqrt(self.h1_sq(r)) for r in rates)
        acc = np.diff(U, n=2, axis=0) / self.tau**2
        u_part += float(np.sqrt(sum(self.tau * self.l2_sq(a) for a in acc)))
        return u_part + self._h1_time(X, self.h2_sq)
