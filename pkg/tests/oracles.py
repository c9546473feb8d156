"""Dense reference implementations for tiny meshes.

Nothing here imports damctl's assembly or solvers: element integrals use
quadrature on the physical triangle, constitutive functions are recoded
from their definitions, the state is found by one Newton iteration on the
whole space-time system, the tangent by implicit differentiation with
complex-step Jacobians, and the adjoint by one monolithic linear solve.
"""
from __future__ import annotations

import numpy as np

# Strang-Fix 6-point rule, exact to degree 4 on the reference triangle (weights sum to 1/2)
_QA, _QB = 0.816847572980459, 0.091576213509771
_QC, _QD = 0.108103018168070, 0.445948490915965
_QP = np.array([[_QB, _QB], [_QA, _QB], [_QB, _QA], [_QD, _QC], [_QC, _QD], [_QD, _QD]])
_QW = np.array([0.109951743655322] * 3 + [0.223381589678011] * 3) / 2.0
_GAUSS1D = np.polynomial.legendre.leggauss(4)


# -- constitutive functions ------------------------------------------------------------

def c_funcs(delta, x):
    """c, c', c'' from the septic smoothstep; works for complex x (branch by real part)."""
    s7 = np.polynomial.Polynomial([0, 0, 0, 0, 35, -84, 70, -20])
    xr = np.real(x)
    inside = (xr > 0) & (xr < 1)
    out = []
    for der in range(3):
        p = s7.deriv(der) if der else s7
        val = np.where(inside, p(x), 0.0 if der else (xr >= 1).astype(float))
        out.append((delta if der == 0 else 0.0) + (1 - delta) * val)
    return out


def xi_funcs(gamma, eps, x):
    xr = np.real(x)
    ramp = (xr > 0) & (xr <= eps)
    lin = xr > eps
    s = np.where(ramp, x**3 / eps**2 - x**4 / (2 * eps**3), np.where(lin, x - eps / 2, 0.0))
    ds = np.where(ramp, 3 * x**2 / eps**2 - 2 * x**3 / eps**3, np.where(lin, 1.0, 0.0))
    d2s = np.where(ramp, 6 * x / eps**2 - 6 * x**2 / eps**3, 0.0)
    return gamma * s, gamma * ds, gamma * d2s


def f_funcs(coeffs, x):
    p = np.polynomial.Polynomial(coeffs)
    return p.deriv(1)(x), p.deriv(2)(x)


# -- element integrals ------------------------------------------------------------

class DenseFEM:
    """Dense P1 operators for a (tiny) triangle mesh given as vertices and cells."""

    def __init__(self, vertices, cells, lame):
        self.X = np.asarray(vertices, dtype=float)
        self.cells = np.asarray(cells)
        self.m = len(self.X)
        lam, mu = lame
        self.D = np.array([[lam + 2 * mu, lam, 0], [lam, lam + 2 * mu, 0], [0, 0, mu]])
        self.geo = []
        for cell in self.cells:
            p = self.X[cell]
            J = np.column_stack([p[1] - p[0], p[2] - p[0]])
            detJ = np.linalg.det(J)
            # gradients of barycentric coordinates
            G = np.linalg.solve(J.T, np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])).T
            lam_q = np.column_stack([1 - _QP.sum(1), _QP[:, 0], _QP[:, 1]])
            Bm = np.zeros((3, 6))
            for a in range(3):
                Bm[0, 2 * a] = G[a, 0]
                Bm[1, 2 * a + 1] = G[a, 1]
                Bm[2, 2 * a] = G[a, 1]
                Bm[2, 2 * a + 1] = G[a, 0]
            self.geo.append((cell, abs(detJ) * _QW, lam_q, G, Bm))
        self.bedges = self._boundary_edges()
        self.bids = np.array(sorted({v for e in self.bedges for v in e}))

    def _boundary_edges(self):
        count = {}
        for cell in self.cells:
            for a, b in ((0, 1), (1, 2), (2, 0)):
                key = tuple(sorted((cell[a], cell[b])))
                count[key] = count.get(key, 0) + 1
        return [e for e, n in count.items() if n == 1]

    def vdofs(self, cell):
        return np.ravel([[2 * v, 2 * v + 1] for v in cell])

    def mass(self, weight=None, factor=None):
        A = np.zeros((self.m, self.m), dtype=complex if np.iscomplexobj(weight) else float)
        for ci, (cell, w, L, _, _) in enumerate(self.geo):
            wq = np.ones(len(w)) if weight is None else L @ np.asarray(weight)[cell]
            fq = 1.0 if factor is None else factor[ci]
            A[np.ix_(cell, cell)] += np.einsum("q,qa,qb->ab", w * wq * fq, L, L)
        return A

    def lumped(self):
        return self.mass().sum(axis=1)

    def stiffness(self):
        A = np.zeros((self.m, self.m))
        for cell, w, _, G, _ in self.geo:
            A[np.ix_(cell, cell)] += w.sum() * G @ G.T
        return A

    def vmass(self):
        return np.kron(self.mass(), np.eye(2))

    def elasticity(self, coeff):
        A = np.zeros((2 * self.m, 2 * self.m), dtype=np.result_type(coeff, float))
        for cell, w, L, _, Bm in self.geo:
            cq = L @ np.asarray(coeff)[cell]
            A[np.ix_(self.vdofs(cell), self.vdofs(cell))] += (w @ cq) * Bm.T @ self.D @ Bm
        return A

    def energy_density(self, u):
        out = []
        for cell, _, _, _, Bm in self.geo:
            eps = Bm @ u[self.vdofs(cell)]
            out.append(eps @ self.D @ eps)
        return np.array(out)

    def cell_load(self, weight, factor):
        v = np.zeros(self.m, dtype=np.result_type(weight, factor))
        for ci, (cell, w, L, _, _) in enumerate(self.geo):
            v[cell] += np.einsum("q,qa->a", w * (L @ weight[cell]) * factor[ci], L)
        return v

    def coupling(self, weight, u):
        """Matrix with entries int w_h psi_j C eps(u) : eps(phi_{i,d}), rows vector dofs."""
        A = np.zeros((2 * self.m, self.m), dtype=np.result_type(weight, u))
        for cell, w, L, _, Bm in self.geo:
            sig = self.D @ (Bm @ u[self.vdofs(cell)])
            wq = L @ weight[cell]
            colint = np.einsum("q,qa->a", w * wq, L)
            A[np.ix_(self.vdofs(cell), cell)] += np.outer(Bm.T @ sig, colint)
        return A

    def boundary_mass(self):
        """Boundary mass over the sorted boundary vertices."""
        pos = {v: i for i, v in enumerate(self.bids)}
        nb = len(self.bids)
        A = np.zeros((nb, nb))
        gx, gw = _GAUSS1D
        for e in self.bedges:
            L = np.linalg.norm(self.X[e[1]] - self.X[e[0]])
            s = (gx + 1) / 2
            phi = np.column_stack([1 - s, s])
            loc = L / 2 * np.einsum("q,qa,qb->ab", gw, phi, phi)
            idx = [pos[e[0]], pos[e[1]]]
            A[np.ix_(idx, idx)] += loc
        return A

    def boundary_load(self, g):
        """Load vector of boundary tractions g (nb, 2)."""
        Mb = self.boundary_mass()
        f = np.zeros(2 * self.m, dtype=np.result_type(g, float))
        gb = Mb @ g
        for i, v in enumerate(self.bids):
            f[2 * v:2 * v + 2] += gb[i]
        return f


# -- space-time state ------------------------------------------------------------

class DenseProblem:
    def __init__(self, vertices, cells, law, T, M, u0, v0, chi0, ell, b):
        self.fem = DenseFEM(vertices, cells, law["lame"])
        self.law = law
        self.T, self.M, self.tau = T, M, T / M
        self.u0, self.v0, self.chi0 = (np.asarray(a, dtype=float) for a in (u0, v0, chi0))
        self.ell = np.asarray(ell, dtype=float)
        self.b = np.asarray(b, dtype=float)
        f = self.fem
        self.Ms, self.K, self.ML, self.Mv = f.mass(), f.stiffness(), f.lumped(), f.vmass()
        self.E1 = f.elasticity(np.ones(f.m))

    def split(self, X):
        m, M = self.fem.m, self.M
        chi = X[: M * m].reshape(M, m)
        u = X[M * m:].reshape(M, 2 * m)
        return chi, u

    def residual(self, X, b=None):
        b = self.b if b is None else b
        L, fem, tau = self.law, self.fem, self.tau
        chi, u = self.split(X)
        chi = np.vstack([self.chi0[None].astype(chi.dtype), chi])
        u = np.vstack([(self.u0 - tau * self.v0)[None].astype(u.dtype), self.u0[None].astype(u.dtype), u])
        # u has a leading ghost row: u[k + 1] is u^k
        R = []
        for k in range(1, self.M + 1):
            r = (chi[k] - chi[k - 1]) / tau
            xi, _, _ = xi_funcs(L["gamma_xi"], L["eps_xi"], r)
            df, _ = f_funcs(L["f_coeffs"], chi[k])
            _, dc_prev, _ = c_funcs(L["delta"], chi[k - 1])
            e_prev = fem.energy_density(u[k])
            R.append((self.Ms + self.K) @ r + self.ML * xi + self.K @ chi[k]
                     + 0.5 * fem.cell_load(dc_prev, e_prev) + self.ML * df)
        for k in range(1, self.M + 1):
            c, _, _ = c_funcs(L["delta"], chi[k])
            uk, u1, u2 = u[k + 1], u[k], u[k - 1]
            R.append(self.Mv @ (uk - 2 * u1 + u2) / tau**2 + fem.elasticity(c) @ uk
                     + L["mu_visc"] / tau * self.E1 @ (uk - u1)
                     - self.Mv @ self.ell[k] - fem.boundary_load(b[k]))
        return np.concatenate(R)

    def jacobian(self, X, h=1e-30):
        n = len(X)
        J = np.zeros((n, n))
        for i in range(n):
            Xc = X.astype(complex)
            Xc[i] += 1j * h
            J[:, i] = self.residual(Xc).imag / h
        return J

    def solve(self, tol=1e-14, maxiter=50):
        M = self.M
        X = np.concatenate([np.tile(self.chi0, M), np.tile(self.u0, M)])
        for _ in range(maxiter):
            R = self.residual(X)
            if np.abs(R).max() < tol:
                break
            X = X - np.linalg.solve(self.jacobian(X), R)
        else:
            raise RuntimeError("dense Newton did not converge")
        chi, u = self.split(X)
        return X, np.vstack([self.chi0, chi]), np.vstack([self.u0, u])

    def tangent(self, X, hdir, h=1e-30):
        """Implicit-function derivative of the discrete solution along control direction hdir."""
        dRb = self.residual(X.astype(complex), self.b + 1j * h * hdir).imag / h
        Xd = -np.linalg.solve(self.jacobian(X), dRb)
        chi, u = self.split(Xd)
        return np.vstack([np.zeros(self.fem.m), chi]), np.vstack([np.zeros(2 * self.fem.m), u])

    # -- adjoint scheme, one block system ----------------------------------------

    def adjoint(self, chi, u, chi_T, lambda_T):
        """Backward scheme assembled for all reversed levels at once.

        Unknowns: q^0..q^{M-1} and p^1..p^{M-1} in reversed time j. The
        returned arrays are in original time with p(0) = 0, q(0) = q(tau).
        """
        L, fem, tau, M, m = self.law, self.fem, self.tau, self.M, self.fem.m
        rate = np.diff(chi, axis=0) / tau
        rate = np.vstack([rate[:1], rate])
        _, a, _ = xi_funcs(L["gamma_xi"], L["eps_xi"], rate)
        A0 = self.Ms + self.K
        nq, npv = M * m, (M - 1) * 2 * m
        N = nq + npv

        def qi(j):
            return slice(j * m, (j + 1) * m)

        def pi(j):  # j = 1..M-1
            return slice(nq + (j - 1) * 2 * m, nq + j * 2 * m)

        A = np.zeros((N, N))
        rhs = np.zeros(N)
        A[qi(0), qi(0)] = A0 + np.diag(self.ML * a[M])
        rhs[qi(0)] = lambda_T * self.Ms @ (chi[M] - chi_T)
        inertia, visc = self.Mv / tau**2, L["mu_visc"] / tau * self.E1
        for j in range(1, M):
            k = M - j
            c, dc, d2c = c_funcs(L["delta"], chi[k])
            _, d2f = f_funcs(L["f_coeffs"], chi[k])
            B = fem.coupling(dc, u[k])
            # p-equation
            A[pi(j), pi(j)] = inertia + fem.elasticity(c) + visc
            if j - 1 >= 1:
                A[pi(j), pi(j - 1)] = -2 * inertia - visc
            if j - 2 >= 1:
                A[pi(j), pi(j - 2)] = inertia
            A[pi(j), qi(j - 1)] = B
            # q-equation, conservative rate form
            e = fem.energy_density(u[k])
            A[qi(j), qi(j)] = ((A0 + np.diag(self.ML * a[k])) / tau + self.K + np.diag(self.ML * d2f)
                               + 0.5 * fem.mass(d2c, e))
            A[qi(j), qi(j - 1)] = -(A0 + np.diag(self.ML * a[k + 1])) / tau
            A[qi(j), pi(j)] = B.T
        sol = np.linalg.solve(A, rhs)
        Q = np.array([sol[qi(j)] for j in range(M)] + [sol[qi(M - 1)]])
        P = np.array([np.zeros(2 * m)] + [sol[pi(j)] for j in range(1, M)] + [np.zeros(2 * m)])
        return P[::-1], Q[::-1]
