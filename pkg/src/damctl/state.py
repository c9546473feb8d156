"""Semi-implicit time stepping of the viscoelastic damage system and the tracking cost."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import assembly as asm
from .control import Control, sigma_inner, sigma_norm
from .linalg import solve_spd
from .materials import MaterialLaw, eval_c, eval_f, eval_xi
from .mesh import TriangleMesh2D
from .norms import SpaceTimeNorms


class NewtonError(RuntimeError):
    def __init__(self, step, residual, message="damage Newton iteration failed"):
        super().__init__(f"{message} at step {step} (residual {residual:.3e})")
        self.step = step
        self.residual = residual


@dataclass(frozen=True)
class Objective:
    chi_T: np.ndarray
    lambda_T: float = 1.0
    lambda_Sigma: float = 0.0

    def __post_init__(self):
        if self.lambda_T < 0 or self.lambda_Sigma < 0:
            raise ValueError("(O1) lambda_T and lambda_Sigma must be non-negative")


class Operators:
    """Time-independent matrices shared by the state, linearized and adjoint solvers."""

    def __init__(self, mesh: TriangleMesh2D, law: MaterialLaw):
        self.mesh = mesh
        self.law = law
        self.M = asm.assemble_mass(mesh)
        self.ML = asm.lumped_mass(mesh)
        self.K = asm.assemble_stiffness(mesh)
        self.Mv = asm.vector_mass(mesh)
        self.E1 = asm.assemble_elasticity(mesh, np.ones(mesh.n_vertices), law.lame)
        self.Mb = asm.boundary_mass(mesh)
        self.embed = asm.boundary_embedding(mesh)

    def elasticity(self, coeff):
        return asm.assemble_elasticity(self.mesh, coeff, self.law.lame)

    def boundary_load(self, g):
        """Load vector of a boundary traction slice of shape (n_boundary, 2)."""
        return self.embed @ (self.Mb @ np.asarray(g)).ravel()

    def boundary_trace(self, p):
        """Restriction of a vector nodal field to boundary vertices, shape (n_boundary, 2)."""
        return np.asarray(p).reshape(-1, 2)[self.mesh.boundary_vertex_ids]


@dataclass(eq=False)
class StateProblem:
    """Data of one forward problem on the uniform grid ``t_k = k * T / M``.

    ``ell`` is the volume force per time node, shape ``(M+1, 2m)``; ``None``
    means zero. ``u0``/``v0`` are vector nodal fields (2m,), ``chi0`` a
    scalar nodal field (m,).
    """

    mesh: TriangleMesh2D
    law: MaterialLaw
    control: Control
    T: float
    M: int
    u0: np.ndarray = None
    v0: np.ndarray = None
    chi0: np.ndarray = None
    ell: np.ndarray = None
    objective: Objective = None
    rtol: float = 1e-12
    newton_rtol: float = 1e-12
    newton_atol: float = 1e-14
    newton_maxiter: int = 50

    def __post_init__(self):
        m = self.mesh.n_vertices
        self.M = int(self.M)
        if self.M < 1 or not self.T > 0:
            raise ValueError("need T > 0 and M >= 1")
        self.u0 = np.zeros(2 * m) if self.u0 is None else np.asarray(self.u0, dtype=float).ravel()
        self.v0 = np.zeros(2 * m) if self.v0 is None else np.asarray(self.v0, dtype=float).ravel()
        self.chi0 = np.zeros(m) if self.chi0 is None else np.broadcast_to(
            np.asarray(self.chi0, dtype=float), (m,)).copy()
        if self.ell is not None:
            self.ell = np.asarray(self.ell, dtype=float).reshape(self.M + 1, 2 * m)
        for name in ("u0", "v0", "chi0"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"initial field {name} is not finite")
        if self.u0.shape != (2 * m,) or self.v0.shape != (2 * m,):
            raise ValueError("u0 and v0 must be vector nodal fields")
        self._check_control(self.control)

    def _check_control(self, b: Control):
        if b.values.shape != (self.M + 1, self.mesh.n_boundary, 2):
            raise ValueError(
                f"control grid {b.values.shape} does not match (M+1, n_boundary, 2) = "
                f"({self.M + 1}, {self.mesh.n_boundary}, 2)"
            )

    @property
    def tau(self) -> float:
        return self.T / self.M

    @cached_property
    def ops(self) -> Operators:
        return Operators(self.mesh, self.law)

    @cached_property
    def norms(self) -> SpaceTimeNorms:
        return SpaceTimeNorms(self.mesh, self.tau)

    def with_control(self, b: Control) -> "StateProblem":
        self._check_control(b)
        clone = StateProblem(
            self.mesh, self.law, b, self.T, self.M, self.u0, self.v0, self.chi0, self.ell,
            self.objective, self.rtol, self.newton_rtol, self.newton_atol, self.newton_maxiter,
        )
        # operators depend only on mesh and law
        if "ops" in self.__dict__:
            clone.__dict__["ops"] = self.ops
        if "norms" in self.__dict__:
            clone.__dict__["norms"] = self.norms
        return clone

    def volume_load(self, k: int) -> np.ndarray:
        if self.ell is None:
            return np.zeros(2 * self.mesh.n_vertices)
        return self.ops.Mv @ self.ell[k]


@dataclass(eq=False)
class StateTrajectory:
    mesh: TriangleMesh2D
    tau: float
    u: np.ndarray
    v: np.ndarray
    chi: np.ndarray
    newton_iterations: list = field(default_factory=list)

    @property
    def M(self) -> int:
        return len(self.chi) - 1

    @property
    def chi_t(self) -> np.ndarray:
        """Backward differences ``(chi^k - chi^{k-1}) / tau``; entry 0 copies entry 1."""
        rates = np.diff(self.chi, axis=0) / self.tau
        return np.concatenate([rates[:1], rates])

    @property
    def chi_tt(self) -> np.ndarray:
        """Central second differences; the end entries copy their interior neighbours."""
        if self.M < 2:
            raise ValueError("second time differences need M >= 2")
        acc = np.diff(self.chi, n=2, axis=0) / self.tau**2
        return np.concatenate([acc[:1], acc, acc[-1:]])


def damage_coupling_load(ops: Operators, chi, u) -> np.ndarray:
    """Vector of ``int 1/2 c'(chi)_h C eps(u) : eps(u) psi_i``."""
    _, dc, _ = eval_c(ops.law, chi)
    e = asm.strain_energy_density(ops.mesh, u, ops.law.lame)
    return 0.5 * asm.assemble_cell_load(ops.mesh, dc, e)


def _damage_step(problem: StateProblem, k, chi_prev, load):
    ops, law, tau = problem.ops, problem.law, problem.tau
    A0 = ops.M + ops.K
    ML = ops.ML

    def residual(chi):
        r = (chi - chi_prev) / tau
        df, _ = eval_f(law, chi)
        return A0 @ r + ML * eval_xi(law, r)[0] + ops.K @ chi + load + ML * df

    chi = chi_prev.copy()
    R = residual(chi)
    rnorm = np.linalg.norm(R, np.inf)
    tol = problem.newton_rtol * rnorm + problem.newton_atol
    it = 0
    while rnorm > tol:
        if it >= problem.newton_maxiter:
            raise NewtonError(k, rnorm)
        r = (chi - chi_prev) / tau
        _, dxi, _ = eval_xi(law, r)
        _, d2f = eval_f(law, chi)
        J = A0 / tau + ops.K + sp.diags(ML * (dxi / tau + d2f))
        d = solve_spd(J, -R, rtol=problem.rtol)
        alpha = 1.0
        while True:
            trial = chi + alpha * d
            R_trial = residual(trial)
            n_trial = np.linalg.norm(R_trial, np.inf)
            if n_trial < rnorm:
                break
            alpha *= 0.5
            if alpha < 2.0**-20:
                # no further decrease possible: accept if we are at roundoff level
                if rnorm <= 1e3 * np.finfo(float).eps * (1.0 + np.linalg.norm(load, np.inf)):
                    return chi, it
                raise NewtonError(k, rnorm, "damage Newton line search stalled")
        chi, R, rnorm = trial, R_trial, n_trial
        it += 1
    return chi, it


def solve_state(problem: StateProblem, control: Control | None = None) -> StateTrajectory:
    """Damage substep (implicit in chi, strain lagged) followed by the linear elasticity substep."""
    b = problem.control if control is None else control
    problem._check_control(b)
    ops, law, tau = problem.ops, problem.law, problem.tau
    M = problem.M
    m = problem.mesh.n_vertices

    U = np.zeros((M + 1, 2 * m))
    V = np.zeros((M + 1, 2 * m))
    X = np.zeros((M + 1, m))
    U[0], V[0], X[0] = problem.u0, problem.v0, problem.chi0
    u_prev2 = problem.u0 - tau * problem.v0
    visc = (law.mu_visc / tau) * ops.E1
    inertia = ops.Mv / tau**2
    iters = []
    for k in range(1, M + 1):
        load = damage_coupling_load(ops, X[k - 1], U[k - 1])
        X[k], it = _damage_step(problem, k, X[k - 1], load)
        iters.append(it)

        c, _, _ = eval_c(law, X[k])
        A = inertia + ops.elasticity(c) + visc
        rhs = (
            inertia @ (2.0 * U[k - 1] - u_prev2)
            + visc @ U[k - 1]
            + problem.volume_load(k)
            + ops.boundary_load(b.values[k])
        )
        U[k] = solve_spd(A, rhs, rtol=problem.rtol)
        V[k] = (U[k] - U[k - 1]) / tau
        u_prev2 = U[k - 1]
    return StateTrajectory(problem.mesh, tau, U, V, X, iters)


def evaluate_cost(traj: StateTrajectory, control, chi_T, lambda_T: float, lambda_Sigma: float) -> float:
    """Tracking cost ``lambda_T/2 ||chi(T) - chi_T||^2 + lambda_Sigma/2 ||b||^2_{L2(Sigma)}``."""
    mesh = traj.mesh
    diff = traj.chi[-1] - np.broadcast_to(np.asarray(chi_T, dtype=float), traj.chi[-1].shape)
    track = float(diff @ (asm.assemble_mass(mesh) @ diff))
    penalty = sigma_inner(mesh, traj.tau, control, control) if lambda_Sigma else 0.0
    return 0.5 * lambda_T * track + 0.5 * lambda_Sigma * penalty


def lipschitz_probe(problem: StateProblem, b1: Control, b2: Control) -> float:
    """Ratio of the discrete (U-dot x X-dot) state distance to ``||b1 - b2||_{L2(Sigma)}``."""
    denom = sigma_norm(problem.mesh, problem.tau, b1.values - b2.values)
    if denom == 0.0:
        raise ValueError("lipschitz_probe needs two different controls")
    s1 = solve_state(problem, b1)
    s2 = solve_state(problem, b2)
    return problem.norms.qdot(s1.u - s2.u, s1.chi - s2.chi) / denom


def energies(problem: StateProblem, traj: StateTrajectory) -> dict:
    """Per-step kinetic, elastic and damage-gradient energies (for reporting)."""
    ops = problem.ops
    kin, ela, grad = [], [], []
    for k in range(traj.M + 1):
        c, _, _ = eval_c(problem.law, traj.chi[k])
        kin.append(0.5 * float(traj.v[k] @ (ops.Mv @ traj.v[k])))
        ela.append(0.5 * float(traj.u[k] @ (ops.elasticity(c) @ traj.u[k])))
        grad.append(0.5 * float(traj.chi[k] @ (ops.K @ traj.chi[k])))
    return {"t": [k * traj.tau for k in range(traj.M + 1)], "kinetic": kin, "elastic": ela, "damage_gradient": grad}
