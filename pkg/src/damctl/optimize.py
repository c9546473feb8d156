"""Reduced cost, adjoint gradient and projected gradient descent over box-constrained tractions."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .control import Control, project, sigma_inner, sigma_norm
from .norms import norm_B
from .sensitivity import solve_adjoint
from .state import Objective, StateProblem, evaluate_cost, solve_state

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizeConfig:
    """Settings of the projected gradient loop.

    ``lambda_T`` / ``lambda_Sigma`` override the problem's objective weights
    when given. The loop stops once
    ``vi_residual <= max(vi_tolerance, vi_rtol * initial vi_residual)``.
    """

    max_iters: int = 50
    c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 30
    initial_step: float = 0.1
    vi_tolerance: float = 1e-10
    vi_rtol: float = 0.0
    bb_step: bool = True
    lambda_T: float | None = None
    lambda_Sigma: float | None = None

    def __post_init__(self):
        if self.max_iters < 0 or self.max_backtracks < 0:
            raise ValueError("iteration limits must be non-negative")
        if not self.initial_step > 0:
            raise ValueError("initial step must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if not 0 < self.c1 < 1:
            raise ValueError("Armijo constant must lie in (0, 1)")
        if self.vi_tolerance < 0 or self.vi_rtol < 0:
            raise ValueError("tolerances must be non-negative")
        for name in ("lambda_T", "lambda_Sigma"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"(O1) {name} must be non-negative")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _objective(problem: StateProblem) -> Objective:
    if problem.objective is None:
        raise ValueError("problem has no objective (chi_T, lambda_T, lambda_Sigma)")
    return problem.objective


def with_weights(problem: StateProblem, config: OptimizeConfig) -> StateProblem:
    """Copy of ``problem`` whose objective carries the config's cost weights, if set."""
    ob = _objective(problem)
    lt = ob.lambda_T if config.lambda_T is None else config.lambda_T
    ls = ob.lambda_Sigma if config.lambda_Sigma is None else config.lambda_Sigma
    if (lt, ls) == (ob.lambda_T, ob.lambda_Sigma):
        return problem
    clone = problem.with_control(problem.control)
    clone.objective = Objective(ob.chi_T, lt, ls)
    return clone


def reduced_cost(problem: StateProblem, b: Control) -> float:
    ob = _objective(problem)
    traj = solve_state(problem, b)
    return evaluate_cost(traj, b, ob.chi_T, ob.lambda_T, ob.lambda_Sigma)


def cost_and_gradient(problem: StateProblem, b: Control):
    """Return ``(j, g, traj, adj)``; ``g = p|_Sigma + lambda_Sigma b`` per time node."""
    ob = _objective(problem)
    traj = solve_state(problem, b)
    j = evaluate_cost(traj, b, ob.chi_T, ob.lambda_T, ob.lambda_Sigma)
    adj = solve_adjoint(problem, traj, ob.chi_T, ob.lambda_T)
    g = adj.boundary_p() + ob.lambda_Sigma * b.values
    return j, g, traj, adj


def gradient(problem: StateProblem, b: Control) -> np.ndarray:
    return cost_and_gradient(problem, b)[1]


def vi_residual(problem: StateProblem, b: Control, g, s: float = 1.0) -> float:
    """``||b - P(b - s g)||_{L2(Sigma)} / s``; zero iff b is a projected-gradient fixed point."""
    step = project(b.with_values(b.values - s * np.asarray(g)))
    return sigma_norm(problem.mesh, problem.tau, b.values - step.values) / s


@dataclass
class OptimizeHistory:
    rows: list = field(default_factory=list)
    stalled: bool = False
    converged: bool = False
    warnings: list = field(default_factory=list)

    FIELDS = ("iter", "j", "vi_residual", "B_norm", "step")

    @property
    def n_iters(self) -> int:
        return len(self.rows) - 1

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.FIELDS)
        for r in self.rows:
            w.writerow([r["iter"]] + [repr(float(r[k])) for k in self.FIELDS[1:]])
        return buf.getvalue()


def optimize(problem: StateProblem, config: OptimizeConfig | None = None, b0: Control | None = None,
             callback=None):
    """Projected gradient descent with Barzilai-Borwein trial steps and Armijo backtracking.

    Returns ``(b_opt, history)``. Each accepted iterate lowers ``j`` strictly;
    the B-norm radius is only monitored.
    """
    config = OptimizeConfig() if config is None else config
    problem = with_weights(problem, config)
    mesh, tau, T = problem.mesh, problem.tau, problem.T
    b = project(problem.control if b0 is None else b0)
    hist = OptimizeHistory()

    def record(it, j, vi, step):
        bn = norm_B(b, mesh, T).total
        hist.rows.append({"iter": it, "j": float(j), "vi_residual": float(vi), "B_norm": float(bn), "step": float(step)})
        if bn > b.R:
            msg = f"iter {it}: B-norm {bn:.4g} exceeds radius R = {b.R:.4g}"
            hist.warnings.append(msg)
            log.warning(msg)
        if callback is not None:
            callback(hist.rows[-1])

    j, g, _, _ = cost_and_gradient(problem, b)
    vi = 0.0 if not np.any(g) else vi_residual(problem, b, g)
    record(0, j, vi, 0.0)
    tol = max(config.vi_tolerance, config.vi_rtol * vi)
    if vi <= tol:
        hist.converged = True
        return b, hist

    # first trial moves the control by ``initial_step`` in L2(Sigma)
    s = config.initial_step / sigma_norm(mesh, tau, g)
    for it in range(1, config.max_iters + 1):
        accepted = False
        for _ in range(config.max_backtracks + 1):
            trial = project(b.with_values(b.values - s * g))
            d = trial.values - b.values
            if not np.any(d):
                break
            j_trial = reduced_cost(problem, trial)
            if j_trial < j and j_trial <= j + config.c1 * sigma_inner(mesh, tau, g, d):
                accepted = True
                break
            s *= config.backtrack
        if not accepted:
            hist.stalled = True
            log.warning("line search stalled at iteration %d", it)
            break
        j_new, g_new, _, _ = cost_and_gradient(problem, trial)
        step_taken = s
        if config.bb_step:
            dg = g_new - g
            curv = sigma_inner(mesh, tau, d, dg)
            # non-positive curvature: keep expanding from the accepted step
            s = sigma_inner(mesh, tau, d, d) / curv if curv > 0 else 2.0 * s
        b, j, g = trial, j_new, g_new
        vi = 0.0 if not np.any(g) else vi_residual(problem, b, g)
        record(it, j, vi, step_taken)
        if vi <= tol:
            hist.converged = True
            break
    return b, hist


def fd_directional(problem: StateProblem, b: Control, h, lam: float = 1e-3) -> float:
    """Central difference ``(j(b + lam h) - j(b - lam h)) / (2 lam)``, ignoring the box."""
    hv = np.asarray(getattr(h, "values", h), dtype=float)
    plus = Control(b.values + lam * hv, R=b.R)
    minus = Control(b.values - lam * hv, R=b.R)
    return (reduced_cost(problem, plus) - reduced_cost(problem, minus)) / (2.0 * lam)

