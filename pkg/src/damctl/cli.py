"""``damctl`` command line: forward, adjoint and tangent solves, gradient checks, optimization."""
from __future__ import annotations

import argparse
import csv
import io
import json
from importlib import metadata
import logging
import os
import platform
import sys
import time

import numpy as np
import scipy

from . import __version__
from ._io import atomic_write_text
from .checkpoint import save_adjoint, save_control, save_state, write_checkpoint
from .control import Control, project, sigma_norm
from .expr import ExpressionError
from .linalg import SolverError
from .materials import MaterialLawError
from .mesh import write_vtk
from .optimize import fd_directional, optimize
from .presets import random_smooth_field
from .scenario import ScenarioError, build_problem, load_scenario, write_scenario
from .sensitivity import linearized_pairing, pair_gradient, solve_adjoint, solve_linearized
from .state import NewtonError, energies, evaluate_cost, lipschitz_probe, solve_state

COMMANDS = ("solve", "adjoint", "linearize", "gradcheck", "optimize", "lipschitz")
EXIT_OK, EXIT_SOLVER, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("damctl")


def _threads() -> int | None:
    raw = os.environ.get("DAMCTL_THREADS")
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ScenarioError(f"DAMCTL_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ScenarioError(f"DAMCTL_THREADS must be a positive integer, got {raw!r}")
    return n


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _vtk_series(outdir, stem, mesh, frames):
    os.makedirs(os.path.join(outdir, "vtk"), exist_ok=True)
    for k, data in enumerate(frames):
        write_vtk(os.path.join(outdir, "vtk", f"{stem}_{k:04d}.vtk"), mesh, data, title=f"{stem} step {k}")


def _directions(problem, rng, n):
    """Random smooth directions restricted to the components the box leaves free."""
    free = problem.control.b_max > problem.control.b_min
    return [Control(np.where(free, random_smooth_field(problem.mesh, problem.M, problem.T, rng), 0.0))
            for _ in range(n)]


def cmd_solve(cfg, problem, outdir, summary):
    traj = solve_state(problem)
    ob = problem.objective
    save_state(os.path.join(outdir, "state.ckpt"), traj, {"config_hash": cfg.digest()})
    frames = ({"u": traj.u[k].reshape(-1, 2), "chi": traj.chi[k]} for k in range(traj.M + 1))
    _vtk_series(outdir, "state", problem.mesh, frames)
    en = energies(problem, traj)
    rows = zip(en["t"], en["kinetic"], en["elastic"], en["damage_gradient"])
    atomic_write_text(os.path.join(outdir, "energies.csv"),
                      _csv(("t", "kinetic", "elastic", "damage_gradient"), rows))
    summary.update(
        cost=evaluate_cost(traj, problem.control, ob.chi_T, ob.lambda_T, ob.lambda_Sigma),
        max_chi_change=float(np.abs(traj.chi[-1] - traj.chi[0]).max()),
        chi_range=[float(traj.chi.min()), float(traj.chi.max())],
        newton_iterations=int(sum(traj.newton_iterations)),
    )
    return traj


def cmd_adjoint(cfg, problem, outdir, summary):
    traj = cmd_solve(cfg, problem, outdir, summary)
    a = cfg["adjoint"]
    adj = solve_adjoint(problem, traj, problem.objective.chi_T, problem.objective.lambda_T,
                        smooth=a["smooth"], form=a["form"])
    save_adjoint(os.path.join(outdir, "adjoint.ckpt"), adj, {"config_hash": cfg.digest()})
    frames = ({"p": adj.p[k].reshape(-1, 2), "q": adj.q[k]} for k in range(traj.M + 1))
    _vtk_series(outdir, "adjoint", problem.mesh, frames)
    summary.update(p_max=float(np.abs(adj.p).max()), q_max=float(np.abs(adj.q).max()))


def cmd_linearize(cfg, problem, outdir, summary):
    traj = solve_state(problem)
    h = _directions(problem, np.random.default_rng(cfg["seed"]), 1)[0]
    lin = solve_linearized(problem, traj, h)
    ob = problem.objective
    write_checkpoint(os.path.join(outdir, "linearized.ckpt"), "linearized", traj.tau,
                     {"udot": lin.udot, "chidot": lin.chidot, "h": h.values}, {"config_hash": cfg.digest()})
    summary["pairing"] = linearized_pairing(problem, traj, lin, h, problem.control, ob.chi_T,
                                            ob.lambda_T, ob.lambda_Sigma)


def cmd_gradcheck(cfg, problem, outdir, summary):
    gc, a = cfg["gradcheck"], cfg["adjoint"]
    ob = problem.objective
    b = problem.control
    traj = solve_state(problem)
    adj = solve_adjoint(problem, traj, ob.chi_T, ob.lambda_T, smooth=a["smooth"], form=a["form"])
    rows = []
    for d, h in enumerate(_directions(problem, np.random.default_rng(cfg["seed"]), gc["directions"])):
        lin = solve_linearized(problem, traj, h)
        lp = linearized_pairing(problem, traj, lin, h, b, ob.chi_T, ob.lambda_T, ob.lambda_Sigma)
        ap = pair_gradient(adj, h, b, ob.lambda_Sigma)
        for lam in gc["lambdas"]:
            fd = fd_directional(problem, b, h, lam)
            scale = abs(fd) if fd != 0 else 1.0
            rows.append((d, float(lam), fd, ap, lp, abs(lp - fd) / scale, abs(ap - fd) / scale))
    atomic_write_text(os.path.join(outdir, "gradcheck.csv"),
                      _csv(("direction", "lambda", "fd", "adjoint", "linearized",
                            "mismatch_linearized", "mismatch_adjoint"), rows))
    summary["max_adjoint_mismatch"] = max(r[6] for r in rows)
    summary["min_linearized_mismatch"] = min(r[5] for r in rows)


def cmd_optimize(cfg, problem, outdir, summary):
    b, hist = optimize(problem, cfg.optimizer)
    atomic_write_text(os.path.join(outdir, "history.csv"), hist.to_csv())
    save_control(os.path.join(outdir, "control.ckpt"), b, problem.tau, {"config_hash": cfg.digest()})
    _vtk_series(outdir, "control", problem.mesh, ({"traction": _trace_field(problem.mesh, b.values[k])}
                                                  for k in range(problem.M + 1)))
    summary.update(
        iterations=hist.n_iters, stalled=hist.stalled, converged=hist.converged,
        j_initial=hist.rows[0]["j"], j_final=hist.rows[-1]["j"],
        vi_initial=hist.rows[0]["vi_residual"], vi_final=hist.rows[-1]["vi_residual"],
        warnings=hist.warnings,
    )


def _trace_field(mesh, g):
    full = np.zeros((mesh.n_vertices, 2))
    full[mesh.boundary_vertex_ids] = g
    return full


def cmd_lipschitz(cfg, problem, outdir, summary):
    lp = cfg["lipschitz"]
    rng = np.random.default_rng(cfg["seed"])
    b = problem.control
    rows = []
    for i in range(lp["pairs"]):
        b1 = project(b.with_values(lp["amplitude"] * random_smooth_field(problem.mesh, problem.M, problem.T, rng)))
        b2 = project(b.with_values(lp["amplitude"] * random_smooth_field(problem.mesh, problem.M, problem.T, rng)))
        dist = sigma_norm(problem.mesh, problem.tau, b1.values - b2.values)
        if dist == 0.0:
            continue
        rows.append((i, dist, lipschitz_probe(problem, b1, b2)))
    atomic_write_text(os.path.join(outdir, "lipschitz.csv"), _csv(("pair", "control_distance", "ratio"), rows))
    summary["max_ratio"] = max(r[2] for r in rows)


HANDLERS = {
    "solve": cmd_solve, "adjoint": cmd_adjoint, "linearize": cmd_linearize,
    "gradcheck": cmd_gradcheck, "optimize": cmd_optimize, "lipschitz": cmd_lipschitz,
}


def _versions():
    return {"damctl": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "jsonschema": metadata.version("jsonschema")}


def _write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")


def run_command(cmd: str, config_path, outdir, overrides=()) -> int:
    """Run one command; writes ``summary.json`` on success, ``error.json`` on failure."""
    if cmd not in HANDLERS:
        print(f"damctl: unknown command {cmd!r} (choose from {', '.join(COMMANDS)})", file=sys.stderr)
        return EXIT_USAGE
    os.makedirs(outdir, exist_ok=True)
    for stale in ("summary.json", "error.json"):
        if os.path.exists(os.path.join(outdir, stale)):
            os.unlink(os.path.join(outdir, stale))
    start = time.perf_counter()
    base = {"command": cmd, "config": os.fspath(config_path), "versions": _versions()}
    try:
        base["threads"] = _threads()
        cfg = load_scenario(config_path, overrides)
        problem = build_problem(cfg)
    except (OSError, ScenarioError, ExpressionError, MaterialLawError, ValueError) as exc:
        _write_json(os.path.join(outdir, "error.json"), dict(base, status="usage_error", error=str(exc),
                                                             kind=type(exc).__name__))
        print(f"damctl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    base["config_hash"] = cfg.digest()
    write_scenario(os.path.join(outdir, "scenario.resolved.json"), cfg)
    summary = dict(base)
    try:
        HANDLERS[cmd](cfg, problem, outdir, summary)
    except (NewtonError, SolverError, FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
        err = dict(base, status="solver_error", error=str(exc), kind=type(exc).__name__)
        for attr in ("step", "residual"):
            if hasattr(exc, attr):
                err[attr] = getattr(exc, attr)
        _write_json(os.path.join(outdir, "error.json"), err)
        print(f"damctl: {cmd} failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    summary["status"] = "ok"
    summary["wall_time_s"] = time.perf_counter() - start
    _write_json(os.path.join(outdir, "summary.json"), summary)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="damctl", description=__doc__)
    p.add_argument("cmd", choices=COMMANDS)
    p.add_argument("--config", required=True, help="scenario JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="set a scenario entry, e.g. time.M=40 (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return run_command(args.cmd, args.config, args.out, args.override)


if __name__ == "__main__":
    sys.exit(main())
