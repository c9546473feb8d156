"""Desk scenarios used by the regression suite and as CLI examples.

All presets live on the unit square with T = 1 and sample their data from
closed-form expressions, so refinement studies see the same continuum data.
"""
from __future__ import annotations

import numpy as np

from .control import Control
from .materials import MaterialLaw
from .mesh import build_structured_mesh
from .state import Objective, StateProblem, solve_state


def boundary_field(mesh, M, T, fn) -> np.ndarray:
    """Sample ``fn(x1, x2, t) -> (g1, g2)`` on boundary vertices x time nodes."""
    pts = mesh.boundary_points()
    out = np.zeros((M + 1, mesh.n_boundary, 2))
    for k in range(M + 1):
        g1, g2 = fn(pts[:, 0], pts[:, 1], k * T / M)
        out[k, :, 0] = g1
        out[k, :, 1] = g2
    return out


def volume_field(mesh, M, T, fn) -> np.ndarray:
    x1, x2 = mesh.vertices[:, 0], mesh.vertices[:, 1]
    out = np.zeros((M + 1, mesh.n_vertices, 2))
    for k in range(M + 1):
        g1, g2 = fn(x1, x2, k * T / M)
        out[k, :, 0] = g1
        out[k, :, 1] = g2
    return out.reshape(M + 1, -1)


def reference_traction(x1, x2, t):
    return (0.3 * (2 * x1 - 1) * (1 + 0.5 * x2) * np.sin(np.pi * t),
            0.15 * np.sin(np.pi * x1) * (2 * x2 - 1) * t)


def reference_chi0(x1, x2):
    return 0.6 + 0.1 * np.cos(np.pi * x1) * np.cos(np.pi * x2)


def reference_problem(n: int = 8, M: int = 20, T: float = 1.0, law: MaterialLaw | None = None,
                      lambda_T: float = 1.0, lambda_Sigma: float = 1e-2, control_values=None) -> StateProblem:
    """Loaded square with a smooth traction; target is the intact-ish profile chi_T = 0.6."""
    mesh = build_structured_mesh(n)
    law = MaterialLaw() if law is None else law
    values = boundary_field(mesh, M, T, reference_traction) if control_values is None else control_values
    b = Control(values, -2.0, 2.0, R=50.0)
    x1, x2 = mesh.vertices[:, 0], mesh.vertices[:, 1]
    ell = volume_field(mesh, M, T, lambda a, c, t: (0.5 * (a - 0.5) * t, 0.0 * a))
    chi_T = np.full(mesh.n_vertices, 0.6)
    return StateProblem(mesh, law, b, T, M, chi0=reference_chi0(x1, x2), ell=ell,
                        objective=Objective(chi_T, lambda_T, lambda_Sigma))


def stationary_problem(n: int = 8, M: int = 50, T: float = 1.0, chi_star: float = 0.4) -> StateProblem:
    """Zero loads and a potential with ``f'(chi_star) = 0``: the exact solution is constant."""
    mesh = build_structured_mesh(n)
    law = MaterialLaw(f_coeffs=(0.0, -chi_star, 0.5))
    b = Control.zeros(mesh, M)
    chi_T = np.full(mesh.n_vertices, chi_star)
    return StateProblem(mesh, law, b, T, M, chi0=np.full(mesh.n_vertices, chi_star),
                        objective=Objective(chi_T, 1.0, 0.0))


def manufactured_problem(n: int = 6, M: int = 12, T: float = 1.0, B: float = 0.5):
    """Target generated by a known traction ``b*``; returns ``(problem, b_star)``.

    Only the normal traction on the right side is free, in ``[0, B]``; every
    other component is pinned to zero. ``b*`` pulls with the full ``B``, so
    the optimum sits on the upper bound. A stretching body force keeps the
    strain, and hence the gradient, nonzero already at ``b = 0``.
    """
    mesh = build_structured_mesh(n)
    law = MaterialLaw()
    upper = np.zeros((M + 1, mesh.n_boundary, 2))
    upper[:, mesh.side_masks()["right"], 0] = B
    b_star = Control(upper, 0.0, upper, R=50.0)
    x1, x2 = mesh.vertices[:, 0], mesh.vertices[:, 1]
    ell = volume_field(mesh, M, T, lambda a, c, t: (0.5 * (a - 0.5), 0.0 * a))
    chi0 = reference_chi0(x1, x2)
    probe = StateProblem(mesh, law, b_star, T, M, chi0=chi0, ell=ell)
    chi_T = solve_state(probe).chi[-1]
    start = Control(np.zeros_like(upper), 0.0, upper, R=50.0)
    problem = StateProblem(mesh, law, start, T, M, chi0=chi0, ell=ell,
                           objective=Objective(chi_T, 1.0, 0.0))
    return problem, b_star


def random_smooth_field(mesh, M, T, rng, n_modes: int = 3) -> np.ndarray:
    """Random boundary x time field built from a few low-order trigonometric modes.

    Every mode is normalised to unit amplitude, so the result is O(1) and
    smooth in both space and time.
    """
    pts = mesh.boundary_points()
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    s = (pts - lo) / (hi - lo)
    t = np.linspace(0.0, 1.0, M + 1)
    out = np.zeros((M + 1, mesh.n_boundary, 2))
    for d in range(2):
        for _ in range(n_modes):
            kx, ky, kt = rng.integers(0, 3, size=3)
            phase = rng.uniform(0, 2 * np.pi, size=2)
            amp = rng.normal() / n_modes
            space = np.cos(np.pi * kx * s[:, 0] + phase[0]) * np.cos(np.pi * ky * s[:, 1])
            time = np.cos(np.pi * kt * t + phase[1])
            out[:, :, d] += amp * time[:, None] * space[None, :]
    return out
