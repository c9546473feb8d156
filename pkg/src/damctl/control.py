"""Boundary controls: values on boundary vertices x time nodes, box bounds, projection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import boundary_mass


def trapezoid_weights(n_steps: int, tau: float) -> np.ndarray:
    w = np.full(n_steps + 1, float(tau))
    w[0] = w[-1] = 0.5 * tau
    return w


@dataclass(frozen=True, eq=False)
class Control:
    """Traction field ``values[k, i, d]`` at time node k, boundary vertex i, component d.

    Bounds are stored broadcast to the full shape; ``R`` is the radius of
    the monitored B-norm ball.
    """

    values: np.ndarray
    b_min: np.ndarray = field(default=-np.inf)
    b_max: np.ndarray = field(default=np.inf)
    R: float = np.inf

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 3 or v.shape[2] != 2:
            raise ValueError(f"control values must have shape (n_time, n_boundary, 2), got {v.shape}")
        lo = np.broadcast_to(np.asarray(self.b_min, dtype=float), v.shape).copy()
        hi = np.broadcast_to(np.asarray(self.b_max, dtype=float), v.shape).copy()
        if np.any(lo > hi):
            raise ValueError("(Badm) b_min > b_max somewhere")
        for a in (v, lo, hi):
            a.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "b_min", lo)
        object.__setattr__(self, "b_max", hi)
        object.__setattr__(self, "R", float(self.R))

    @property
    def n_time(self) -> int:
        return self.values.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.values.shape[1]

    def with_values(self, values) -> "Control":
        return Control(values, self.b_min, self.b_max, self.R)

    def is_feasible(self) -> bool:
        return bool(np.all(self.values >= self.b_min) and np.all(self.values <= self.b_max))

    @classmethod
    def zeros(cls, mesh, n_steps: int, b_min=-np.inf, b_max=np.inf, R=np.inf) -> "Control":
        return cls(np.zeros((n_steps + 1, mesh.n_boundary, 2)), b_min, b_max, R)


def project(b: Control, bounds=None) -> Control:
    """Componentwise clamp onto the box; ``bounds = (lo, hi)`` overrides the control's own."""
    lo, hi = (b.b_min, b.b_max) if bounds is None else bounds
    lo = np.broadcast_to(np.asarray(lo, dtype=float), b.values.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), b.values.shape)
    return Control(np.minimum(np.maximum(b.values, lo), hi), lo, hi, b.R)


def sigma_inner(mesh, tau: float, a, b) -> float:
    """Discrete L^2(Sigma) inner product: boundary mass in space, trapezoid rule in time."""
    a = np.asarray(getattr(a, "values", a), dtype=float)
    b = np.asarray(getattr(b, "values", b), dtype=float)
    Mb = boundary_mass(mesh)
    w = trapezoid_weights(a.shape[0] - 1, tau)
    total = 0.0
    for k in range(a.shape[0]):
        total += w[k] * float(np.sum(a[k] * (Mb @ b[k])))
    return total


def sigma_norm(mesh, tau: float, a) -> float:
    return float(np.sqrt(max(sigma_inner(mesh, tau, a, a), 0.0)))
