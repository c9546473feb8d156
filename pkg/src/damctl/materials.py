"""Damage-dependent stiffness, irreversibility penalty and damage potential."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


class MaterialLawError(ValueError):
    """A material law violates one of the model assumptions."""


@dataclass(frozen=True)
class MaterialLaw:
    """Parameter record for the constitutive functions.

    ``f_coeffs`` lists polynomial coefficients of the damage potential in
    increasing degree, ``f(x) = sum_i f_coeffs[i] * x**i``.
    """

    delta: float = 1e-2
    lame: tuple = (1.0, 1.0)
    mu_visc: float = 0.1
    gamma_xi: float = 1e2
    eps_xi: float = 1e-2
    f_coeffs: tuple = (0.05, -0.05)

    def __post_init__(self):
        object.__setattr__(self, "lame", tuple(float(v) for v in self.lame))
        object.__setattr__(self, "f_coeffs", tuple(float(v) for v in self.f_coeffs))
        if len(self.lame) != 2:
            raise MaterialLawError("lame must be a pair (lambda, mu)")
        if len(self.f_coeffs) > 5:
            raise MaterialLawError("(A5) potential f must have degree <= 4")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lame"] = list(self.lame)
        d["f_coeffs"] = list(self.f_coeffs)
        return d

    def c_bound(self) -> float:
        """Closed-form bound on |c'|: the smoothstep slope peaks at 140/64."""
        return (1.0 - self.delta) * 140.0 / 64.0

    def xi2_bound(self) -> float:
        return 1.5 * self.gamma_xi / self.eps_xi

    def eval_c(self, x):
        return eval_c(self, x)

    def eval_xi(self, x):
        return eval_xi(self, x)

    def eval_f(self, x):
        return eval_f(self, x)


def eval_c(law: MaterialLaw, x):
    """Return ``(c, c', c'')`` with ``c = delta + (1 - delta) * s7`` and s7 the C^3 septic smoothstep."""
    x = np.asarray(x, dtype=float)
    t = np.clip(x, 0.0, 1.0)
    inside = (x > 0.0) & (x < 1.0)
    # clip: the polynomial overshoots 1 by an ulp just below t = 1
    s = np.clip(t**4 * (35.0 - 84.0 * t + 70.0 * t**2 - 20.0 * t**3), 0.0, 1.0)
    ds = np.where(inside, 140.0 * t**3 * (1.0 - t) ** 3, 0.0)
    d2s = np.where(inside, 420.0 * t**2 * (1.0 - t) ** 2 * (1.0 - 2.0 * t), 0.0)
    a = 1.0 - law.delta
    return law.delta + a * s, a * ds, a * d2s


def eval_xi(law: MaterialLaw, x):
    """Return ``(xi, xi', xi'')`` for the C^2 ramp ``gamma * s(x)``.

    ``s`` vanishes for x <= 0, is the quartic blend ``x^3/e^2 - x^4/(2 e^3)``
    on [0, e] and continues linearly as ``x - e/2``.
    """
    x = np.asarray(x, dtype=float)
    g, e = law.gamma_xi, law.eps_xi
    mid = (x > 0.0) & (x < e)
    t = np.clip(x, 0.0, e)
    s = np.where(x >= e, x - 0.5 * e, t**3 / e**2 - t**4 / (2.0 * e**3))
    ds = np.where(x >= e, 1.0, 3.0 * t**2 / e**2 - 2.0 * t**3 / e**3)
    d2s = np.where(mid, 6.0 * t / e**2 - 6.0 * t**2 / e**3, 0.0)
    return g * s, g * ds, g * d2s


def eval_f(law: MaterialLaw, x):
    """Return ``(f', f'')`` of the polynomial potential."""
    x = np.asarray(x, dtype=float)
    coeffs = np.asarray(law.f_coeffs, dtype=float)
    p = np.polynomial.Polynomial(coeffs)
    d1 = p.deriv(1)
    d2 = p.deriv(2) if len(coeffs) > 2 else np.polynomial.Polynomial([0.0])
    return d1(x) + 0.0 * x, d2(x) + 0.0 * x


@dataclass
class Check:
    tag: str
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def violations(self) -> list:
        return [c for c in self.checks if not c.passed]

    def raise_if_failed(self) -> None:
        if not self.ok:
            msg = "; ".join(f"{c.tag} {c.name}: {c.detail}" for c in self.violations)
            raise MaterialLawError(msg)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "checks": [asdict(c) for c in self.checks],
            "notes": list(self.notes),
        }


def validate(law: MaterialLaw, grid=None) -> ValidationReport:
    """Check the standing assumptions numerically on a sample grid."""
    x = np.linspace(-1.0, 2.0, 3001) if grid is None else np.asarray(grid, dtype=float)
    rep = ValidationReport()
    add = rep.checks.append

    lam, mu = law.lame
    add(Check("(A2)", "stiffness tensor positive definite", mu > 0 and lam >= 0,
              f"lambda={lam}, mu={mu}"))
    add(Check("(A2)", "strict stiffness floor 0 < delta < 1", 0.0 < law.delta < 1.0,
              f"delta={law.delta}"))
    if 0.0 < law.delta < 1.0:
        c, dc, _ = eval_c(law, x)
        add(Check("(A2)", "c >= delta", bool(np.all(c >= law.delta - 1e-15)), f"min c = {c.min():.3e}"))
        add(Check("(A2)", "c monotone", bool(np.all(np.diff(c) >= -1e-15)), ""))
        add(Check("(A2)", "|c'| bound", bool(np.all(np.abs(dc) <= law.c_bound() * (1 + 1e-12))),
                  f"max |c'| = {np.abs(dc).max():.4f} <= {law.c_bound():.4f}"))
    rep.notes.append(
        "(A2) convex/concave split c = c1 + c2 holds by construction: the smoothstep is "
        "convex on [0, 1/2] and concave on [1/2, 1], glued C^3 (recorded, not proven)"
    )
    rep.notes.append("(B1) c is C^3 by construction of the septic smoothstep")

    add(Check("(A3)", "xi monotone (gamma_xi > 0)", law.gamma_xi > 0, f"gamma_xi={law.gamma_xi}"))
    add(Check("(B2)", "smoothing width eps_xi > 0", law.eps_xi > 0, f"eps_xi={law.eps_xi}"))
    if law.gamma_xi > 0 and law.eps_xi > 0:
        xi, dxi, d2xi = eval_xi(law, x)
        add(Check("(A3)", "xi = 0 on x <= 0", bool(np.all(xi[x <= 0] == 0.0)), ""))
        add(Check("(A3)", "xi' >= 0", bool(np.all(dxi >= 0.0)), f"min xi' = {dxi.min():.3e}"))
        add(Check("(A3)", "xi' <= gamma_xi", bool(np.all(dxi <= law.gamma_xi * (1 + 1e-12))), ""))
        add(Check("(B2)", "xi'' bounded", bool(np.all(np.abs(d2xi) <= law.xi2_bound() * (1 + 1e-12))),
                  f"max |xi''| = {np.abs(d2xi).max():.4e} <= {law.xi2_bound():.4e}"))

    add(Check("(A4)", "viscosity factor mu_visc > 0", law.mu_visc > 0, f"mu_visc={law.mu_visc}"))

    df, d2f = eval_f(law, x)
    add(Check("(A5)", "f' Lipschitz on operating range", bool(np.all(np.isfinite(d2f))),
              f"max |f''| on [{x.min()}, {x.max()}] = {np.abs(d2f).max():.4e}"))
    return rep
