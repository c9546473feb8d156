"""JSON scenario files: schema, defaults, validation and conversion to a StateProblem.

Every block is optional; an empty object ``{}`` describes the 8x8 reference
desk problem. Field values given as strings are expressions over
``x1, x2`` (and ``t`` where time dependence makes sense).
"""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from ._io import atomic_write_text
from .checkpoint import load_control
from .control import Control
from .expr import Expression, ExpressionError
from .materials import MaterialLaw, validate
from .mesh import build_structured_mesh
from .optimize import OptimizeConfig
from .state import Objective, StateProblem, solve_state


class ScenarioError(ValueError):
    pass


_num_or_expr = {"type": ["number", "string"]}
_pair = {"type": "array", "items": _num_or_expr, "minItems": 2, "maxItems": 2}
_bound = {"oneOf": [{"type": "number"}, _pair]}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "mesh": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "rectangle": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
            },
        },
        "material": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "delta": {"type": "number"},
                "lame": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "mu_visc": {"type": "number"},
                "gamma_xi": {"type": "number"},
                "eps_xi": {"type": "number"},
                "f_coeffs": {"type": "array", "items": {"type": "number"}, "maxItems": 5},
            },
        },
        "time": {
            "type": "object", "additionalProperties": False,
            "properties": {"T": {"type": "number", "exclusiveMinimum": 0}, "M": {"type": "integer", "minimum": 2}},
        },
        "initial": {
            "type": "object", "additionalProperties": False,
            "properties": {"u0": _pair, "v0": _pair, "chi0": _num_or_expr},
        },
        "forcing": _pair,
        "target": _num_or_expr,
        "control": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "b_min": _bound,
                "b_max": _bound,
                "R": {"type": "number", "exclusiveMinimum": 0},
                "initial": _pair,
                "active_sides": {
                    "type": "array", "uniqueItems": True,
                    "items": {"enum": ["left", "right", "bottom", "top"]},
                },
                "active_components": {
                    "type": "array", "uniqueItems": True, "items": {"enum": [0, 1]},
                },
            },
        },
        "cost": {
            "type": "object", "additionalProperties": False,
            "properties": {"lambda_T": {"type": "number"}, "lambda_Sigma": {"type": "number"}},
        },
        "optimizer": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "max_iters": {"type": "integer"},
                "c1": {"type": "number"},
                "backtrack": {"type": "number"},
                "max_backtracks": {"type": "integer"},
                "initial_step": {"type": "number"},
                "vi_tolerance": {"type": "number"},
                "vi_rtol": {"type": "number"},
                "bb_step": {"type": "boolean"},
            },
        },
        "adjoint": {
            "type": "object", "additionalProperties": False,
            "properties": {"smooth": {"type": "boolean"}, "form": {"enum": ["conservative", "product"]}},
        },
        "gradcheck": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "directions": {"type": "integer", "minimum": 1},
                "lambdas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
            },
        },
        "lipschitz": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "pairs": {"type": "integer", "minimum": 1},
                "amplitude": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}

DEFAULTS = {
    "name": "scenario",
    "seed": 0,
    "mesh": {"n": 8, "rectangle": [0.0, 0.0, 1.0, 1.0]},
    "material": MaterialLaw().to_dict(),
    "time": {"T": 1.0, "M": 20},
    "initial": {"u0": [0.0, 0.0], "v0": [0.0, 0.0], "chi0": "0.6 + 0.1*cos(pi*x1)*cos(pi*x2)"},
    "forcing": ["0.5*(x1 - 0.5)*t", 0.0],
    "target": 0.6,
    "control": {
        "b_min": -2.0,
        "b_max": 2.0,
        "R": 50.0,
        "initial": ["0.3*(2*x1 - 1)*(1 + 0.5*x2)*sin(pi*t)", "0.15*sin(pi*x1)*(2*x2 - 1)*t"],
        "active_sides": ["left", "right", "bottom", "top"],
        "active_components": [0, 1],
    },
    "cost": {"lambda_T": 1.0, "lambda_Sigma": 1e-2},
    "optimizer": {k: v for k, v in OptimizeConfig().to_dict().items() if k not in ("lambda_T", "lambda_Sigma")},
    "adjoint": {"smooth": False, "form": "conservative"},
    "gradcheck": {"directions": 1, "lambdas": [1e-2, 1e-3, 1e-4]},
    "lipschitz": {"pairs": 10, "amplitude": 1.0},
}

_SECTIONS = tuple(k for k, v in DEFAULTS.items() if isinstance(v, dict))


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path)


def schema_errors(raw) -> list[str]:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errs = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    return [f"{_pointer(e.absolute_path)}: {e.message}" for e in errs]


def fill_defaults(raw: dict) -> dict:
    out = copy.deepcopy(DEFAULTS)
    for key, val in raw.items():
        if key in _SECTIONS:
            out[key].update(copy.deepcopy(val))
        else:
            out[key] = copy.deepcopy(val)
    return out


def apply_override(raw: dict, assignment: str) -> dict:
    """Apply ``a.b.c=value``; the value is parsed as JSON, falling back to a string."""
    if "=" not in assignment:
        raise ScenarioError(f"override {assignment!r} is not of the form key=value")
    key, text = assignment.split("=", 1)
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    parts = key.strip().split(".")
    node = raw
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ScenarioError(f"override {key!r} descends into a non-object")
    node[parts[-1]] = value
    return raw


@dataclass(eq=False)
class ScenarioConfig:
    """Fully defaulted scenario; compares equal when the data blocks agree."""

    data: dict
    base_dir: str = "."
    report: object = field(default=None, repr=False)

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.data == other.data

    def __getitem__(self, key):
        return self.data[key]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def digest(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    @property
    def law(self) -> MaterialLaw:
        return MaterialLaw(**self.data["material"])

    @property
    def optimizer(self) -> OptimizeConfig:
        c = self.data["cost"]
        return OptimizeConfig(**self.data["optimizer"], lambda_T=c["lambda_T"], lambda_Sigma=c["lambda_Sigma"])

    def resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)


def config_from_dict(raw: dict, base_dir: str = ".") -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ScenarioError("/: scenario must be a JSON object")
    errs = schema_errors(raw)
    if errs:
        raise ScenarioError("schema violation(s):\n  " + "\n  ".join(errs))
    data = fill_defaults(raw)
    try:
        law = MaterialLaw(**data["material"])
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"/material: {exc}") from None
    report = validate(law)
    if not report.ok:
        raise ScenarioError("/material: " + "; ".join(f"{c.tag} {c.name}: {c.detail}" for c in report.violations))
    c = data["cost"]
    try:
        Objective(np.zeros(1), c["lambda_T"], c["lambda_Sigma"])
        OptimizeConfig(**data["optimizer"])
    except ValueError as exc:
        raise ScenarioError(f"/cost or /optimizer: {exc}") from None
    x0, y0, x1, y1 = data["mesh"]["rectangle"]
    if not (x1 > x0 and y1 > y0):
        raise ScenarioError("/mesh/rectangle: need xmax > xmin and ymax > ymin")
    _check_expressions(data)
    cfg = ScenarioConfig(data, base_dir, report)
    target = data["target"]
    if isinstance(target, str) and target.startswith("from_forward:"):
        ref = cfg.resolve(target.split(":", 1)[1])
        if not os.path.exists(ref):
            raise ScenarioError(f"/target: control file {ref!r} does not exist")
    return cfg


def _check_expressions(data):
    def check(ptr, src, allow_t):
        try:
            e = Expression(src)
        except ExpressionError as exc:
            raise ScenarioError(f"{ptr}: {exc}") from None
        if e.uses_time and not allow_t:
            raise ScenarioError(f"{ptr}: initial data may not depend on t")

    for name in ("u0", "v0"):
        for i, s in enumerate(data["initial"][name]):
            check(f"/initial/{name}/{i}", s, False)
    check("/initial/chi0", data["initial"]["chi0"], False)
    for i, s in enumerate(data["forcing"]):
        check(f"/forcing/{i}", s, True)
    for i, s in enumerate(data["control"]["initial"]):
        check(f"/control/initial/{i}", s, True)
    for key in ("b_min", "b_max"):
        val = data["control"][key]
        for i, s in enumerate(val if isinstance(val, list) else [val]):
            check(f"/control/{key}/{i}", s, True)
    t = data["target"]
    if not (isinstance(t, str) and t.startswith("from_forward:")):
        check("/target", t, False)


def load_scenario(path, overrides=()) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from None
    for o in overrides:
        apply_override(raw, o)
    return config_from_dict(raw, os.path.dirname(os.path.abspath(path)))


def write_scenario(path, cfg: ScenarioConfig) -> None:
    atomic_write_text(path, json.dumps(cfg.data, indent=2, sort_keys=True) + "\n")


# -- building the discrete problem -------------------------------------------------

def _sample_pair(mesh_pts, srcs, times):
    e1, e2 = Expression(srcs[0]), Expression(srcs[1])
    out = np.zeros((len(times), len(mesh_pts), 2))
    for k, t in enumerate(times):
        out[k, :, 0] = e1(mesh_pts[:, 0], mesh_pts[:, 1], t)
        out[k, :, 1] = e2(mesh_pts[:, 0], mesh_pts[:, 1], t)
    return out


def _bound_field(val, pts, times):
    pair = val if isinstance(val, list) else [val, val]
    return _sample_pair(pts, pair, times)


def build_mesh(cfg: ScenarioConfig):
    m = cfg["mesh"]
    return build_structured_mesh(m["n"], tuple(m["rectangle"]))


def build_control(cfg: ScenarioConfig, mesh, values=None) -> Control:
    """Control with bounds and initial guess; inactive sides/components are pinned to 0."""
    T, M = cfg["time"]["T"], cfg["time"]["M"]
    times = np.linspace(0.0, T, M + 1)
    c = cfg["control"]
    pts = mesh.boundary_points()
    lo = _bound_field(c["b_min"], pts, times)
    hi = _bound_field(c["b_max"], pts, times)
    init = _sample_pair(pts, c["initial"], times) if values is None else np.array(values, dtype=float)
    masks = mesh.side_masks()
    active = np.zeros(init.shape, dtype=bool)
    side_on = np.zeros(mesh.n_boundary, dtype=bool)
    for s in c["active_sides"]:
        side_on |= masks[s]
    for comp in c["active_components"]:
        active[:, side_on, comp] = True
    lo = np.where(active, lo, 0.0)
    hi = np.where(active, hi, 0.0)
    init = np.where(active, init, 0.0)
    try:
        return Control(init, lo, hi, c["R"])
    except ValueError as exc:
        raise ScenarioError(f"/control: {exc}") from None


def build_problem(cfg: ScenarioConfig) -> StateProblem:
    mesh = build_mesh(cfg)
    law = cfg.law
    T, M = cfg["time"]["T"], cfg["time"]["M"]
    times = np.linspace(0.0, T, M + 1)
    x1, x2 = mesh.vertices[:, 0], mesh.vertices[:, 1]
    verts = mesh.vertices
    ini = cfg["initial"]
    u0 = _sample_pair(verts, ini["u0"], [0.0])[0].ravel()
    v0 = _sample_pair(verts, ini["v0"], [0.0])[0].ravel()
    chi0 = Expression(ini["chi0"])(x1, x2)
    ell = _sample_pair(verts, cfg["forcing"], times).reshape(M + 1, -1)
    control = build_control(cfg, mesh)
    problem = StateProblem(mesh, law, control, T, M, u0=u0, v0=v0, chi0=chi0, ell=ell)

    target = cfg["target"]
    if isinstance(target, str) and target.startswith("from_forward:"):
        chi_T = _forward_target(cfg, problem, cfg.resolve(target.split(":", 1)[1]))
    else:
        chi_T = Expression(target)(x1, x2)
    if not np.all(np.isfinite(chi_T)):
        raise ScenarioError("/target: (O2) target is not a bounded nodal field")
    cost = cfg["cost"]
    problem.objective = Objective(chi_T, cost["lambda_T"], cost["lambda_Sigma"])
    return problem


def _forward_target(cfg, problem, path):
    """chi(T) of a forward run with the control stored in ``path`` (checkpoint or JSON)."""
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if "traction" not in doc:
            raise ScenarioError(f"/target: {path} needs a 'traction' pair")
        b = build_control(cfg, problem.mesh,
                          _sample_pair(problem.mesh.boundary_points(), doc["traction"],
                                       np.linspace(0.0, problem.T, problem.M + 1)))
    else:
        b, tau = load_control(path)
        if b.values.shape != problem.control.values.shape or not np.isclose(tau, problem.tau):
            raise ScenarioError(f"/target: control in {path} does not match the scenario grid")
    return solve_state(problem, Control(b.values)).chi[-1]
