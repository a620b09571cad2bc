"""Run-configuration documents: schema validation and problem assembly."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import jsonschema
import numpy as np

from . import exprlang
from .errors import ConfigError
from .grid import Grid, build_interval_grid, build_masked_grid_2d, disk_grid
from .models import KINDS, GrowthModel
from .operators import CoefficientFields, DiscreteOperator, assemble

_expr = {"type": ["string", "number"]}
_num = {"type": "number"}
_point = {"oneOf": [{"type": "number"}, {"type": "array", "items": _num, "minItems": 1, "maxItems": 2}]}

SCHEMA = {
    "type": "object",
    "required": ["domain", "grid", "model"],
    "additionalProperties": False,
    "properties": {
        "domain": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["interval", "rect", "disk", "implicit"]},
                "a": _num, "b": _num,
                "center": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "bbox": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
                "inside": {"type": "string"},
            },
            "additionalProperties": False,
        },
        "grid": {
            "type": "object",
            "properties": {"n": {"type": "integer"}, "nx": {"type": "integer"}, "ny": {"type": "integer"}},
            "additionalProperties": False,
        },
        "coefficients": {
            "type": "object",
            "properties": {"d": _expr, "b": {"type": "array", "items": _expr, "maxItems": 2}, "m": _expr},
            "additionalProperties": False,
        },
        "model": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"enum": list(KINDS)}, "params": {"type": "object"}},
            "additionalProperties": False,
        },
        "analysis": {
            "type": "object",
            "properties": {
                "lambda": _num,
                "lambda_list": {"type": "array", "items": _num},
                "n_max": {"type": "integer", "minimum": 0},
                "n": {"type": "integer", "minimum": 0},
                "branch_sign": {"enum": [1, -1]},
            },
            "additionalProperties": False,
        },
        "simulation": {
            "type": "object",
            "properties": {
                "tau": {"type": "number", "minimum": 0},
                "tau_values": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "steps_per_delay": {"type": "integer", "minimum": 1},
                "t_end": {"type": "number", "exclusiveMinimum": 0},
                "eta": _expr,
                "probes": {"type": "array", "items": _point},
                "snapshot_times": {"type": "array", "items": _num},
                "scheme": {"enum": ["euler", "sbdf2"]},
                "transient_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "amp_tol": {"type": "number", "exclusiveMinimum": 0},
                "sample_every": {"type": "integer", "minimum": 1},
                "baseline": {"enum": ["none", "steady"]},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"directory": {"type": "string"}, "prefix": {"type": "string"}},
            "additionalProperties": False,
        },
    },
}


@dataclass
class Problem:
    """Everything assembled from a config: grid, operator, model and parameters."""

    config: dict
    grid: Grid
    op: DiscreteOperator
    model: GrowthModel
    m: np.ndarray
    analysis: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @property
    def lambdas(self):
        a = self.analysis
        if "lambda_list" in a:
            return [float(v) for v in a["lambda_list"]]
        if "lambda" in a:
            return [float(a["lambda"])]
        return []


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    validate(doc)
    return doc


def validate(doc):
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from exc


def _build_grid(dom, grid) -> Grid:
    kind = dom["kind"]
    if kind == "interval":
        if "n" not in grid:
            raise ConfigError("interval domains need grid.n")
        return build_interval_grid(float(dom.get("a", 0.0)), float(dom.get("b", math.pi)), int(grid["n"]))
    nx = int(grid.get("nx", grid.get("n", 64)))
    ny = int(grid.get("ny", nx))
    if kind == "disk":
        return disk_grid(tuple(dom.get("center", (math.pi, math.pi))), float(dom.get("radius", math.pi)), nx, ny)
    if "bbox" not in dom:
        raise ConfigError(f"{kind} domains need a bbox [x0, x1, y0, y1]")
    bbox = dom["bbox"]
    if kind == "rect":
        return build_masked_grid_2d(bbox, nx, ny, lambda X, Y: np.ones(X.shape, dtype=bool),
                                    {"kind": "rect"})
    if "inside" not in dom:
        raise ConfigError("implicit domains need an 'inside' expression (node kept where it is >= 0)")
    f = exprlang.compile_expr(dom["inside"])
    return build_masked_grid_2d(bbox, nx, ny, lambda X, Y: np.asarray(f(X, Y)) >= 0,
                                {"kind": "implicit", "inside": dom["inside"]})


def build_problem(doc) -> Problem:
    validate(doc)
    g = _build_grid(doc["domain"], doc["grid"])
    coeffs = dict(doc.get("coefficients", {}))
    mdoc = doc["model"]
    params = dict(mdoc.get("params", {}))
    if mdoc["kind"] == "logistic_heterogeneous" and "m" in coeffs:
        params.setdefault("m", coeffs["m"])
    model = GrowthModel(mdoc["kind"], params)
    m = np.asarray(model.m_field(g), dtype=float)
    if "m" in coeffs and mdoc["kind"] != "logistic_heterogeneous":
        given = CoefficientFields(m=coeffs["m"]).m_at(*((g.x,) if g.dim == 1 else (g.x, g.y)))
        if not np.allclose(given, m, rtol=1e-12, atol=1e-12):
            raise ConfigError(f"coefficients.m disagrees with f(x, 0) of the {mdoc['kind']} model")
    b = coeffs.get("b", [0.0] * g.dim)
    if len(b) != g.dim:
        raise ConfigError(f"coefficients.b needs {g.dim} component(s), got {len(b)}")
    cf = CoefficientFields(d=coeffs.get("d", 1.0), b=tuple(b), m=1.0)
    op = assemble(g, cf)
    op = DiscreteOperator(A=op.A, A_adj=op.A_adj, grid=g, coeffs=cf, m=m)
    if not np.all(np.isfinite(m)):
        raise ConfigError("f(x, 0) is not finite on the grid")
    return Problem(config=doc, grid=g, op=op, model=model, m=m,
                   analysis=dict(doc.get("analysis", {})), simulation=dict(doc.get("simulation", {})),
                   output=dict(doc.get("output", {})))


def eta_callable(src):
    """History initializer from a number or an expression string."""
    if isinstance(src, str):
        return exprlang.compile_expr(src)
    value = float(src)
    return lambda x, y=0.0: np.full(np.shape(x), value)


def probe_points(probes, dim):
    pts = []
    for p in probes or []:
        arr = np.atleast_1d(np.asarray(p, dtype=float))
        if arr.size != dim:
            raise ConfigError(f"probe {p!r} has {arr.size} coordinate(s), domain is {dim}D")
        pts.append(tuple(arr))
    return pts
