"""YAML run configuration: schema, line-anchored validation and builders.

The schema below is normative; docs/CONFIG.md mirrors it field by field.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__
from .control import ControlBasis, ControlConfig, ControlProblem, ControlSpace
from .grid import build_grid
from .material import MaterialLaw, PiecewisePolynomial, StiffnessTensor, coefficient_preset, extend_coefficient, potential_preset
from .problems import Problem, ScaledLoad, TimeProfile, cosine_profile, side_traction_load
from .stepper import Discretization, InitialData

__all__ = ["ConfigError", "Spec", "SCHEMA", "load_config", "parse_config", "dump_config", "config_hash", "provenance", "RunConfig"]


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)
        self.line = line


@dataclass(frozen=True)
class Spec:
    kind: str  # int, float, bool, str, list_float, list_int, list_str, list_vec, mapping, float_or_null, list_float_or_null, str_or_null
    default: Any
    check: Callable[[Any], bool] | None = None
    requirement: str = ""
    choices: tuple = ()


def _pos(x):
    return x > 0


def _unit(x):
    return 0 < x < 1


def _nonneg(x):
    return x >= 0


def _decreasing_unit(xs):
    return len(xs) > 0 and all(0 < x < 1 for x in xs) and all(b < a for a, b in zip(xs, xs[1:]))


def _increasing_pos(xs):
    return len(xs) > 0 and all(x > 0 for x in xs) and all(b > a for a, b in zip(xs, xs[1:]))


def _decreasing_pos(xs):
    return len(xs) > 0 and all(x > 0 for x in xs) and all(b < a for a, b in zip(xs, xs[1:]))


SCHEMA: dict[str, dict[str, Spec]] = {
    "geometry": {
        "dim": Spec("int", 2, lambda x: x in (1, 2), "1 or 2"),
        "extents": Spec("list_float", [1.0, 1.0], lambda xs: all(x > 0 for x in xs), "positive lengths"),
        "cells": Spec("list_int", [16, 16], lambda xs: all(x >= 1 for x in xs), "cell counts >= 1"),
    },
    "material": {
        "coefficient": Spec("str", "quadratic", choices=("quadratic", "constant", "cubic", "custom")),
        "coefficient_params": Spec("mapping", {}),
        "delta": Spec("float", 1.0, _pos, "> 0"),
        "potential": Spec("str", "quadratic", choices=("quadratic", "zero", "linear", "custom")),
        "potential_params": Spec("mapping", {}),
        "lame_lambda": Spec("float", 1.0),
        "lame_mu": Spec("float", 1.0, _pos, "> 0"),
        "mu": Spec("float", 1.0, _pos, "> 0"),
        "d": Spec("float", 1.0, _pos, "> 0"),
    },
    "time": {
        "T": Spec("float", 0.5, _pos, "> 0"),
        "tau": Spec("float", 0.01, _pos, "> 0"),
        "beta": Spec("float", 0.01, _unit, "in (0, 1)"),
        "penalty": Spec("str", "moreau_yosida", choices=("moreau_yosida", "smooth_variant")),
        "newton_tol": Spec("float", 1e-10, _pos, "> 0"),
        "newton_max_iter": Spec("int", 50, lambda x: x >= 1, ">= 1"),
    },
    "initial": {
        "chi_profile": Spec("str", "cosine", choices=("constant", "cosine")),
        "chi_mean": Spec("float", 1.0),
        "chi_amplitude": Spec("float", 0.3),
        "v0": Spec("list_float_or_null", None),
    },
    "forcing": {
        "traction_sides": Spec("list_str", ["right"]),
        "traction_direction": Spec("list_float", [-1.0, 0.0]),
        "traction_amplitude": Spec("float", 2.0),
        "traction_profile": Spec("str", "sine", choices=("sine", "constant", "ramp")),
        "control_file": Spec("str_or_null", None),
        "body_force": Spec("list_float_or_null", None),
    },
    "output": {
        "snapshot_every": Spec("int", 1, lambda x: x >= 1, ">= 1"),
        "snapshots": Spec("bool", True),
    },
    "verify": {
        "beta_list": Spec("list_float", [1e-1, 1e-2, 1e-3, 1e-4], _decreasing_unit, "strictly decreasing in (0, 1)"),
        "tau_list": Spec("list_float", [0.1, 0.05, 0.025], _decreasing_pos, "strictly decreasing, positive"),
        "tau_reference": Spec("float", 0.00625, _pos, "> 0"),
        "deltas": Spec("list_float", [1e-4, 1e-3, 1e-2], _increasing_pos, "strictly increasing, positive"),
        "perturb": Spec("str", "traction", choices=("traction", "chi0")),
        "oracle_instances": Spec("int", 100, lambda x: x >= 1, ">= 1"),
    },
    "control": {
        "lambda_Q": Spec("float", 0.0, _nonneg, ">= 0"),
        "lambda_Omega": Spec("float", 1.0, _nonneg, ">= 0"),
        "lambda_Sigma": Spec("float", 1e-3, _nonneg, ">= 0"),
        "chi_Q_mean": Spec("float", 1.0),
        "chi_Q_amplitude": Spec("float", 0.0),
        "chi_T_mean": Spec("float", 1.0),
        "chi_T_amplitude": Spec("float", 0.0),
        "tracking": Spec("str", "sup", choices=("sup", "l2")),
        "beta_schedule": Spec("list_float", [1e-1, 1e-2, 1e-3, 1e-4], _decreasing_unit, "strictly decreasing in (0, 1)"),
        "basis_sides": Spec("list_str", ["right"]),
        "basis_directions": Spec("list_vec", [[-1.0, 0.0]]),
        "n_time": Spec("int", 2, lambda x: x >= 1, ">= 1"),
        "b_min": Spec("float", 0.0, lambda x: x <= 0, "<= 0"),
        "b_max": Spec("float", 3.0, _nonneg, ">= 0"),
        "norm_cap": Spec("float", 100.0, _pos, "> 0"),
        "method": Spec("str", "pattern", choices=("pattern", "gradient")),
        "initial_step": Spec("float", 0.5, _pos, "> 0"),
        "min_step": Spec("float", 1e-3, _pos, "> 0"),
        "max_evals": Spec("int", 400, lambda x: x >= 1, ">= 1"),
        "restarts": Spec("int", 5, lambda x: x >= 1, ">= 1"),
        "restart_every_level": Spec("bool", False),
        "anchor": Spec("list_float_or_null", None),
        "proximal_weight": Spec("float", 1.0, _pos, "> 0"),
        "continuation_tol": Spec("float", 1e-2, _pos, "> 0"),
    },
}
TOP_LEVEL = {"seed": Spec("int", 0, _nonneg, ">= 0")}


# --------------------------------------------------------------------------
# parsing with line numbers


def _line_index(text: str) -> dict[tuple, int]:
    """Map key paths to 1-based source lines."""
    index: dict[tuple, int] = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return index

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (k.value,)
                index[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                index[path + (i,)] = v.start_mark.line + 1
                walk(v, path + (i,))

    if root is not None:
        walk(root, ())
    return index


_EXP_FLOAT = re.compile(r"[-+]?(\d+\.?\d*|\.\d+)[eE][-+]?\d+")


def _coerce(value, spec: Spec, err: Callable[[str], Exception]):
    k = spec.kind
    if value is None and k.endswith("_or_null"):
        return None
    base = k[: -len("_or_null")] if k.endswith("_or_null") else k

    def num(x):
        # YAML 1.1 reads exponent literals without a dot (1e-4) as strings
        if isinstance(x, str) and _EXP_FLOAT.fullmatch(x.strip()):
            return float(x)
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise err(f"expected a number, got {x!r}")
        out = float(x)
        if not np.isfinite(out):
            raise err(f"expected a finite number, got {x!r}")
        return out

    if base == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise err(f"expected an integer, got {value!r}")
        out = value
    elif base == "float":
        out = num(value)
    elif base == "bool":
        if not isinstance(value, bool):
            raise err(f"expected true/false, got {value!r}")
        out = value
    elif base == "str":
        if not isinstance(value, str):
            raise err(f"expected a string, got {value!r}")
        out = value
    elif base in ("list_float", "list_int", "list_str", "list_vec"):
        if not isinstance(value, list):
            raise err(f"expected a list, got {value!r}")
        if base == "list_float":
            out = [num(x) for x in value]
        elif base == "list_int":
            if any(isinstance(x, bool) or not isinstance(x, int) for x in value):
                raise err(f"expected a list of integers, got {value!r}")
            out = list(value)
        elif base == "list_str":
            if any(not isinstance(x, str) for x in value):
                raise err(f"expected a list of strings, got {value!r}")
            out = list(value)
        else:
            if any(not isinstance(x, list) for x in value):
                raise err(f"expected a list of vectors, got {value!r}")
            out = [[num(y) for y in x] for x in value]
    elif base == "mapping":
        if not isinstance(value, dict):
            raise err(f"expected a mapping, got {value!r}")
        out = value
    else:  # pragma: no cover
        raise AssertionError(k)
    if spec.choices and out not in spec.choices:
        raise err(f"must be one of {', '.join(spec.choices)}, got {out!r}")
    if spec.check is not None and not spec.check(out):
        raise err(f"must be {spec.requirement}, got {out!r}")
    return out


def parse_config(text: str, source: str = "<config>") -> dict:
    """Validate YAML text against the schema and fill defaults."""
    lines = _line_index(text)
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None, source)
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping", 1, source)

    def err_at(path):
        line = lines.get(path)
        return lambda msg: ConfigError(f"{'.'.join(map(str, path))}: {msg}", line, source)

    out: dict = {}
    for key, value in raw.items():
        if key not in SCHEMA and key not in TOP_LEVEL:
            raise err_at((key,))(f"unknown section; expected one of {', '.join(list(SCHEMA) + list(TOP_LEVEL))}")
    for key, spec in TOP_LEVEL.items():
        out[key] = _coerce(raw[key], spec, err_at((key,))) if key in raw else spec.default
    for section, fields in SCHEMA.items():
        given = raw.get(section) or {}
        if not isinstance(given, dict):
            raise err_at((section,))("section must be a mapping")
        for k in given:
            if k not in fields:
                raise err_at((section, k))(f"unknown field; expected one of {', '.join(fields)}")
        sec = {}
        for k, spec in fields.items():
            sec[k] = _coerce(given[k], spec, err_at((section, k))) if k in given else _copy(spec.default)
        out[section] = sec
    _cross_check(out, lines, source)
    return out


def _copy(x):
    if isinstance(x, list):
        return [_copy(v) for v in x]
    if isinstance(x, dict):
        return {k: _copy(v) for k, v in x.items()}
    return x


def _cross_check(cfg: dict, lines: dict, source: str) -> None:
    def fail(path, msg):
        raise ConfigError(f"{'.'.join(path)}: {msg}", lines.get(path), source)

    g, t = cfg["geometry"], cfg["time"]
    dim = g["dim"]
    if len(g["extents"]) != dim:
        fail(("geometry", "extents"), f"needs {dim} entries")
    if len(g["cells"]) != dim:
        fail(("geometry", "cells"), f"needs {dim} entries")
    if t["tau"] > t["T"]:
        fail(("time", "tau"), f"tau = {t['tau']} exceeds T = {t['T']}")
    n = t["T"] / t["tau"]
    if abs(n - round(n)) > 1e-9 * n:
        fail(("time", "tau"), f"T / tau = {n} is not an integer")
    f = cfg["forcing"]
    if len(f["traction_direction"]) != dim:
        fail(("forcing", "traction_direction"), f"needs {dim} components")
    sides = ("left", "right") if dim == 1 else ("bottom", "right", "top", "left")
    for s in f["traction_sides"]:
        if s not in sides:
            fail(("forcing", "traction_sides"), f"unknown side {s!r}; expected {', '.join(sides)}")
    for key in ("body_force",):
        if f[key] is not None and len(f[key]) != dim:
            fail(("forcing", key), f"needs {dim} components")
    if cfg["initial"]["v0"] is not None and len(cfg["initial"]["v0"]) != dim:
        fail(("initial", "v0"), f"needs {dim} components")
    c = cfg["control"]
    if len(c["basis_sides"]) != len(c["basis_directions"]):
        fail(("control", "basis_directions"), "needs one direction per basis side")
    for s in c["basis_sides"]:
        if s not in sides:
            fail(("control", "basis_sides"), f"unknown side {s!r}")
    if any(len(d) != dim for d in c["basis_directions"]):
        fail(("control", "basis_directions"), f"every direction needs {dim} components")
    if c["min_step"] > c["initial_step"]:
        fail(("control", "min_step"), "must not exceed initial_step")
    if max(c["lambda_Q"], c["lambda_Omega"], c["lambda_Sigma"]) == 0:
        fail(("control", "lambda_Omega"), "cost weights must not all vanish")
    if c["anchor"] is not None and len(c["anchor"]) != len(c["basis_sides"]) * c["n_time"]:
        fail(("control", "anchor"), f"needs {len(c['basis_sides']) * c['n_time']} coefficients")
    v = cfg["verify"]
    if v["tau_reference"] >= min(v["tau_list"]):
        fail(("verify", "tau_reference"), "must be finer than every entry of tau_list")
    for tt in v["tau_list"] + [v["tau_reference"]]:
        m = t["T"] / tt
        if abs(m - round(m)) > 1e-9 * m:
            fail(("verify", "tau_list"), f"T / {tt} is not an integer")
    m = cfg["material"]
    if m["coefficient"] == "custom" and not {"breaks", "pieces"} <= set(m["coefficient_params"]):
        fail(("material", "coefficient_params"), "custom coefficient needs breaks and pieces")
    if m["potential"] == "custom" and not {"breaks", "pieces"} <= set(m["potential_params"]):
        fail(("material", "potential_params"), "custom potential needs breaks and pieces")


def load_config(path: str | Path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(p))
    return parse_config(text, str(p))


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=None)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()


def provenance(cfg: dict) -> str:
    return f"viscodamage {__version__} config-sha256={config_hash(cfg)}"


# --------------------------------------------------------------------------
# builders


class RunConfig:
    """Validated configuration with builders for the numerical objects."""

    def __init__(self, cfg: dict, source: str = "<config>"):
        self.cfg, self.source = cfg, source

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        return cls(load_config(path), str(path))

    def __getitem__(self, key):
        return self.cfg[key]

    @property
    def provenance(self) -> str:
        return provenance(self.cfg)

    def _fail(self, path, msg):
        raise ConfigError(f"{'.'.join(path)}: {msg}", None, self.source)

    def material(self) -> MaterialLaw:
        m, dim = self.cfg["material"], self.cfg["geometry"]["dim"]
        try:
            c_tilde = coefficient_preset(m["coefficient"], **m["coefficient_params"])
            c1, c2 = extend_coefficient(c_tilde, m["delta"])
            f = potential_preset(m["potential"], **m["potential_params"])
            C = StiffnessTensor.isotropic(m["lame_lambda"], m["lame_mu"], dim)
            return MaterialLaw(c1, c2, C, mu=m["mu"], d=PiecewisePolynomial.constant(m["d"]), f=f, name=m["coefficient"])
        except (ValueError, TypeError, KeyError) as exc:
            self._fail(("material",), str(exc))

    def grid(self):
        g = self.cfg["geometry"]
        return build_grid(g["dim"], g["extents"], g["cells"])

    def problem(self) -> Problem:
        grid = self.grid()
        disc = Discretization(grid, self.material())
        ini, t, f = self.cfg["initial"], self.cfg["time"], self.cfg["forcing"]
        if ini["chi_profile"] == "constant":
            chi0 = np.full(grid.n_nodes, ini["chi_mean"])
        else:
            chi0 = cosine_profile(grid, ini["chi_amplitude"], ini["chi_mean"])
        init = InitialData.at_rest(grid, chi0)
        if ini["v0"] is not None:
            init.v0 = np.tile(np.asarray(ini["v0"], dtype=float), (grid.n_nodes, 1))
        load = None
        if f["traction_amplitude"] != 0.0 and f["traction_sides"]:
            vec = f["traction_amplitude"] * side_traction_load(grid, f["traction_sides"], f["traction_direction"])
            load = ScaledLoad(vec, TimeProfile(f["traction_profile"], t["T"]))
        body = None if f["body_force"] is None else np.tile(np.asarray(f["body_force"], dtype=float), (grid.n_nodes, 1))
        try:
            init.validate(grid)
        except ValueError as exc:
            self._fail(("initial",), str(exc))
        return Problem(disc, init, t["T"], t["tau"], traction=load, body_force=body, newton_tol=t["newton_tol"], penalty_kind=t["penalty"], name="config")

    def control_problem(self, problem: Problem | None = None, workers: int = 1, seed: int | None = None) -> ControlProblem:
        problem = problem or self.problem()
        c = self.cfg["control"]
        basis = ControlBasis(tuple(zip(c["basis_sides"], c["basis_directions"])), c["n_time"], problem.T)
        space = ControlSpace(basis, problem.grid, problem.tau, c["b_min"], c["b_max"], c["norm_cap"])
        grid = problem.grid
        chi_Q = cosine_profile(grid, c["chi_Q_amplitude"], c["chi_Q_mean"])
        chi_T = cosine_profile(grid, c["chi_T_amplitude"], c["chi_T_mean"])
        try:
            cc = ControlConfig(
                lambda_Q=c["lambda_Q"],
                lambda_Omega=c["lambda_Omega"],
                lambda_Sigma=c["lambda_Sigma"],
                chi_Q=chi_Q,
                chi_T=chi_T,
                tracking=c["tracking"],
                beta_schedule=tuple(c["beta_schedule"]),
                method=c["method"],
                initial_step=c["initial_step"],
                min_step=c["min_step"],
                max_evals=c["max_evals"],
                restarts=c["restarts"],
                restart_every_level=c["restart_every_level"],
                seed=self.cfg["seed"] if seed is None else seed,
                workers=workers,
                anchor=None if c["anchor"] is None else np.asarray(c["anchor"], dtype=float),
                proximal_weight=c["proximal_weight"],
                continuation_tol=c["continuation_tol"],
            )
        except ValueError as exc:
            self._fail(("control",), str(exc))
        return ControlProblem(problem, space, cc)
