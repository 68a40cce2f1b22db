"""Strict JSON run configuration shared by all CLI subcommands.

Example::

    {"mu": 1.0, "k": 10, "omega": 10, "a": 1.0,
     "force": {"type": "harmonic", "c": 10.0, "A": 1.0},
     "integrator": {"rtol": 1e-10}}

Unknown keys, duplicate keys and non-finite literals are rejected.  Errors
name the offending field (``force.c``) or the line and column of a syntax
error.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema

from .integrate import IntegratorConfig
from .model import TWO_PI, ForceModel, Harmonic, Params, Tabulated, Zero, constant_force
from .orbits import NewtonOptions, StabilityThresholds

SCHEMA_VERSION = 1

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_PAIR = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


FORCE_SCHEMAS = {
    "zero": _obj({"type": {"const": "zero"}}, ["type"]),
    "harmonic": _obj({"type": {"const": "harmonic"}, "c": _NUM, "A": _NUM}, ["type", "c", "A"]),
    "tabulated": _obj({"type": {"const": "tabulated"},
                       "t": {"type": "array", "items": _NUM, "minItems": 3},
                       "values": {"type": "array", "items": _NUM, "minItems": 3},
                       "period": _POS}, ["type", "t", "values"]),
    "constant": _obj({"type": {"const": "constant"}, "value": _NUM}, ["type", "value"]),
}

SCHEMA = _obj({
    "schema_version": {"const": SCHEMA_VERSION},
    "mu": {"type": "number", "minimum": 0},
    "k": {"type": "integer", "minimum": 1},
    "omega": _POS,
    "a": {"type": "number", "minimum": 0},
    "T": _POS,
    "relaxed": {"type": "boolean"},
    "force": {"type": "object", "required": ["type"],
              "properties": {"type": {"enum": sorted(FORCE_SCHEMAS)}}},
    "integrator": _obj({"rtol": _POS, "atol": _POS, "max_step": _POS,
                        "max_steps": {"type": "integer", "minimum": 1},
                        "method": {"enum": ["dopri5", "rk4"]}, "step": _POS}),
    "newton": _obj({"tol": _POS, "max_iter": {"type": "integer", "minimum": 1},
                    "max_halvings": {"type": "integer", "minimum": 0}}),
    "stability": _obj({"inner": _POS, "outer": _POS, "unit_circle": _POS}),
    "simulate": _obj({"t_end": _POS, "initial": _PAIR, "dt": _POS}),
    "orbit": _obj({"guess": _PAIR, "system": {"enum": ["full", "averaged"]},
                   "seed_from_averaged": {"type": "boolean"}}),
    "section": _obj({"q_range": _PAIR, "p_range": _PAIR,
                     "grid": {"type": "array", "items": {"type": "integer", "minimum": 1},
                              "minItems": 2, "maxItems": 2},
                     "iterations": {"type": "integer", "minimum": 1}}),
    "design": _obj({"amplitude": _NUM, "n_samples": {"type": "integer", "minimum": 3}}),
    "sweep_k": _obj({"k_values": {"type": "array", "items": {"type": "integer", "minimum": 1},
                                  "minItems": 1}}),
}, ["mu", "k", "omega"])


class ConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RunConfig:
    params: Params
    force: ForceModel
    integrator: IntegratorConfig
    newton: NewtonOptions
    stability: StabilityThresholds
    options: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return self.options.get(name, {})


def _no_duplicates(pairs):
    out = {}
    for key, value in pairs:
        if key in out:
            raise ConfigError(f"duplicate key {key!r}")
        out[key] = value
    return out


def _reject_constant(name):
    raise ConfigError(f"non-finite literal {name} is not valid JSON")


def _path(err: jsonschema.ValidationError, prefix=()) -> str:
    parts = [str(p) for p in (*prefix, *err.absolute_path)]
    return ".".join(parts) or "<root>"


def _validate(doc, schema, prefix=()):
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(f"config error at {_path(err, prefix)}: {err.message}")


def _force(spec: dict, T: float) -> ForceModel:
    _validate(spec, FORCE_SCHEMAS[spec["type"]], ("force",))
    kind = spec["type"]
    if kind == "zero":
        return Zero()
    if kind == "harmonic":
        return Harmonic(float(spec["c"]), float(spec["A"]))
    if kind == "constant":
        return constant_force(float(spec["value"]))
    try:
        return Tabulated(spec["t"], spec["values"], period=float(spec.get("period", T)))
    except ValueError as exc:
        raise ConfigError(f"config error at force: {exc}") from None


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration document."""
    try:
        doc = json.loads(text, object_pairs_hook=_no_duplicates, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    _validate(doc, SCHEMA)
    omega = doc["omega"]
    if float(omega).is_integer():
        omega = int(omega)
    try:
        params = Params(mu=float(doc["mu"]), k=int(doc["k"]), omega=omega,
                        a=float(doc.get("a", 1.0)), T=float(doc.get("T", TWO_PI)),
                        relaxed=bool(doc.get("relaxed", False)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config error in parameters: {exc}") from None
    force = _force(doc.get("force", {"type": "zero"}), params.T)
    try:
        integrator = IntegratorConfig(**doc.get("integrator", {}))
        newton = NewtonOptions(**doc.get("newton", {}))
        stability = StabilityThresholds(**doc.get("stability", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config error: {exc}") from None
    options = {key: doc[key] for key in ("simulate", "orbit", "section", "design", "sweep_k")
               if key in doc}
    return RunConfig(params, force, integrator, newton, stability, options, doc)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def describe(cfg: RunConfig) -> dict[str, Any]:
    """Echo of the physical parameters for output headers."""
    p = cfg.params
    out = {"mu": p.mu, "k": p.k, "omega": p.omega, "a": p.a, "T": p.T, "Phi": p.Phi}
    force = cfg.raw.get("force", {"type": "zero"})
    out["force"] = {k: v for k, v in force.items() if k not in ("t", "values")}
    return out


def finite_or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None
