"""INI experiment configuration.

Two sections::

    [experiment]
    kind = welfare-grid
    output_dir = out
    emit_svg = true

    [parameters]
    c_points = 60

Every parameter has a typed default, so a config only lists what it
changes.  Unknown kinds or keys are rejected.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Tuple

import numpy as np

__all__ = ["ConfigError", "ExperimentConfig", "SCHEMAS", "KINDS", "parse_config", "load_config",
           "serialize_config", "default_config"]


class ConfigError(ValueError):
    pass


def _floats(text: str) -> Tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(x) for x in text.split(","))


def _matrix(text: str) -> Tuple[Tuple[float, ...], ...]:
    rows = [r for r in text.split(";") if r.strip()]
    out = tuple(_floats(r) for r in rows)
    if out and len({len(r) for r in out}) != 1:
        raise ValueError("matrix rows must have equal length")
    return out


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options):
    def parse(text: str) -> str:
        val = text.strip()
        if val not in options:
            raise ValueError(f"expected one of {options}, got {val!r}")
        return val
    parse.options = options
    return parse


def _num(x: float) -> str:
    return format(float(x), ".17g")


def _dump(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return _num(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(", ".join(_num(x) for x in row) for row in value)
        return ", ".join(_num(x) for x in value)
    return str(value)


Parser = Callable[[str], Any]
FLOAT, INT, BOOL, FLOATS, MATRIX = float, int, _bool, _floats, _matrix

SCHEMAS: Dict[str, Dict[str, Tuple[Parser, Any]]] = {
    "price-eq": {
        "loadings": (MATRIX, ((1.0,), (1.0,))),
        "weights": (FLOATS, (1.0,)),
        "baseline": (FLOAT, 1.0),
        "b": (FLOATS, (1.0,)),
        "phi": (FLOAT, -1.0),
        "noise": (FLOATS, ()),
    },
    "design-monopoly": {
        "b": (FLOATS, (1.0, 0.8, 0.6, 0.4)),
        "gamma": (FLOATS, (1.0, 2.0, 0.5, 1.5)),
        "c": (FLOAT, 0.1),
        "phi": (FLOAT, -1.0),
    },
    "design-competition": {
        "b": (FLOATS, (1.0, 0.8, 0.6, 0.4)),
        "gamma": (FLOATS, (1.0, 2.0, 0.5, 1.5)),
        "c": (FLOAT, 0.1),
        "phi": (FLOAT, -1.0),
        "max_firms": (INT, 6),
        "owners": (FLOATS, ()),
    },
    "br-sim": {
        "n_firms": (INT, 6),
        "n_attrs": (INT, 4),
        "b": (FLOATS, (1.0, 0.8, 0.6, 0.4)),
        "gamma": (FLOATS, (1.0, 2.0, 0.5, 1.5)),
        "phi": (FLOAT, -1.0),
        "cost": (FLOATS, (0.1,)),
        "cost_matrix": (MATRIX, ()),
        "n_seeds": (INT, 4),
        "fd_step": (FLOAT, 1e-5),
        "ascent_rate": (FLOAT, 1e-2),
        "ascent_steps_per_firm": (INT, 5),
        "max_rounds": (INT, 500),
        "design_tol": (FLOAT, 1e-7),
        "init_scale": (FLOAT, 0.1),
        "record_every": (INT, 1),
    },
    "welfare-grid": {
        "grid": (_choice("both", "c-phi", "b-gamma"), "both"),
        "taste": (FLOAT, 1.0),
        "n_goods": (INT, 3),
        "c_min": (FLOAT, 0.02),
        "c_max": (FLOAT, 0.6),
        "c_points": (INT, 60),
        "phi_min": (FLOAT, -2.0),
        "phi_max": (FLOAT, -0.25),
        "phi_points": (INT, 60),
        "b_min": (FLOAT, 0.1),
        "b_max": (FLOAT, 4.0),
        "b_points": (INT, 60),
        "gamma_min": (FLOAT, 0.1),
        "gamma_max": (FLOAT, 4.0),
        "gamma_points": (INT, 60),
        "c_fixed": (FLOAT, 0.5),
        "phi_fixed": (FLOAT, -1.0),
        "competition": (_choice("foc", "nash"), "foc"),
    },
    "rho-grid": {
        "regimes": (_choice("both", "monopoly", "duopoly"), "both"),
        "b_ratio_min": (FLOAT, 0.25),
        "b_ratio_max": (FLOAT, 4.0),
        "b_ratio_points": (INT, 41),
        "gamma_ratio_min": (FLOAT, 1.0 / 16.0),
        "gamma_ratio_max": (FLOAT, 16.0),
        "gamma_ratio_points": (INT, 41),
        "phi": (FLOAT, -1.0),
        "weight": (FLOAT, 0.5),
        "model": (_choice("aggregate", "combined"), "aggregate"),
    },
    "rotation-demo": {
        "n_goods": (INT, 8),
        "gamma": (FLOATS, (3.0, 1.0, 0.5, 0.2)),
        "trials": (INT, 20),
        "noise": (FLOAT, 0.0),
    },
}

KINDS = tuple(SCHEMAS)
EXPERIMENT_KEYS = {"kind", "output_dir", "emit_svg"}


@dataclass
class ExperimentConfig:
    kind: str
    parameters: Dict[str, Any] = field(default_factory=dict)
    output_dir: str = "out"
    emit_svg: bool = False

    def __post_init__(self):
        if self.kind not in SCHEMAS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; choose from {KINDS}")
        schema = SCHEMAS[self.kind]
        unknown = set(self.parameters) - set(schema)
        if unknown:
            raise ConfigError(f"unknown parameter(s) for {self.kind}: {sorted(unknown)}")
        full = {k: default for k, (_, default) in schema.items()}
        full.update(self.parameters)
        self.parameters = full

    def __getitem__(self, key):
        return self.parameters[key]


def default_config(kind: str) -> ExperimentConfig:
    return ExperimentConfig(kind)


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    extra = set(cp.sections()) - {"experiment", "parameters"}
    if extra:
        raise ConfigError(f"unknown section(s): {sorted(extra)}")
    if not cp.has_section("experiment") or "kind" not in cp["experiment"]:
        raise ConfigError("config needs [experiment] with a kind")
    exp = cp["experiment"]
    unknown = set(exp) - EXPERIMENT_KEYS
    if unknown:
        raise ConfigError(f"unknown [experiment] key(s): {sorted(unknown)}")
    kind = exp["kind"].strip()
    if kind not in SCHEMAS:
        raise ConfigError(f"unknown experiment kind {kind!r}; choose from {KINDS}")
    schema = SCHEMAS[kind]
    params = {}
    if cp.has_section("parameters"):
        for key, raw in cp["parameters"].items():
            if key not in schema:
                raise ConfigError(f"unknown parameter {key!r} for {kind}")
            try:
                params[key] = schema[key][0](raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from exc
    try:
        emit = _bool(exp.get("emit_svg", "false"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(kind, params, exp.get("output_dir", "out").strip(), emit)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def serialize_config(cfg: ExperimentConfig) -> str:
    """INI text listing every parameter, defaults included."""
    buf = io.StringIO()
    buf.write("[experiment]\n")
    buf.write(f"kind = {cfg.kind}\n")
    buf.write(f"output_dir = {cfg.output_dir}\n")
    buf.write(f"emit_svg = {_dump(cfg.emit_svg)}\n\n[parameters]\n")
    for key in SCHEMAS[cfg.kind]:
        buf.write(f"{key} = {_dump(cfg.parameters[key])}\n")
    return buf.getvalue()
