"""Scenario files: sectioned key = value text read with configparser.

Vectors are comma-separated numbers.  Every key is checked against a fixed
schema so a typo is reported with its line instead of being ignored.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import fields
from pathlib import Path
from typing import Optional

import numpy as np

from .mpc import ConfigurationError
from .plant import SegwayParams
from .sim import ScenarioConfig

SECTIONS = ("plant", "fxt", "mpc", "sim")

# (section, key) -> (ScenarioConfig field, kind)
_SCHEMA: dict[tuple[str, str], tuple[str, str]] = {
    ("plant", "type"): ("plant", "str"),
    ("plant", "dissipation"): ("plant_params", "bool"),
    ("plant", "dim"): ("plant_params", "int"),
    ("fxt", "mu"): ("mu", "float"),
    ("fxt", "k"): ("k", "float"),
    ("fxt", "r_check"): ("r_check", "float"),
    ("fxt", "c"): ("c", "float"),
    ("fxt", "d"): ("d", "float"),
    ("fxt", "slack_coef"): ("slack_coef", "optfloat"),
    ("fxt", "esclf_lambda"): ("esclf_lambda", "float"),
    ("fxt", "esclf_slack_weight"): ("esclf_slack_weight", "float"),
    ("mpc", "N"): ("N", "int"),
    ("mpc", "Q"): ("Q", "optvec"),
    ("mpc", "R"): ("R", "optvec"),
    ("mpc", "Qf"): ("Qf", "optvec"),
    ("mpc", "XT_lo"): ("XT_lo", "vec"),
    ("mpc", "XT_hi"): ("XT_hi", "vec"),
    ("mpc", "Um_lo"): ("Um_lo", "vec"),
    ("mpc", "Um_hi"): ("Um_hi", "vec"),
    ("mpc", "XF_lo"): ("XF_lo", "optvec"),
    ("mpc", "XF_hi"): ("XF_hi", "optvec"),
    ("mpc", "rate_ball"): ("rate_ball", "str"),
    ("mpc", "coupling_ball"): ("coupling_ball", "str"),
    ("sim", "name"): ("name", "str"),
    ("sim", "T"): ("T", "float"),
    ("sim", "n_intervals"): ("n_intervals", "int"),
    ("sim", "lowlevel_rate"): ("lowlevel_rate", "float"),
    ("sim", "integrator_substeps"): ("integrator_substeps", "int"),
    ("sim", "x0"): ("x0", "vec"),
    ("sim", "U_lo"): ("U_lo", "vec"),
    ("sim", "U_hi"): ("U_hi", "vec"),
    ("sim", "baseline"): ("baseline", "str"),
    ("sim", "seed"): ("seed", "int"),
    ("sim", "safety_tol"): ("safety_tol", "float"),
    ("sim", "boundary_samples"): ("boundary_samples", "int"),
    ("sim", "check_boundary"): ("check_boundary", "bool"),
}
for _f in fields(SegwayParams):
    _SCHEMA[("plant", _f.name)] = ("plant_params", "float")

_REQUIRED = [("sim", "x0"), ("sim", "U_lo"), ("sim", "U_hi"), ("mpc", "XT_lo"), ("mpc", "XT_hi"),
             ("mpc", "Um_lo"), ("mpc", "Um_hi")]

_BOOLS = {"true": True, "yes": True, "on": True, "1": True,
          "false": False, "no": False, "off": False, "0": False}


class ConfigError(ConfigurationError):
    """Malformed scenario file; carries the offending key and line when known."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None,
                 path: Optional[str] = None):
        where = []
        if path:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if key:
            where.append(f"key '{key}'")
        super().__init__(f"{': '.join([', '.join(where), message]) if where else message}")
        self.key, self.line, self.path = key, line, path


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    lines: dict[tuple[str, str], int] = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        m = re.fullmatch(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            lines[(section, "")] = no
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", s)
        if m and section is not None and not raw[0].isspace():
            lines.setdefault((section, m.group(1).strip()), no)
    return lines


def _convert(kind: str, raw: str):
    raw = raw.strip()
    if kind == "str":
        return raw
    if kind == "bool":
        if raw.lower() not in _BOOLS:
            raise ValueError(f"expected a boolean, got {raw!r}")
        return _BOOLS[raw.lower()]
    if kind == "int":
        return int(raw)
    if kind in ("optfloat", "optvec") and raw.lower() in ("", "none"):
        return None
    if kind in ("float", "optfloat"):
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError(f"expected a finite number, got {raw!r}")
        return v
    parts = [p for p in re.split(r"[,\s]+", raw) if p]
    if not parts:
        raise ValueError("expected at least one number")
    v = np.array([float(p) for p in parts])
    if not np.all(np.isfinite(v)):
        raise ValueError(f"expected finite numbers, got {raw!r}")
    return v


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str        # keys are case sensitive (N, Q, XT_lo)
    return cp


def parse_overrides(overrides) -> list[tuple[str, str, str]]:
    """Split 'section.key=value' strings; unknown keys are rejected."""
    out = []
    for item in overrides or ():
        lhs, sep, value = item.partition("=")
        section, dot, key = lhs.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        if (section, key) not in _SCHEMA:
            raise ConfigError(f"override refers to unknown key {section}.{key}", key=f"{section}.{key}")
        out.append((section, key, value.strip()))
    return out


def parse_config(text: str, overrides=None, path: Optional[str] = None) -> ScenarioConfig:
    cp = _parser()
    try:
        cp.read_string(text, source=str(path or "<config>"))
    except configparser.DuplicateOptionError as err:
        raise ConfigError("duplicate key", key=err.option, line=err.lineno, path=path) from err
    except configparser.DuplicateSectionError as err:
        raise ConfigError(f"duplicate section [{err.section}]", line=err.lineno, path=path) from err
    except configparser.MissingSectionHeaderError as err:
        raise ConfigError("text before the first [section] header", line=err.lineno, path=path) from err
    except configparser.ParsingError as err:
        line = err.errors[0][0] if err.errors else None
        raise ConfigError("unparseable line", line=line, path=path) from err
    lines = _key_lines(text)
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]; expected one of {SECTIONS}",
                              line=lines.get((section, "")), path=path)
    for section, key, value in parse_overrides(overrides):
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, value)

    kwargs: dict = {}
    plant_params: dict = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            line = lines.get((section, key))
            if (section, key) not in _SCHEMA:
                raise ConfigError(f"unknown key in [{section}]", key=key, line=line, path=path)
            target, kind = _SCHEMA[(section, key)]
            try:
                value = _convert(kind, raw)
            except ValueError as err:
                raise ConfigError(str(err), key=f"{section}.{key}", line=line, path=path) from err
            if target == "plant_params":
                plant_params[key] = value
            else:
                kwargs[target] = value
    for section, key in _REQUIRED:
        if not cp.has_option(section, key):
            raise ConfigError("required key missing", key=f"{section}.{key}",
                              line=lines.get((section, "")), path=path)
    kwargs["plant_params"] = plant_params
    cfg = ScenarioConfig(**kwargs)
    try:
        cfg.validate()
    except ConfigurationError as err:
        raise ConfigError(str(err), path=path) from err
    return cfg


def load_config(path, overrides=None) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err.strerror}", path=str(path)) from err
    return parse_config(text, overrides, path=str(path))


def _format(kind: str, value) -> str:
    if value is None:
        return "none"
    if kind == "bool":
        return "true" if value else "false"
    if kind in ("float", "optfloat"):
        return repr(float(value))
    if kind in ("vec", "optvec"):
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 2 and np.allclose(arr, np.diag(np.diag(arr)), rtol=0, atol=0):
            arr = np.diag(arr)
        return ", ".join(repr(float(v)) for v in arr.ravel())
    return str(value)


def serialize_config(cfg: ScenarioConfig) -> str:
    """Canonical text for cfg; parse_config(serialize_config(cfg)) reproduces it."""
    out = []
    for section in SECTIONS:
        out.append(f"[{section}]")
        for (sec, key), (target, kind) in _SCHEMA.items():
            if sec != section:
                continue
            if target == "plant_params":
                if key not in cfg.plant_params:
                    continue
                value = cfg.plant_params[key]
            else:
                value = getattr(cfg, target)
            out.append(f"{key} = {_format(kind, value)}")
        out.append("")
    return "\n".join(out)
