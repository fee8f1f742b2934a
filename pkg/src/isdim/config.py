"""Experiment configuration: TOML parsing, validation, and defaults.

A config has three tables:

    [model]   kind = "cascade" | "dense-ip" | "filter" | "gaussian-pair" | "potential"
    [grid]    parameter lists for sweeps
    [run]     seed (required), n_particles, replications, output, format, ...

Unknown keys are errors. Every omitted field is filled with its documented
default, and the normalized result is what gets echoed into output files.
"""

from __future__ import annotations

import copy
import re
import sys
from dataclasses import dataclass
from typing import Any, Callable

from isdim.errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

COMMANDS = (
    "diagnose",
    "sweep-cascade",
    "verify-bounds",
    "filter-compare",
    "sweep-filter",
    "deconvolve-demo",
    "singular-limit",
    "product-collapse",
)

MODEL_FOR_COMMAND = {
    "diagnose": ("cascade", "dense-ip", "filter", "gaussian-pair"),
    "sweep-cascade": ("cascade",),
    "verify-bounds": ("gaussian-pair",),
    "filter-compare": ("filter",),
    "sweep-filter": ("filter",),
    "deconvolve-demo": ("cascade",),
    "singular-limit": ("potential",),
    "product-collapse": ("gaussian-pair",),
}

_REQUIRED = object()


def _num(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number, got {v!r}", field=path)
    return float(v)


def _int(v, path):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"expected an integer, got {v!r}", field=path)
    return v


def _pos(v, path):
    v = _num(v, path)
    if not v > 0:
        raise ConfigError(f"must be positive, got {v}", field=path)
    return v


def _cov(v, path):
    v = _num(v, path)
    if not v > 0:
        raise ConfigError("covariance scalar must be positive", field=path)
    return v


def _nonneg(v, path):
    v = _num(v, path)
    if v < 0:
        raise ConfigError(f"must be nonnegative, got {v}", field=path)
    return v


def _posint(v, path):
    v = _int(v, path)
    if v < 1:
        raise ConfigError(f"must be a positive integer, got {v}", field=path)
    return v


def _seed(v, path):
    v = _int(v, path)
    if not 0 <= v < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer", field=path)
    return v


def _vector(v, path):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return [float(v)]
    if not isinstance(v, list) or not v:
        raise ConfigError("expected a number or a nonempty list of numbers", field=path)
    return [_num(x, f"{path}[{i}]") for i, x in enumerate(v)]


def _number_or_vector(v, path):
    if isinstance(v, list):
        return _vector(v, path)
    return _num(v, path)


def _matrix(v, path):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return [[float(v)]]
    if not isinstance(v, list) or not v or not all(isinstance(r, list) for r in v):
        raise ConfigError("expected a matrix (list of rows)", field=path)
    rows = [_vector(r, f"{path}[{i}]") for i, r in enumerate(v)]
    if len({len(r) for r in rows}) != 1:
        raise ConfigError("matrix rows have different lengths", field=path)
    return rows


def _list_of(item):
    def check(v, path):
        vals = v if isinstance(v, list) else [v]
        if not vals:
            raise ConfigError("expected a nonempty list", field=path)
        return [item(x, f"{path}[{i}]") for i, x in enumerate(vals)]

    return check


def _choice(*options):
    def check(v, path):
        if v not in options:
            raise ConfigError(f"must be one of {', '.join(map(repr, options))}, got {v!r}", field=path)
        return v

    return check


def _bool(v, path):
    if not isinstance(v, bool):
        raise ConfigError(f"expected true or false, got {v!r}", field=path)
    return v


def _string(v, path):
    if not isinstance(v, str) or not v:
        raise ConfigError("expected a nonempty string", field=path)
    return v


def _q_value(v, path):
    if v == "r":
        return v
    return _list_of(_pos)(v, path) if isinstance(v, list) else _pos(v, path)


Field = tuple[Callable[[Any, str], Any], Any]

MODEL_SCHEMAS: dict[str, dict[str, Field]] = {
    "cascade": {
        "beta": (_nonneg, None),
        "t": (_nonneg, None),
        "s": (_nonneg, None),
        "gamma": (_pos, 1.0),
        "d": (_posint, 10),
        "truth": (_number_or_vector, 0.0),
    },
    "dense-ip": {
        "K": (_matrix, _REQUIRED),
        "Sigma": (_matrix, _REQUIRED),
        "Gamma": (_matrix, _REQUIRED),
        "y": (_vector, None),
    },
    "filter": {
        "form": (_choice("scalar", "dense"), "scalar"),
        "m": (_num, 1.0),
        "h": (_num, 1.0),
        "p": (_cov, 1.0),
        "q": (_cov, 1.0),
        "r": (_cov, 1.0),
        "d": (_posint, 1),
        "M": (_matrix, None),
        "H": (_matrix, None),
        "P": (_matrix, None),
        "Q": (_matrix, None),
        "R": (_matrix, None),
        "y": (_vector, None),
    },
    "gaussian-pair": {
        "target_mean": (_vector, _REQUIRED),
        "target_var": (_vector, [1.0]),
        "proposal_mean": (_vector, [0.0]),
        "proposal_var": (_vector, [1.0]),
    },
    "potential": {
        "shape": (_choice("quadratic"), "quadratic"),
        "curvature": (_pos, 1.0),
        "u_star": (_num, 0.0),
        "proposal_mean": (_num, 0.0),
        "proposal_var": (_pos, 1.0),
    },
}

GRID_SCHEMAS: dict[str, dict[str, Field]] = {
    "diagnose": {},
    "sweep-cascade": {
        "regime": (
            _choice("small_noise_fixed_d", "small_noise_infinite_d", "large_d", "joint", "regularity"),
            _REQUIRED,
        ),
        "gamma": (_list_of(_pos), None),
        "d": (_list_of(_posint), None),
        "beta": (_list_of(_nonneg), None),
        "alpha": (_pos, None),
    },
    "verify-bounds": {
        "n": (_list_of(_posint), [100]),
        "phi": (_list_of(_choice("tanh", "sin", "clip", "sign")), ["tanh", "sin", "clip", "sign"]),
    },
    "filter-compare": {},
    "sweep-filter": {
        "init": (_choice("stationary", "fixed_p"), "stationary"),
        "r": (_list_of(_pos), None),
        "q": (_q_value, None),
        "p": (_pos, None),
        "d": (_list_of(_posint), None),
    },
    "deconvolve-demo": {"d": (_list_of(_posint), None)},
    "singular-limit": {"epsilon": (_list_of(_pos), [1e-1, 1e-2, 1e-3, 1e-4])},
    "product-collapse": {"d": (_list_of(_posint), [1, 2, 3, 5, 10]), "mc_max_d": (_posint, 3)},
}

RUN_SCHEMA: dict[str, Field] = {
    "seed": (_seed, _REQUIRED),
    "n_particles": (_posint, 100_000),
    "replications": (_posint, 10_000),
    "data_seeds": (_posint, None),
    "d_max": (_posint, 16_384),
    "output": (_string, "-"),
    "format": (_choice("csv", "json"), "csv"),
    "timestamp": (_bool, True),
}


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    model: dict
    grid: dict
    run: dict

    def normalized(self) -> dict:
        return {"command": self.command, "model": self.model, "grid": self.grid, "run": self.run}


def _line_of(text: str, section: str, key: str | None) -> int | None:
    if not text:
        return None
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        header = re.match(r"\s*\[([^\]]+)\]", line)
        if header:
            current = header.group(1).strip()
            if key is None and current == section:
                return i
            continue
        if key is not None and current == section and re.match(rf"\s*{re.escape(key)}\s*=", line):
            return i
    return None


def _check_table(raw: dict, schema: dict[str, Field], section: str, text: str) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"[{section}] must be a table", field=section)
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        key = unknown[0]
        raise ConfigError(f"unknown key '{key}'", field=f"{section}.{key}", line=_line_of(text, section, key))
    out = {}
    for key, (check, default) in schema.items():
        path = f"{section}.{key}"
        if key in raw:
            try:
                out[key] = check(raw[key], path)
            except ConfigError as exc:
                raise ConfigError(exc.message, field=path, line=_line_of(text, section, key)) from None
        elif default is _REQUIRED:
            raise ConfigError("required field is missing", field=path, line=_line_of(text, section, None))
        else:
            out[key] = copy.deepcopy(default)
    return out


def _check_model_extras(kind: str, model: dict, text: str) -> None:
    if kind == "cascade":
        has_beta = model["beta"] is not None
        has_ts = model["t"] is not None or model["s"] is not None
        if has_beta and has_ts:
            raise ConfigError("give either beta or (t, s), not both", field="model.beta", line=_line_of(text, "model", "beta"))
        if not has_beta and not has_ts:
            raise ConfigError("required field is missing (beta, or t and s)", field="model.beta")
        if has_ts:
            model["t"] = model["t"] or 0.0
            model["s"] = model["s"] or 0.0
            model["beta"] = 2 * model["t"] + 2 * model["s"]
        if isinstance(model["truth"], list) and len(model["truth"]) != model["d"]:
            raise ConfigError(f"truth has {len(model['truth'])} entries, expected d={model['d']}", field="model.truth")
    elif kind == "filter":
        if model["form"] == "dense":
            missing = [k for k in "MHPQR" if model[k] is None]
            if missing:
                raise ConfigError("required field is missing for dense form", field=f"model.{missing[0]}")
        else:
            extra = [k for k in "MHPQR" if model[k] is not None]
            if extra:
                raise ConfigError("matrix fields need form = \"dense\"", field=f"model.{extra[0]}", line=_line_of(text, "model", extra[0]))
    elif kind == "gaussian-pair":
        dims = {len(model[k]) for k in ("target_mean", "target_var", "proposal_mean", "proposal_var")}
        dims.discard(1)
        if len(dims) > 1:
            raise ConfigError("gaussian-pair vectors have inconsistent lengths", field="model.target_mean")
        for k in ("target_var", "proposal_var"):
            if any(v <= 0 for v in model[k]):
                raise ConfigError("covariance scalar must be positive", field=f"model.{k}", line=_line_of(text, "model", k))


def _parse_override(item: str) -> tuple[list[str], Any]:
    if "=" not in item:
        raise ConfigError(f"--set expects section.key=value, got {item!r}")
    key, value = item.split("=", 1)
    path = key.strip().split(".")
    if len(path) != 2 or not all(path):
        raise ConfigError(f"--set key must look like section.key, got {key!r}")
    try:
        parsed = tomllib.loads(f"v = {value}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = value
    return path, parsed


def validate(text: str, command: str, overrides: list[str] = ()) -> ExperimentConfig:
    """Parse and validate config text for ``command``; return the normalized config.

    Raises:
        ConfigError: with a field path (and line number where known).
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"parse error: {exc}", line=line) from None
    for item in overrides:
        (section, key), value = _parse_override(item)
        raw.setdefault(section, {})
        if not isinstance(raw[section], dict):
            raise ConfigError(f"[{section}] must be a table", field=section)
        raw[section][key] = value

    unknown = sorted(set(raw) - {"model", "grid", "run"})
    if unknown:
        raise ConfigError(f"unknown section '{unknown[0]}'", field=unknown[0], line=_line_of(text, unknown[0], None))
    if "model" not in raw:
        raise ConfigError("required section is missing", field="model")
    model_raw = dict(raw["model"])
    kind = model_raw.pop("kind", None)
    if kind is None:
        raise ConfigError("required field is missing", field="model.kind", line=_line_of(text, "model", None))
    if kind not in MODEL_SCHEMAS:
        raise ConfigError(f"unknown model kind {kind!r}", field="model.kind", line=_line_of(text, "model", "kind"))
    if kind not in MODEL_FOR_COMMAND[command]:
        allowed = " or ".join(MODEL_FOR_COMMAND[command])
        raise ConfigError(f"command '{command}' requires a {allowed} model, got {kind!r}", field="model.kind",
                          line=_line_of(text, "model", "kind"))
    model = _check_table(model_raw, MODEL_SCHEMAS[kind], "model", text)
    _check_model_extras(kind, model, text)
    model = {"kind": kind, **model}
    grid = _check_table(raw.get("grid", {}), GRID_SCHEMAS[command], "grid", text)
    run = _check_table(raw.get("run", {}), RUN_SCHEMA, "run", text)
    if command == "deconvolve-demo" and model["t"] is None:
        raise ConfigError("deconvolve-demo needs a cascade given by t and s", field="model.t")
    if command == "sweep-filter" and model["form"] != "scalar":
        raise ConfigError("sweep-filter needs a scalar filter model", field="model.form")
    return ExperimentConfig(command, model, grid, run)
