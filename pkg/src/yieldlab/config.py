"""Scenario configs: JSON files with preset includes, validated against a closed schema."""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

import jsonschema

from .exceptions import ConfigError, PresetReferenceError

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_int_pos = {"type": "integer", "minimum": 1}
_vec = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 1}]}
_times = {"type": "array", "items": _pos, "minItems": 1}


def _obj(props: dict, required: Iterable[str] = ()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_utility = _obj(
    {
        "family": {"enum": ["cara", "crra", "risk_neutral"]},
        "param": _nonneg,
        "offset": _num,
    },
    ["family"],
)

_payment = {
    "oneOf": [
        _obj({"kind": {"const": "gaussian"}, "mean": _num, "std": _nonneg}, ["kind", "mean", "std"]),
        _obj(
            {"kind": {"const": "truncated_gaussian"}, "loc": _num, "scale": _pos, "lower": _num},
            ["kind", "loc", "scale"],
        ),
        _obj(
            {
                "kind": {"const": "discrete"},
                "values": {"type": "array", "items": _num, "minItems": 1},
                "probs": {"type": "array", "items": _nonneg, "minItems": 1},
            },
            ["kind", "values", "probs"],
        ),
        _obj({"kind": {"const": "degenerate"}, "value": _num}, ["kind", "value"]),
    ]
}
_payments = {"type": "array", "items": _payment, "minItems": 1}

_rate = {
    "oneOf": [
        _num,
        _obj(
            {"breakpoints": {"type": "array", "items": _num}, "values": {"type": "array", "items": _num, "minItems": 1}},
            ["breakpoints", "values"],
        ),
    ]
}

_lp = _obj(
    {
        "owner": {"type": "string"},
        "kind": {"enum": ["constant", "power", "linear", "concentrated"]},
        "level": _num,
        "slope": _num,
        "lo": _pos,
        "hi": _pos,
    },
    ["owner", "kind", "level", "lo", "hi"],
)

SCHEMA: dict = _obj(
    {
        "include": {"type": "array", "items": {"type": "string"}},
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
        "paths": _int_pos,
        "model": _obj(
            {
                "preset": {"type": "string"},
                "mu": _vec,
                "sigma": _vec,
                "kappa": _vec,
                "theta": _vec,
                "corr": {"type": "array", "items": {"type": "array", "items": _num}},
                "multiplicative": {"type": "boolean"},
                "n": _int_pos,
                "rate": _rate,
            },
            ["preset"],
        ),
        "yield": _obj(
            {
                "kind": {"enum": ["constant", "zero", "capped"]},
                "fraction": _vec,
                "level": _num,
                "scale": _pos,
            },
            ["kind"],
        ),
        "pricing": _obj(
            {
                "x0": _vec,
                "maturities": _times,
                "payment_times": _times,
                "steps_per_unit": _int_pos,
                "spots": _times,
                "pde": _obj({"x_max": _pos, "nx": _int_pos, "nt": _int_pos}),
            }
        ),
        "payments": _payments,
        "agents": {
            "type": "array",
            "items": _obj({"role": {"enum": ["lender", "borrower"]}, "notional": _pos, "utility": _utility}, ["role", "notional"]),
        },
        "pool": _obj(
            {
                "lent": _nonneg,
                "borrowed": _nonneg,
                "r0": _num,
                "slope1": _num,
                "slope2": _num,
                "target": _pos,
                "gamma": {"type": "number", "minimum": 1},
            }
        ),
        "hedge": _obj(
            {
                "token_price": _num,
                "gammas": {"type": "array", "items": {"type": "number", "minimum": 1}, "minItems": 1},
            }
        ),
        "amm": _obj(
            {
                "lp_utility": _utility,
                "trader_utility": _utility,
                "x0": _num,
                "y0": _num,
                "delta": _pos,
                "delta_grid": _times,
                "lattice_step": _pos,
            }
        ),
        "lps": {"type": "array", "items": _lp},
        "aggregation": _obj({"reference": _pos, "trade": _pos, "fee_rate": _nonneg, "approx_delta": _pos}),
        "blocks": _obj({"interval": _pos, "count": _int_pos}),
        "fixed_rate": _obj(
            {
                "book_price": _vec,
                "book_depth": _pos,
                "notional": _pos,
                "T1": _nonneg,
                "T2": _pos,
                "scenarios": _int_pos,
            }
        ),
        "staking": _obj(
            {
                "payments": _payments,
                "slash_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "slash_prob": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "paths": _int_pos,
            }
        ),
    },
    ["seed"],
)


def _preset_text(name: str, base: Path | None) -> str:
    if name.endswith(".json") or "/" in name:
        p = Path(name) if base is None else base / name
        return p.read_text(encoding="utf-8")
    return resources.files("yieldlab").joinpath("configs", f"{name}.json").read_text(encoding="utf-8")


def deep_merge(base: dict, over: dict) -> dict:
    """Recursive merge; an object naming a different ``preset`` replaces its base wholesale."""
    out = copy.deepcopy(base)
    for k, v in over.items():
        old = out.get(k)
        if isinstance(v, dict) and isinstance(old, dict) and v.get("preset", old.get("preset")) == old.get("preset"):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve(doc: dict, base: Path | None = None, _stack: tuple[str, ...] = ()) -> dict:
    """Expand ``include`` entries depth-first; later includes and the document itself win."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object", "")
    merged: dict = {}
    for i, name in enumerate(doc.get("include", [])):
        if not isinstance(name, str):
            raise ConfigError("include entries must be strings", f"include.{i}")
        if name in _stack:
            raise PresetReferenceError(f"include cycle through {name!r}", f"include.{i}")
        try:
            text = _preset_text(name, base)
        except (FileNotFoundError, OSError):
            raise PresetReferenceError(f"preset {name!r} not found", f"include.{i}") from None
        try:
            sub = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"preset {name!r} is not valid JSON: {exc}", f"include.{i}") from None
        merged = deep_merge(merged, resolve(sub, base, _stack + (name,)))
    body = {k: v for k, v in doc.items() if k != "include"}
    return deep_merge(merged, body)


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> dict:
    """``a.b.0.c=value``; the value is parsed as JSON when it can be."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not key=value", assignment)
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"bad override key {key!r}", key)
    out = copy.deepcopy(cfg)
    node: Any = out
    for j, part in enumerate(parts[:-1]):
        nxt = parts[j + 1]
        if isinstance(node, list):
            idx = int(part)
            node = node[idx]
            continue
        if part not in node:
            node[part] = [] if nxt.isdigit() else {}
        node = node[part]
    last = parts[-1]
    if isinstance(node, list):
        idx = int(last)
        if idx >= len(node):
            raise ConfigError(f"index {idx} out of range", key)
        node[idx] = _parse_value(raw)
    else:
        node[last] = _parse_value(raw)
    return out


def validate(cfg: dict) -> dict:
    v = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(v.iter_errors(cfg), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        e = jsonschema.exceptions.best_match(errors)
        path = ".".join(str(p) for p in e.absolute_path)
        raise ConfigError(e.message, path)
    _check_preset_names(cfg)
    return cfg


def _check_preset_names(cfg: dict) -> None:
    from .stochastic import PRESETS

    preset = cfg.get("model", {}).get("preset")
    if preset is not None and preset not in PRESETS:
        raise PresetReferenceError(f"unknown model preset {preset!r}", "model.preset")


def load(path: str | Path | None, overrides: Iterable[str] = (), base_doc: dict | None = None) -> dict:
    if path is None:
        doc = base_doc if base_doc is not None else {"include": ["reference"]}
        base = None
    else:
        p = Path(path)
        try:
            doc = json.loads(p.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {str(p)!r} not found", "") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}", "") from None
        base = p.parent
    cfg = resolve(doc, base)
    for o in overrides:
        cfg = apply_override(cfg, o)
    return validate(cfg)
