"""Experiment configuration: JSON files validated against a published schema."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from mcae.linear_analysis import APPROACHES

_num = {"type": "number"}
_nonneg = {"type": "number", "minimum": 0}
_pos_int = {"type": "integer", "minimum": 1}
_count = {"type": "integer", "minimum": 0}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMA = _obj({
    "name": {"type": "string"},
    "problem": {"enum": ["heat", "ns", "linear"]},
    "approach": {"enum": list(APPROACHES)},
    "n_train": {"enum": [1, 100]},
    "n_batch": _pos_int,
    "n_test": _pos_int,
    "n_val": _pos_int,
    "sample_index": _count,
    "lambda": _nonneg,
    "delta": _nonneg,
    "epsilon": _nonneg,
    "network": _obj({"hidden": _pos_int, "init_std": {"type": "number", "exclusiveMinimum": 0}}),
    "training": _obj({
        "epochs": _count,
        "decoder_epochs": _count,
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "plateau": {"type": ["integer", "null"], "minimum": 1},
        "eval_every": _pos_int,
        "phases": {"type": "array", "items": {"enum": ["encoder", "decoder"]}, "minItems": 1, "uniqueItems": True},
    }),
    "seeds": _obj({"init": {"type": "integer"}, "train": {"type": "integer"}, "test": {"type": "integer"},
                   "obs": {"type": "integer"}, "randomize": {"type": "integer"}}),
    "heat": _obj({"nx": {"type": "integer", "minimum": 2}, "ny": {"type": "integer", "minimum": 2},
                  "source": _num, "q": _pos_int, "length": {"type": "number", "exclusiveMinimum": 0},
                  "variance": {"type": "number", "exclusiveMinimum": 0}, "n_obs": _pos_int}),
    "ns": _obj({"N": {"type": "integer", "minimum": 4}, "nu": _nonneg,
                "dt": {"type": "number", "exclusiveMinimum": 0}, "steps": _count, "q": _pos_int,
                "n_obs": _pos_int, "snapshots": _pos_int, "store_all": _count}),
    "linear": _obj({"n": _pos_int, "m": _pos_int, "p": _pos_int, "problems": _pos_int}),
    "tik": _obj({"max_iters": _count, "grad_tol": {"type": "number", "exclusiveMinimum": 0},
                 "memory": _pos_int, "n_samples": _pos_int}),
    "sweep": _obj({"epsilons": {"type": "array", "items": _nonneg, "minItems": 1},
                   "samples": _pos_int, "lambdas": {"type": "array", "items": _nonneg, "minItems": 1}}),
    "timing": _obj({"repeats": _pos_int}),
    "output": {"type": "string"},
}, required=["problem", "approach"])

DEFAULTS = {
    "name": "experiment",
    "n_train": 1,
    "n_batch": 100,
    "n_test": 500,
    "n_val": 100,
    "sample_index": 0,
    "lambda": 100.0,
    "delta": 0.005,
    "epsilon": 0.1,
    "network": {"hidden": 512, "init_std": 0.02},
    "training": {"epochs": 20000, "decoder_epochs": None, "lr": 1e-3, "plateau": None,
                 "eval_every": 500, "phases": ["encoder", "decoder"]},
    "seeds": {"init": 100, "train": 18, "test": 28, "obs": 18, "randomize": 100},
    "heat": {"nx": 16, "ny": 16, "source": 20.0, "q": 15, "length": 0.5, "variance": 1.0, "n_obs": 10},
    "ns": {"N": 16, "nu": 1e-3, "dt": 0.1, "steps": 100, "q": 24, "n_obs": 20, "snapshots": 16, "store_all": 256},
    "linear": {"n": 6, "m": 4, "p": 8, "problems": 20},
    "tik": {"max_iters": 500, "grad_tol": 1e-8, "memory": 10, "n_samples": None},
    "sweep": {"epsilons": [0.0, 0.1, 0.4], "samples": 5, "lambdas": [1.0, 10.0, 100.0, 1000.0]},
    "timing": {"repeats": 5},
    "output": "runs/experiment",
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def validate(raw: dict) -> dict:
    """Schema-check ``raw`` (unknown keys rejected) and fill defaults."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    cfg = _merge(DEFAULTS, raw)
    if cfg["training"]["decoder_epochs"] is None:
        cfg["training"]["decoder_epochs"] = cfg["training"]["epochs"]
    if cfg["n_train"] == 100:
        cfg["n_batch"] = 100
    return cfg


def load_config(path, overrides: dict | None = None) -> dict:
    with open(path) as fh:
        raw = json.load(fh)
    if overrides:
        raw = _merge(raw, overrides)
    return validate(raw)


def dump_schema(path) -> None:
    Path(path).write_text(json.dumps(SCHEMA, indent=2) + "\n")
