"""Run configuration: one JSON document with model, gains, env and train sections.

Parsing is strict. Unknown keys and wrongly typed values are rejected with
the dotted path of the offending entry. The top-level ``seed`` is the only
source of randomness for every command.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .control import Gains
from .env import EnvConfig
from .learn.ppo import TrainConfig
from .model import ModelParams, Rotor


class ConfigError(ValueError):
    pass


# JSON key -> dataclass field, where they differ
_TRAIN_ALIASES = {"lambda": "lam"}
# the seed lives at the top level; "lam" is spelled "lambda" in JSON
_TRAIN_HIDDEN_FROM_JSON = ("lam", "seed")


@dataclass
class RunConfig:
    model: ModelParams = field(default_factory=ModelParams)
    gains: Gains = field(default_factory=Gains)
    env: EnvConfig = field(default_factory=EnvConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    output_dir: str = "out"
    seed: int = 0


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_value(path, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
    elif isinstance(default, int):
        if not (isinstance(value, int) and not isinstance(value, bool)):
            if _is_number(value) and float(value).is_integer():
                return int(value)
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
    elif isinstance(default, float):
        if not _is_number(value):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    elif isinstance(default, list):
        if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{path}: expected a list of integers, got {value!r}")
    return value


def _section(name, cls, raw, aliases=None, hidden=()):
    """Build dataclass ``cls`` from dict ``raw`` with strict key checking."""
    aliases = aliases or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected an object")
    defaults = cls()
    names = {f.name for f in dataclasses.fields(cls)} - set(hidden)
    names |= set(aliases)
    kwargs = {}
    for key, value in raw.items():
        if key not in names:
            raise ConfigError(f"unknown config key '{name}.{key}'")
        attr = aliases.get(key, key)
        kwargs[attr] = _check_value(f"{name}.{key}", getattr(defaults, attr), value)
    return kwargs


def _vector(path, value, n):
    arr = np.asarray(value, dtype=float) if isinstance(value, list) else None
    if arr is None or arr.shape != (n,) or not all(_is_number(v) for v in value):
        raise ConfigError(f"{path}: expected a list of {n} numbers")
    return arr


def _model(raw):
    if not isinstance(raw, dict):
        raise ConfigError("model: expected an object")
    allowed = {"g", "L", "m", "J", "dt", "beta_limit", "rotors"}
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"unknown config key 'model.{key}'")
    kwargs = {}
    for key in ("g", "L", "m", "dt", "beta_limit"):
        if key in raw:
            if not _is_number(raw[key]):
                raise ConfigError(f"model.{key}: expected a number, got {raw[key]!r}")
            kwargs[key] = float(raw[key])
    if "J" in raw:
        J = raw["J"]
        if not (isinstance(J, list) and len(J) == 3):
            raise ConfigError("model.J: expected a 3x3 list of numbers")
        kwargs["J"] = np.array([_vector(f"model.J[{i}]", row, 3) for i, row in enumerate(J)])
    if "rotors" in raw:
        if not isinstance(raw["rotors"], list):
            raise ConfigError("model.rotors: expected a list")
        rotors = []
        for i, r in enumerate(raw["rotors"]):
            path = f"model.rotors[{i}]"
            if not isinstance(r, dict):
                raise ConfigError(f"{path}: expected an object")
            for key in r:
                if key not in ("position", "axis", "kappa", "sigma", "u_max"):
                    raise ConfigError(f"unknown config key '{path}.{key}'")
            for key in ("position", "axis"):
                if key not in r:
                    raise ConfigError(f"{path}.{key} is required")
            extra = {}
            for key in ("kappa", "u_max"):
                if key in r:
                    if not _is_number(r[key]):
                        raise ConfigError(f"{path}.{key}: expected a number")
                    extra[key] = float(r[key])
            if "sigma" in r:
                if r["sigma"] not in (-1, 1) or isinstance(r["sigma"], bool):
                    raise ConfigError(f"{path}.sigma: expected -1 or 1")
                extra["sigma"] = int(r["sigma"])
            try:
                rotors.append(
                    Rotor(_vector(f"{path}.position", r["position"], 3), _vector(f"{path}.axis", r["axis"], 3), **extra)
                )
            except ValueError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        kwargs["rotors"] = rotors
    try:
        return ModelParams(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc


def resolve(raw):
    """RunConfig from a parsed JSON document (missing entries take defaults)."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key in raw:
        if key not in ("model", "gains", "env", "train", "output_dir", "seed"):
            raise ConfigError(f"unknown config key '{key}'")
    seed = raw.get("seed", 0)
    if not (isinstance(seed, int) and not isinstance(seed, bool)) or seed < 0:
        raise ConfigError(f"seed: expected a non-negative integer, got {seed!r}")
    output_dir = raw.get("output_dir", "out")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir: expected a non-empty string")
    try:
        gains = Gains(**_section("gains", Gains, raw.get("gains", {})))
        env = EnvConfig(**_section("env", EnvConfig, raw.get("env", {})))
        train_kwargs = _section("train", TrainConfig, raw.get("train", {}), _TRAIN_ALIASES, _TRAIN_HIDDEN_FROM_JSON)
        train = TrainConfig(seed=seed, **train_kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(_model(raw.get("model", {})), gains, env, train, output_dir, seed)


def to_dict(cfg):
    """Fully resolved, JSON-serialisable form of ``cfg`` (round-trips through resolve)."""
    m = cfg.model
    model = {
        "g": m.g,
        "L": m.L,
        "m": m.m,
        "J": m.J.tolist(),
        "dt": m.dt,
        "beta_limit": m.beta_limit,
        "rotors": [
            {
                "position": r.position.tolist(),
                "axis": r.axis.tolist(),
                "kappa": r.kappa,
                "sigma": r.sigma,
                "u_max": r.u_max,
            }
            for r in m.rotors
        ],
    }
    train = dataclasses.asdict(cfg.train)
    del train["seed"]
    train["lambda"] = train.pop("lam")
    return {
        "model": model,
        "gains": dataclasses.asdict(cfg.gains),
        "env": dataclasses.asdict(cfg.env),
        "train": train,
        "output_dir": cfg.output_dir,
        "seed": cfg.seed,
    }


def load_file(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def parse_override_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw, overrides):
    """Set dotted ``section.key`` paths (dashes allowed in keys) on a raw config dict."""
    raw = json.loads(json.dumps(raw or {}))
    for path, value in overrides:
        parts = [p.replace("-", "_") for p in path.split(".")]
        node = raw
        for p in parts[:-1]:
            child = node.setdefault(p, {})
            if not isinstance(child, dict):
                raise ConfigError(f"cannot override '{path}': '{p}' is not a section")
            node = child
        node[parts[-1]] = value
    return raw
