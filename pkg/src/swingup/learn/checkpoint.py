"""JSON checkpoints: network weights (row-major, stored (in, out)), log_std, config."""
from __future__ import annotations

import json

import jsonschema
import numpy as np

from .mlp import MlpParams
from .policy import GaussianPolicy
from .ppo import AdamState

FORMAT = "swingup-policy/1"

_NET = {
    "type": "object",
    "required": ["layer_sizes", "weights", "biases"],
    "properties": {
        "layer_sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2},
        "weights": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "biases": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
    },
}

SCHEMA = {
    "type": "object",
    "required": ["format", "layer_sizes", "weights", "biases", "log_std", "value", "config", "step"],
    "properties": {
        "format": {"const": FORMAT},
        "layer_sizes": _NET["properties"]["layer_sizes"],
        "weights": _NET["properties"]["weights"],
        "biases": _NET["properties"]["biases"],
        "log_std": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "value": _NET,
        "config": {"type": "object"},
        "step": {"type": "integer", "minimum": 0},
        "update": {"type": "integer", "minimum": 0},
        "optimizer": {"type": ["object", "null"]},
        "rng_state": {"type": ["object", "null"]},
        "rollout": {"type": ["object", "null"]},
    },
}


class CheckpointError(ValueError):
    pass


def _net_to_json(net):
    return {
        "layer_sizes": net.sizes,
        "weights": [W.ravel().tolist() for W in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def _net_from_json(doc):
    sizes = doc["layer_sizes"]
    if len(doc["weights"]) != len(sizes) - 1 or len(doc["biases"]) != len(sizes) - 1:
        raise CheckpointError("layer count does not match layer_sizes")
    weights = []
    for i, flat in enumerate(doc["weights"]):
        if len(flat) != sizes[i] * sizes[i + 1]:
            raise CheckpointError(f"layer {i} weight array has {len(flat)} entries, expected {sizes[i] * sizes[i + 1]}")
        weights.append(np.array(flat, dtype=float).reshape(sizes[i], sizes[i + 1]))
    try:
        return MlpParams(weights, [np.array(b, dtype=float) for b in doc["biases"]])
    except ValueError as exc:
        raise CheckpointError(str(exc)) from exc


def to_document(policy, value_net, config, step, update=0, optimizer=None, rng_state=None, rollout=None):
    doc = {"format": FORMAT, **_net_to_json(policy.mean)}
    doc["log_std"] = policy.log_std.tolist()
    doc["value"] = _net_to_json(value_net)
    doc["config"] = config
    doc["step"] = int(step)
    doc["update"] = int(update)
    doc["optimizer"] = None
    if optimizer is not None:
        doc["optimizer"] = {
            "t": optimizer.t,
            "m": {k: v.ravel().tolist() for k, v in optimizer.m.items()},
            "v": {k: v.ravel().tolist() for k, v in optimizer.v.items()},
        }
    doc["rng_state"] = rng_state
    doc["rollout"] = rollout
    return doc


def from_document(doc):
    """Returns (policy, value_net, doc); raises CheckpointError on schema violations."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise CheckpointError(f"invalid checkpoint: {exc.message}") from exc
    mean = _net_from_json(doc)
    try:
        policy = GaussianPolicy(mean, np.array(doc["log_std"], dtype=float))
    except ValueError as exc:
        raise CheckpointError(str(exc)) from exc
    value_net = _net_from_json(doc["value"])
    if value_net.sizes[0] != mean.sizes[0] or value_net.sizes[-1] != 1:
        raise CheckpointError("value network shape does not match the policy")
    return policy, value_net, doc


def optimizer_from_document(doc, params):
    opt = doc.get("optimizer")
    if opt is None:
        return AdamState.zeros_like(params)
    state = AdamState.zeros_like(params)
    state.t = int(opt["t"])
    for k, p in params.items():
        state.m[k] = np.array(opt["m"][k], dtype=float).reshape(p.shape)
        state.v[k] = np.array(opt["v"][k], dtype=float).reshape(p.shape)
    return state


def load(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return from_document(doc)
