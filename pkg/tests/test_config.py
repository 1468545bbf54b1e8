import json

import numpy as np
import pytest

from swingup.config import ConfigError, apply_overrides, load_file, parse_override_value, resolve, to_dict


def test_empty_config_gives_defaults():
    cfg = resolve({})
    assert cfg.seed == 0 and cfg.output_dir == "out"
    assert cfg.model.n_rotors == 8
    assert cfg.train.gamma == 0.99 and cfg.train.lam == 0.95
    assert cfg.env.target_alpha == 2.4 and cfg.gains.kp_sw == 6.0


def test_round_trip_through_dict():
    cfg = resolve({"seed": 5, "train": {"lambda": 0.9, "hidden": [16]}, "env": {"planar": True}})
    doc = to_dict(cfg)
    assert doc["train"]["lambda"] == 0.9 and "lam" not in doc["train"] and "seed" not in doc["train"]
    again = resolve(json.loads(json.dumps(doc)))
    assert to_dict(again) == doc
    assert again.train.seed == 5


def test_seed_drives_train_seed():
    assert resolve({"seed": 17}).train.seed == 17


@pytest.mark.parametrize(
    "raw,fragment",
    [
        ({"bogus": 1}, "bogus"),
        ({"env": {"target": 1.0}}, "env.target"),
        ({"train": {"seed": 3}}, "train.seed"),
        ({"train": {"lam": 0.9}}, "train.lam"),
        ({"model": {"mass": 1.0}}, "model.mass"),
        ({"model": {"rotors": [{"position": [0, 0, 0], "axis": [0, 0, 1], "spin": 1}]}}, "model.rotors[0].spin"),
    ],
)
def test_unknown_keys_are_named(raw, fragment):
    with pytest.raises(ConfigError, match=fragment.replace("[", r"\[").replace("]", r"\]")):
        resolve(raw)


@pytest.mark.parametrize(
    "raw",
    [
        {"seed": -1},
        {"seed": 1.5},
        {"seed": True},
        {"output_dir": ""},
        {"env": {"planar": 1}},
        {"env": {"episode_len": 2.5}},
        {"train": {"hidden": [64, "x"]}},
        {"gains": {"kp_sw": "6"}},
        {"gains": {"kd_sw": -1.0}},
        {"model": {"dt": 0.0}},
        {"model": {"J": [[1, 0], [0, 1]]}},
        {"model": {"rotors": [{"position": [0, 0, 0]}]}},
        {"model": {"rotors": [{"position": [0, 0, 0], "axis": [0, 0, 2]}] * 6}},
        {"model": {"rotors": [{"position": [0, 0, 0], "axis": [0, 0, 1], "sigma": 2}]}},
        [],
    ],
)
def test_invalid_values_rejected(raw):
    with pytest.raises(ConfigError):
        resolve(raw)


def test_integer_valued_floats_accepted_for_integer_fields():
    assert resolve({"env": {"episode_len": 100.0}}).env.episode_len == 100


def test_custom_rotor_layout():
    rotors = [
        {
            "position": [np.cos(k * np.pi / 3), np.sin(k * np.pi / 3), 0.0],
            "axis": [-0.6 * (-1) ** k * np.sin(k * np.pi / 3), 0.6 * (-1) ** k * np.cos(k * np.pi / 3), 0.8],
            "sigma": (-1) ** k,
        }
        for k in range(6)
    ]
    cfg = resolve({"model": {"rotors": rotors}})
    assert cfg.model.n_rotors == 6
    assert cfg.model.rotors[1].sigma == -1


def test_overrides_with_dashes_and_nesting():
    raw = apply_overrides({"train": {"lr": 1e-3}}, [("train.total-steps", 8192), ("env.planar", True), ("seed", 4)])
    assert raw == {"train": {"lr": 1e-3, "total_steps": 8192}, "env": {"planar": True}, "seed": 4}
    cfg = resolve(raw)
    assert cfg.train.total_steps == 8192 and cfg.env.planar and cfg.seed == 4


def test_overrides_do_not_mutate_input():
    raw = {"env": {"planar": False}}
    apply_overrides(raw, [("env.planar", True)])
    assert raw == {"env": {"planar": False}}


def test_override_through_scalar_fails():
    with pytest.raises(ConfigError):
        apply_overrides({"seed": 1}, [("seed.x", 2)])


def test_parse_override_value():
    assert parse_override_value("8192") == 8192
    assert parse_override_value("true") is True
    assert parse_override_value("[32, 32]") == [32, 32]
    assert parse_override_value("runs/a") == "runs/a"


def test_load_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_file(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        load_file(bad)
    good = tmp_path / "good.json"
    good.write_text('{"seed": 2}')
    assert load_file(good) == {"seed": 2}
