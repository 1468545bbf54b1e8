import csv
import json
import math
import os

import numpy as np
import pytest

from swingup.cli import main, split_overrides
from swingup.files import format_row, read_jsonl, trajectory_header

TINY_TRAIN = [
    "--env.planar", "true",
    "--env.episode-len", "10",
    "--train.steps-per-update", "16",
    "--train.n-envs", "2",
    "--train.epochs", "2",
    "--train.minibatches", "2",
    "--train.hidden", "[8, 8]",
]


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def no_temp_files(directory):
    return not [f for f in os.listdir(directory) if f.startswith(".tmp-")]


# ---------------------------------------------------------------- overrides


def test_split_overrides_forms():
    rest, ov = split_overrides(["sim", "--train.total-steps", "8192", "--env.planar=true", "--seed", "3"])
    assert rest == ["sim", "--seed", "3"]
    assert ov == [("train.total-steps", 8192), ("env.planar", True)]


def test_override_missing_value_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["sim", "--env.planar"])
    assert exc.value.code == 2  # argparse convention for usage errors


# ---------------------------------------------------------------- sim


def test_sim_hold_from_rest(tmp_path):
    assert main(["sim", "--script", "hold(0)", "--duration", "1", "--output-dir", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "trajectory.csv")
    assert header == trajectory_header(8)
    assert header[-2:] == ["reward", "saturated"]
    assert rows.shape == (500, len(header))
    assert np.abs(rows[:, 1:5]).max() == 0.0
    assert json.loads((tmp_path / "config.resolved.json").read_text())["seed"] == 0
    assert no_temp_files(tmp_path)


def test_csv_header_is_exact():
    assert ",".join(trajectory_header(2)) == (
        "t,alpha,beta,alpha_dot,beta_dot,qw,qx,qy,qz,wx,wy,wz,alpha_ref,beta_ref,u_0,u_1,"
        "F_x,F_y,F_z,tau_x,tau_y,tau_z,reward,saturated"
    )


def test_csv_values_round_trip():
    values = [math.pi, 1 / 3, -2.5e-300, 0.1 + 0.2, 1.0]
    parsed = [float(v) for v in format_row(values).split(",")]
    assert parsed[:-1] == values[:-1]
    assert format_row([0.5, 0.0]).endswith(",0")


def test_sim_step_settles_on_strong_plant(tmp_path):
    cfg = tmp_path / "cfg.json"
    rotors = json.loads(json.dumps(_default_rotors(u_max=20.0)))
    cfg.write_text(json.dumps({"model": {"rotors": rotors}}))
    code = main(["sim", "--config", str(cfg), "--script", "step(0.3 at 0)", "--duration", "10",
                 "--output-dir", str(tmp_path)])
    assert code == 0
    _, rows = read_csv(tmp_path / "trajectory.csv")
    assert abs(rows[-1, 1] - 0.3) < 0.01


def _default_rotors(u_max):
    from swingup.model import octagon_layout

    return [
        {"position": r.position.tolist(), "axis": r.axis.tolist(), "kappa": r.kappa, "sigma": r.sigma, "u_max": u_max}
        for r in octagon_layout()
    ]


def test_sim_sine_tracking(tmp_path):
    w0 = math.sqrt(9.81 / 2.0)
    freq = 0.2 * w0 / (2 * math.pi)
    assert main(["sim", "--script", f"sine(0.15, {freq!r})", "--duration", "30", "--output-dir", str(tmp_path)]) == 0
    _, rows = read_csv(tmp_path / "trajectory.csv")
    t, alpha = rows[:, 0], rows[:, 1]
    assert np.all(np.isfinite(rows))
    late = t > 10
    w = 2 * math.pi * freq
    A = np.linalg.lstsq(np.c_[np.sin(w * t[late]), np.cos(w * t[late])], alpha[late], rcond=None)[0]
    lag = math.atan2(-A[1], A[0])
    assert abs(lag) < math.radians(10)
    assert 0.8 < np.hypot(*A) / 0.15 < 1.2


def test_sim_pump_grows_swing(tmp_path):
    assert main(["sim", "--script", "pump(2.4)", "--duration", "10", "--output-dir", str(tmp_path)]) == 0
    _, rows = read_csv(tmp_path / "trajectory.csv")
    assert np.abs(rows[:, 1]).max() > 2.0


@pytest.mark.parametrize(
    "args",
    [
        ["--script", "wobble(1)"],
        ["--script", "step()"],
        ["--script", "sine(0.1)"],
        ["--script", "hold(x)"],
        ["--duration", "0"],
        ["--duration", "nan"],
    ],
)
def test_sim_invalid_input(tmp_path, args, capsys):
    assert main(["sim", *args, "--output-dir", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_unknown_config_key_exit_code(tmp_path, capsys):
    assert main(["sim", "--env.nonsense", "1", "--output-dir", str(tmp_path)]) == 1
    assert "env.nonsense" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["sim", "--config", str(tmp_path / "none.json"), "--output-dir", str(tmp_path)]) == 1


def test_sim_divergence_exit_code(tmp_path, monkeypatch, capsys):
    import swingup.cli
    from swingup.model import SimulationDiverged

    def diverge(*_, **__):
        raise SimulationDiverged("left the workspace")

    monkeypatch.setattr(swingup.cli, "simulate", diverge)
    assert main(["sim", "--output-dir", str(tmp_path)]) == 2
    assert "diverged" in capsys.readouterr().err
    assert not (tmp_path / "trajectory.csv").exists()


# ---------------------------------------------------------------- train


def test_train_smoke(tmp_path):
    code = main(["train", *TINY_TRAIN, "--train.total-steps", "32", "--output-dir", str(tmp_path)])
    assert code == 0
    rows = read_jsonl(tmp_path / "metrics.jsonl")
    assert len(rows) == 1 and rows[0]["step"] == 32
    doc = json.loads((tmp_path / "policy_final.json").read_text())
    assert doc["step"] == 32 and doc["config"]["train"]["total_steps"] == 32
    assert no_temp_files(tmp_path)


def test_train_default_sized_smoke(tmp_path):
    code = main(["train", "--env.planar", "true", "--train.total-steps", "8192", "--output-dir", str(tmp_path)])
    assert code == 0
    assert len(read_jsonl(tmp_path / "metrics.jsonl")) >= 1


def test_train_metrics_byte_identical(tmp_path):
    args = ["train", *TINY_TRAIN, "--train.total-steps", "96", "--seed", "7"]
    assert main([*args, "--output-dir", str(tmp_path / "a")]) == 0
    assert main([*args, "--output-dir", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "metrics.jsonl").read_bytes()
    assert a == (tmp_path / "b" / "metrics.jsonl").read_bytes()
    assert len(a.splitlines()) >= 3


def test_train_resume_continues_metrics(tmp_path):
    full, part = tmp_path / "full", tmp_path / "part"
    common = ["train", *TINY_TRAIN, "--train.checkpoint-every", "1", "--seed", "2"]
    assert main([*common, "--train.total-steps", "128", "--output-dir", str(full)]) == 0
    assert main([*common, "--train.total-steps", "64", "--output-dir", str(part)]) == 0
    assert (part / "policy_step_32.json").exists() and (part / "policy_step_64.json").exists()
    code = main([*common, "--train.total-steps", "128", "--output-dir", str(part),
                 "--resume", str(part / "policy_step_64.json")])
    assert code == 0
    steps = [r["step"] for r in read_jsonl(part / "metrics.jsonl")]
    assert steps == [32, 64, 96, 128]
    assert (part / "metrics.jsonl").read_bytes() == (full / "metrics.jsonl").read_bytes()


def test_train_resume_from_earlier_checkpoint_drops_later_rows(tmp_path):
    common = ["train", *TINY_TRAIN, "--train.checkpoint-every", "1", "--output-dir", str(tmp_path)]
    assert main([*common, "--train.total-steps", "96"]) == 0
    assert main([*common, "--train.total-steps", "64", "--resume", str(tmp_path / "policy_step_32.json")]) == 0
    assert [r["step"] for r in read_jsonl(tmp_path / "metrics.jsonl")] == [32, 64]


def test_train_resume_with_mismatched_network(tmp_path):
    assert main(["train", *TINY_TRAIN, "--train.total-steps", "32", "--output-dir", str(tmp_path)]) == 0
    code = main(["train", *TINY_TRAIN, "--train.hidden", "[4]", "--train.total-steps", "64",
                 "--output-dir", str(tmp_path), "--resume", str(tmp_path / "policy_final.json")])
    assert code == 1


# ---------------------------------------------------------------- eval


@pytest.fixture(scope="module")
def trained_policy(tmp_path_factory):
    out = tmp_path_factory.mktemp("policy")
    assert main(["train", *TINY_TRAIN, "--train.total-steps", "32", "--output-dir", str(out)]) == 0
    return out / "policy_final.json"


def test_eval_smoke_and_trajectories(trained_policy, tmp_path):
    code = main(["eval", "--checkpoint", str(trained_policy), "--episodes", "2", "--dump-trajectories",
                 "--output-dir", str(tmp_path)])
    assert code == 0
    stats = json.loads((tmp_path / "eval.json").read_text())
    assert stats["n_episodes"] == 2 and 0 <= stats["success_rate"] <= 1
    header, rows = read_csv(tmp_path / "trajectory_0001.csv")
    assert header == trajectory_header(8)
    assert rows.shape[0] > 0 and set(np.unique(rows[:, -1])) <= {0.0, 1.0}
    assert not (tmp_path / "trajectory_0002.csv").exists()


def test_eval_deterministic(trained_policy, tmp_path):
    for d in ("a", "b"):
        assert main(["eval", "--checkpoint", str(trained_policy), "--episodes", "3", "--seed", "4",
                     "--output-dir", str(tmp_path / d)]) == 0
    a = json.loads((tmp_path / "a" / "eval.json").read_text())
    b = json.loads((tmp_path / "b" / "eval.json").read_text())
    assert a == b


def test_eval_zero_episodes(trained_policy, tmp_path):
    assert main(["eval", "--checkpoint", str(trained_policy), "--episodes", "0", "--output-dir", str(tmp_path)]) == 0
    stats = json.loads((tmp_path / "eval.json").read_text())
    assert stats["n_episodes"] == 0 and stats["empty"] is True and stats["success_rate"] is None


def test_eval_negative_episodes(trained_policy, tmp_path):
    assert main(["eval", "--checkpoint", str(trained_policy), "--episodes", "-1", "--output-dir", str(tmp_path)]) == 1


def test_eval_corrupt_checkpoint(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"format": "swingup-policy/1"}')
    assert main(["eval", "--checkpoint", str(bad), "--output-dir", str(tmp_path)]) == 1
    assert "checkpoint" in capsys.readouterr().err
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.json"), "--output-dir", str(tmp_path)]) == 1


def test_eval_action_dim_mismatch(trained_policy, tmp_path):
    code = main(["eval", "--checkpoint", str(trained_policy), "--env.planar", "false", "--episodes", "1",
                 "--output-dir", str(tmp_path)])
    assert code == 1


# ---------------------------------------------------------------- check


def test_check_only_filters(tmp_path, capsys):
    assert main(["check", "--only", "gae", "--only", "allocation", "--output-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "gae" in out and "allocation" in out and "energy" not in out
    summary = json.loads((tmp_path / "check.json").read_text())
    assert summary["passed"] and [c["name"] for c in summary["checks"]] == ["gae", "allocation"]


def test_check_coarse_dt_fails_energy(tmp_path, capsys):
    assert main(["check", "--only", "energy", "--model.dt", "0.05", "--output-dir", str(tmp_path)]) == 3
    captured = capsys.readouterr()
    assert "FAIL" in captured.out and "energy" in captured.err
    assert json.loads((tmp_path / "check.json").read_text())["failed"] == ["energy"]


def test_check_unknown_name(tmp_path):
    assert main(["check", "--only", "bogus", "--output-dir", str(tmp_path)]) == 1


def test_check_default_config_passes(tmp_path):
    assert main(["check", "--output-dir", str(tmp_path)]) == 0
