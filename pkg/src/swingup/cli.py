"""Command-line entry point: ``swingup {sim,train,eval,check}``.

Exit codes: 0 success, 1 invalid input, 2 the simulation or training
diverged, 3 a self-check failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import config as cfgmod
from .files import atomic_write_json, read_jsonl, write_jsonl, write_trajectory_csv
from .learn import checkpoint
from .learn.ppo import TrainingDiverged
from .learn.trainer import TrainedPolicy, evaluate, train
from .model import ChartSingularityError, SimState, SimulationDiverged
from .references import parse_script, simulate

log = logging.getLogger("swingup")

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_CHECK_FAILED = 0, 1, 2, 3


class UsageError(ValueError):
    pass


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--output-dir", help="overrides the config output_dir")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="swingup",
        description="Swing-up simulation, training and verification for a cable-suspended platform.",
        epilog="Any config entry can be overridden with --<section>.<key> VALUE, e.g. --train.total-steps 8192.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sim", parents=[common], help="run the controller on a scripted reference")
    p.add_argument("--script", default="hold(0)", help="hold(a0) | step(a1, t1) | sine(amp, hz) | pump(amp)")
    p.add_argument("--duration", type=float, default=10.0, help="simulated seconds")
    p.add_argument("--alpha0", type=float, default=0.0, help="initial swing angle (rad)")

    p = sub.add_parser("train", parents=[common], help="train a policy with PPO")
    p.add_argument("--resume", metavar="CHECKPOINT", help="continue from a policy checkpoint")

    p = sub.add_parser("eval", parents=[common], help="evaluate a policy checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--dump-trajectories", action="store_true", help="write one CSV per episode")

    p = sub.add_parser("check", parents=[common], help="run the oracle self-checks")
    p.add_argument("--only", action="append", metavar="NAME", help="energy | period | allocation | gradient | gae")
    return parser


def split_overrides(argv):
    """Separate ``--section.key value`` pairs from the regular arguments."""
    rest, overrides = [], []
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg.startswith("--") and "." in arg.split("=", 1)[0]:
            if "=" in arg:
                key, value = arg[2:].split("=", 1)
            else:
                if i + 1 >= len(argv):
                    raise UsageError(f"override {arg} needs a value")
                key, value = arg[2:], argv[i + 1]
                i += 1
            overrides.append((key, cfgmod.parse_override_value(value)))
        else:
            rest.append(arg)
        i += 1
    return rest, overrides


def load_config(args, overrides, base=None):
    raw = cfgmod.load_file(args.config) if args.config else (base or {})
    if args.seed is not None:
        overrides = [*overrides, ("seed", args.seed)]
    if args.output_dir is not None:
        overrides = [*overrides, ("output_dir", args.output_dir)]
    cfg = cfgmod.resolve(cfgmod.apply_overrides(raw, overrides))
    os.makedirs(cfg.output_dir, exist_ok=True)
    atomic_write_json(os.path.join(cfg.output_dir, "config.resolved.json"), cfgmod.to_dict(cfg))
    return cfg


# ---------------------------------------------------------------- commands


def cmd_sim(args, cfg):
    script = parse_script(args.script)
    rows = simulate(script, args.duration, cfg.model, cfg.gains, cfg.env, SimState(alpha=args.alpha0))
    path = os.path.join(cfg.output_dir, "trajectory.csv")
    write_trajectory_csv(path, rows, cfg.model.n_rotors)
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def _checkpoint_doc(cfg, trained):
    return checkpoint.to_document(
        trained.policy,
        trained.value_net,
        cfgmod.to_dict(cfg),
        trained.step,
        trained.update,
        trained.optimizer,
        trained.rng_state,
        trained.rollout,
    )


def _resume_state(path, cfg):
    policy, value_net, doc = checkpoint.load(path)
    params = {**policy.tensors(), **value_net.tensors("v")}
    if value_net.sizes[1:-1] != list(cfg.train.hidden) or policy.mean.sizes[1:-1] != list(cfg.train.hidden):
        raise UsageError("checkpoint network sizes do not match train.hidden")
    opt = checkpoint.optimizer_from_document(doc, params)
    return TrainedPolicy(
        policy, value_net, opt, doc["step"], doc.get("update", 0), [], doc.get("rng_state"), doc.get("rollout")
    )


def cmd_train(args, cfg):
    out = cfg.output_dir
    metrics_path = os.path.join(out, "metrics.jsonl")
    resume = None
    rows = []
    if args.resume:
        resume = _resume_state(args.resume, cfg)
        if os.path.exists(metrics_path):
            rows = [r for r in read_jsonl(metrics_path) if r["step"] <= resume.step]
        print(f"resuming from step {resume.step}")

    def sink(row):
        rows.append(row)
        write_jsonl(metrics_path, rows)
        rate = "-" if row["success_rate"] is None else f"{row['success_rate']:.2f}"
        ret = "-" if row["mean_return"] is None else f"{row['mean_return']:.1f}"
        print(f"step {row['step']:>9d}  return {ret:>9}  success {rate}", flush=True)

    def on_checkpoint(trained):
        atomic_write_json(os.path.join(out, f"policy_step_{trained.step}.json"), _checkpoint_doc(cfg, trained), None)

    write_jsonl(metrics_path, rows)
    try:
        trained = train(cfg.model, cfg.env, cfg.train, sink, cfg.gains, resume, on_checkpoint)
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    atomic_write_json(os.path.join(out, "policy_final.json"), _checkpoint_doc(cfg, trained), None)
    print(f"wrote {os.path.join(out, 'policy_final.json')}")
    return EXIT_OK


def cmd_eval(args, cfg):
    policy, _, _ = checkpoint.load(args.checkpoint)
    if args.episodes < 0:
        raise UsageError("--episodes must be non-negative")
    if policy.act_dim != cfg.env.action_dim:
        raise UsageError(
            f"checkpoint policy has {policy.act_dim} action dims but env.planar={cfg.env.planar} needs {cfg.env.action_dim}"
        )
    if policy.obs_dim != 13:
        raise UsageError(f"checkpoint policy expects {policy.obs_dim} observations, environment provides 13")
    stats, trajectories = evaluate(
        policy, cfg.model, cfg.env, args.episodes, cfg.seed, cfg.gains, record=args.dump_trajectories
    )
    result = {"checkpoint": os.path.abspath(args.checkpoint), "seed": cfg.seed, **stats.to_dict()}
    atomic_write_json(os.path.join(cfg.output_dir, "eval.json"), result)
    for i, rows in enumerate(trajectories):
        write_trajectory_csv(os.path.join(cfg.output_dir, f"trajectory_{i:04d}.csv"), rows, cfg.model.n_rotors)
    print(json.dumps(stats.to_dict(), indent=2))
    return EXIT_OK


def cmd_check(args, cfg):
    from .oracle import run_checks

    results = run_checks(cfg.model, cfg.gains, cfg.seed, args.only, tuple(cfg.train.hidden))
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  value={r.value:.3e}  threshold={r.threshold:.1e}  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    summary = {"passed": not failed, "failed": failed, "checks": [r.to_dict() for r in results]}
    atomic_write_json(os.path.join(cfg.output_dir, "check.json"), summary)
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print("all checks passed")
    return EXIT_OK


COMMANDS = {"sim": cmd_sim, "train": cmd_train, "eval": cmd_eval, "check": cmd_check}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        rest, overrides = split_overrides(argv)
    except UsageError as exc:
        parser.error(str(exc))
    args = parser.parse_args(rest)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        base = None
        if args.command == "eval" and not args.config:
            # evaluate under the configuration the policy was trained with
            base = checkpoint.load(args.checkpoint)[2]["config"]
        cfg = load_config(args, overrides, base)
        return COMMANDS[args.command](args, cfg)
    except (cfgmod.ConfigError, UsageError, checkpoint.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SimulationDiverged, ChartSingularityError, FloatingPointError) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
