"""Rollout collection, PPO updates and deterministic evaluation."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..env import OBS_DIM, SwingUpEnv
from .mlp import MlpParams, init_mlp, mlp_forward
from .policy import GaussianPolicy, entropy, init_policy, sample_and_logprob
from .ppo import AdamState, Minibatch, RolloutBuffer, adam_step, gae, normalize, ppo_loss

log = logging.getLogger(__name__)


@dataclass
class TrainedPolicy:
    policy: GaussianPolicy
    value_net: MlpParams
    optimizer: AdamState
    step: int
    update: int
    metrics: list = field(default_factory=list)
    rng_state: dict | None = None
    rollout: dict | None = None  # in-flight episodes, so a resumed run picks them up


@dataclass
class EvalStats:
    n_episodes: int
    success_rate: float | None = None
    mean_return: float | None = None
    std_return: float | None = None
    mean_time_to_target: float | None = None
    mean_saturated_fraction: float | None = None
    empty: bool = False

    def to_dict(self):
        return asdict(self)


def _train_reset_seed(seed, env_index, episode):
    return [seed, 1, env_index, episode]


def _eval_reset_seed(seed, episode):
    return [seed, 2, episode]


def value_of(value_net, obs):
    return mlp_forward(value_net, obs)[0][:, 0]


def explained_variance(pred, target):
    var = np.var(target)
    return float("nan") if var == 0 else float(1.0 - np.var(target - pred) / var)


def _mean_or_none(xs):
    return float(np.mean(xs)) if len(xs) else None


def train(model_params, env_config, train_config, sink=None, gains=None, resume=None, on_checkpoint=None):
    """Run PPO for as many whole updates as fit in ``train_config.total_steps``.

    ``sink`` receives one metrics dict per update. ``resume`` is a
    ``TrainedPolicy`` to continue from. ``on_checkpoint(trained)`` is called
    every ``checkpoint_every`` updates.
    """
    cfg = train_config
    E, T = cfg.n_envs, cfg.steps_per_update
    act_dim = env_config.action_dim

    if resume is None:
        init_rng = np.random.default_rng([cfg.seed, 0])
        policy = init_policy(init_rng, OBS_DIM, act_dim, cfg.hidden)
        value_net = init_mlp(init_rng, [OBS_DIM, *cfg.hidden, 1], out_gain=1.0)
        params = {**policy.tensors(), **value_net.tensors("v")}
        trained = TrainedPolicy(policy, value_net, AdamState.zeros_like(params), 0, 0)
        rng = np.random.default_rng([cfg.seed, 3])
    else:
        trained = resume
        policy, value_net = trained.policy, trained.value_net
        params = {**policy.tensors(), **value_net.tensors("v")}
        rng = np.random.default_rng()
        if trained.rng_state is not None:
            rng.bit_generator.state = trained.rng_state
        else:
            rng = np.random.default_rng([cfg.seed, 3, trained.update])
    if policy.act_dim != act_dim:
        raise ValueError(f"policy has {policy.act_dim} action dims, environment needs {act_dim}")

    envs = [SwingUpEnv(env_config, model_params, gains) for _ in range(E)]
    if trained.rollout is not None and len(trained.rollout["envs"]) == E:
        snap = trained.rollout
        obs = np.array([env.restore(s) for env, s in zip(envs, snap["envs"])])
        episodes = list(snap["episodes"])
        running_return = np.array(snap["running_return"], dtype=float)
    else:
        # without a snapshot, start fresh episodes under seeds no earlier update used
        episodes = [trained.update * 100_000] * E
        obs = np.array([env.reset(_train_reset_seed(cfg.seed, e, episodes[e])) for e, env in enumerate(envs)])
        running_return = np.zeros(E)

    while trained.step + T * E <= cfg.total_steps:
        t_start = time.perf_counter()
        buf = RolloutBuffer.empty(T, E, OBS_DIM, act_dim)
        # time-limit truncation is not a true terminal: bootstrap from the final observation
        bootstrap = np.zeros((T, E))
        done_returns, done_success = [], []
        for t in range(T):
            noise = rng.standard_normal((E, act_dim))
            action, raw, logp = sample_and_logprob(policy, obs, noise)
            buf.obs[t] = obs
            buf.raw[t] = raw
            buf.log_prob[t] = logp
            buf.value[t] = value_of(value_net, obs)
            for e, env in enumerate(envs):
                res = env.step(action[e])
                buf.reward[t, e] = res.reward
                running_return[e] += res.reward
                if res.done:
                    buf.done[t, e] = 1.0
                    if res.truncated:
                        bootstrap[t, e] = cfg.gamma * value_of(value_net, res.obs[None, :])[0]
                    done_returns.append(running_return[e])
                    done_success.append(res.info["success"])
                    running_return[e] = 0.0
                    episodes[e] += 1
                    obs[e] = env.reset(_train_reset_seed(cfg.seed, e, episodes[e]))
                else:
                    obs[e] = res.obs
        buf.last_value = value_of(value_net, obs)
        buf.reward *= cfg.reward_scale
        buf.reward += bootstrap
        adv, returns = gae(buf, cfg.gamma, cfg.lam)
        adv = normalize(adv)

        n = T * E
        flat = Minibatch(
            buf.obs.reshape(n, OBS_DIM),
            buf.raw.reshape(n, act_dim),
            buf.log_prob.reshape(n),
            adv.reshape(n),
            returns.reshape(n),
        )
        ev = explained_variance(buf.value.reshape(n), flat.returns)
        stats = []
        for _ in range(cfg.epochs):
            perm = rng.permutation(n)
            for idx in np.array_split(perm, cfg.minibatches):
                mb = Minibatch(flat.obs[idx], flat.raw[idx], flat.old_log_prob[idx], flat.advantage[idx], flat.returns[idx])
                _, grads, st = ppo_loss(policy, value_net, mb, cfg.clip_eps, cfg.value_coef, cfg.entropy_coef)
                adam_step(trained.optimizer, params, grads, cfg.lr, cfg.max_grad_norm)
                stats.append(st)

        trained.step += n
        trained.update += 1
        row = {
            "step": trained.step,
            "mean_return": _mean_or_none(done_returns),
            "success_rate": _mean_or_none([float(s) for s in done_success]),
            "policy_loss": float(np.mean([s.policy_loss for s in stats])),
            "value_loss": float(np.mean([s.value_loss for s in stats])),
            "entropy": entropy(policy),
            "explained_var": None if math.isnan(ev) else ev,
            "wall_s": round(time.perf_counter() - t_start, 3) if cfg.log_wall_time else None,
        }
        trained.metrics.append(row)
        trained.rng_state = rng.bit_generator.state
        trained.rollout = {
            "envs": [env.snapshot() for env in envs],
            "episodes": list(episodes),
            "running_return": running_return.tolist(),
        }
        log.info(
            "step %d return %s success %s ev %s",
            row["step"], row["mean_return"], row["success_rate"], row["explained_var"],
        )
        if sink is not None:
            sink(row)
        if on_checkpoint is not None and cfg.checkpoint_every and trained.update % cfg.checkpoint_every == 0:
            on_checkpoint(trained)
    return trained


def evaluate(policy, model_params, env_config, n_episodes, seed, gains=None, record=False):
    """Deterministic rollouts (zero noise). Returns (EvalStats, trajectories)."""
    trajectories = []
    if n_episodes == 0:
        return EvalStats(0, empty=True), trajectories
    env = SwingUpEnv(env_config, model_params, gains)
    env.record = record
    returns, successes, times, sat = [], [], [], []
    zero = np.zeros((1, policy.act_dim))
    for i in range(n_episodes):
        obs = env.reset(_eval_reset_seed(seed, i))
        total, sat_sum, n = 0.0, 0.0, 0
        while True:
            action, _, _ = sample_and_logprob(policy, obs[None, :], zero)
            res = env.step(action[0])
            total += res.reward
            sat_sum += res.info["saturated_fraction"]
            n += 1
            if res.done:
                break
            obs = res.obs
        returns.append(total)
        successes.append(bool(res.info["success"]))
        if res.info["success"]:
            times.append(env.time)
        sat.append(sat_sum / n)
        if record:
            trajectories.append(np.array(env.trajectory))
    stats = EvalStats(
        n_episodes=n_episodes,
        success_rate=float(np.mean(successes)),
        mean_return=float(np.mean(returns)),
        std_return=float(np.std(returns)),
        mean_time_to_target=_mean_or_none(times),
        mean_saturated_fraction=float(np.mean(sat)),
    )
    return stats, trajectories
