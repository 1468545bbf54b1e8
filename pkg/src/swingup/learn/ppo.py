"""Clipped-surrogate actor-critic: advantages, loss with gradients, Adam."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mlp import MlpParams, mlp_backward, mlp_forward
from .policy import LOG_STD_MAX, LOG_STD_MIN, GaussianPolicy, entropy, gaussian_log_prob, squash_correction


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 10
    minibatches: int = 4
    lr: float = 3e-4
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    steps_per_update: int = 1024
    n_envs: int = 8
    total_steps: int = 2_000_000
    seed: int = 0
    max_grad_norm: float = 0.5
    reward_scale: float = 0.01
    hidden: list = field(default_factory=lambda: [64, 64])
    checkpoint_every: int = 0
    log_wall_time: bool = False

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("train.gamma must be in (0, 1]")
        if not 0 <= self.lam <= 1:
            raise ValueError("train.lam must be in [0, 1]")
        if not self.clip_eps > 0:
            raise ValueError("train.clip_eps must be positive")
        for name in ("epochs", "minibatches", "steps_per_update", "n_envs", "total_steps"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"train.{name} must be a positive integer")
            setattr(self, name, int(value))
        for name in ("lr", "max_grad_norm", "reward_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"train.{name} must be positive")
        if self.entropy_coef < 0 or self.value_coef < 0:
            raise ValueError("loss coefficients must be non-negative")
        if self.total_steps < self.steps_per_update * self.n_envs:
            raise ValueError("train.total_steps must cover at least one update (steps_per_update * n_envs)")
        if self.minibatches > self.steps_per_update * self.n_envs:
            raise ValueError("more minibatches than samples per update")
        self.hidden = [int(h) for h in self.hidden]

    @property
    def batch_size(self):
        return self.steps_per_update * self.n_envs


@dataclass
class RolloutBuffer:
    """Arrays indexed [t, env]; ``last_value`` bootstraps the step after T-1."""

    obs: np.ndarray
    raw: np.ndarray
    log_prob: np.ndarray
    reward: np.ndarray
    value: np.ndarray
    done: np.ndarray
    last_value: np.ndarray

    @classmethod
    def empty(cls, T, E, obs_dim, act_dim):
        return cls(
            np.zeros((T, E, obs_dim)),
            np.zeros((T, E, act_dim)),
            np.zeros((T, E)),
            np.zeros((T, E)),
            np.zeros((T, E)),
            np.zeros((T, E)),
            np.zeros(E),
        )


def gae(buffer, gamma, lam):
    """Generalised advantage estimates and value targets (unnormalised)."""
    T = buffer.reward.shape[0]
    adv = np.zeros_like(buffer.reward)
    running = np.zeros_like(buffer.last_value)
    for t in reversed(range(T)):
        next_value = buffer.last_value if t == T - 1 else buffer.value[t + 1]
        nonterminal = 1.0 - buffer.done[t]
        delta = buffer.reward[t] + gamma * next_value * nonterminal - buffer.value[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    return adv, adv + buffer.value


def normalize(adv):
    std = adv.std()
    return (adv - adv.mean()) / (std + 1e-8)


@dataclass
class Minibatch:
    obs: np.ndarray
    raw: np.ndarray
    old_log_prob: np.ndarray
    advantage: np.ndarray
    returns: np.ndarray


@dataclass
class LossStats:
    loss: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float


def ppo_loss(
    policy: GaussianPolicy,
    value_net: MlpParams,
    batch: Minibatch,
    clip_eps,
    value_coef=0.5,
    entropy_coef=0.0,
    need_grad=True,
):
    """Total loss and its gradient for every trainable tensor.

    Gradient keys follow ``GaussianPolicy.tensors`` / ``MlpParams.tensors("v")``.
    With ``need_grad=False`` the gradient dict is empty.
    """
    n = batch.obs.shape[0]
    mean, acts_pi = mlp_forward(policy.mean, batch.obs)
    log_std = np.clip(policy.log_std, LOG_STD_MIN, LOG_STD_MAX)
    std = np.exp(log_std)
    noise = (batch.raw - mean) / std
    logp = gaussian_log_prob(noise, log_std) - squash_correction(batch.raw)

    ratio = np.exp(logp - batch.old_log_prob)
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    surr1 = ratio * batch.advantage
    surr2 = clipped * batch.advantage
    policy_loss = -np.mean(np.minimum(surr1, surr2))

    values, acts_v = mlp_forward(value_net, batch.obs)
    values = values[:, 0]
    value_err = values - batch.returns
    value_loss = np.mean(value_err**2)
    ent = entropy(policy)
    loss = policy_loss + value_coef * value_loss - entropy_coef * ent
    if not np.isfinite(loss):
        raise TrainingDiverged(
            f"non-finite loss (policy {policy_loss}, value {value_loss}, max |ratio| {np.max(np.abs(ratio))})"
        )

    stats = LossStats(
        float(loss), float(policy_loss), float(value_loss), ent, float(np.mean(np.abs(ratio - 1.0) > clip_eps))
    )
    if not need_grad:
        return float(loss), {}, stats

    # policy branch: only the unclipped surrogate carries gradient
    active = surr1 <= surr2
    d_logp = np.where(active, -batch.advantage / n, 0.0) * ratio
    d_mean = d_logp[:, None] * noise / std
    d_log_std = np.sum(d_logp[:, None] * (noise**2 - 1.0), axis=0) - entropy_coef
    d_log_std = np.where((policy.log_std >= LOG_STD_MIN) & (policy.log_std <= LOG_STD_MAX), d_log_std, 0.0)
    dW, db = mlp_backward(policy.mean, acts_pi, d_mean)

    d_values = (value_coef * 2.0 / n) * value_err
    dWv, dbv = mlp_backward(value_net, acts_v, d_values[:, None])

    grads = {}
    for i in range(len(dW)):
        grads[f"pi.W{i}"] = dW[i]
        grads[f"pi.b{i}"] = db[i]
    grads["pi.log_std"] = d_log_std
    for i in range(len(dWv)):
        grads[f"v.W{i}"] = dWv[i]
        grads[f"v.b{i}"] = dbv[i]
    return float(loss), grads, stats


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


def clip_grad_norm(grads, max_norm):
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm is not None and total > max_norm:
        scale = max_norm / (total + 1e-12)
        grads = {k: g * scale for k, g in grads.items()}
    return grads, total


def adam_step(state, params, grads, lr, max_grad_norm=None):
    """In-place Adam update of the arrays in ``params``; returns the pre-clip gradient norm."""
    grads, norm = clip_grad_norm(grads, max_grad_norm)
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {k} has shape {g.shape}, parameter has {p.shape}")
        m = state.m[k]
        v = state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return norm
