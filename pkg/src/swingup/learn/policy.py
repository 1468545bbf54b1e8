"""tanh-squashed diagonal Gaussian policy."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mlp import MlpParams, init_mlp, mlp_forward

LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0
LOG_STD_INIT = -0.5
TANH_EPS = 1e-6
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class GaussianPolicy:
    mean: MlpParams
    log_std: np.ndarray

    def __post_init__(self):
        self.log_std = np.asarray(self.log_std, dtype=float)
        if self.log_std.shape != (self.mean.sizes[-1],):
            raise ValueError("log_std must have one entry per action dimension")

    @property
    def obs_dim(self):
        return self.mean.sizes[0]

    @property
    def act_dim(self):
        return self.mean.sizes[-1]

    def copy(self):
        return GaussianPolicy(self.mean.copy(), self.log_std.copy())

    def tensors(self):
        out = self.mean.tensors("pi")
        out["pi.log_std"] = self.log_std
        return out


def init_policy(rng, obs_dim, act_dim, hidden=(64, 64)):
    return GaussianPolicy(init_mlp(rng, [obs_dim, *hidden, act_dim], out_gain=0.01), np.full(act_dim, LOG_STD_INIT))


def effective_log_std(policy):
    return np.clip(policy.log_std, LOG_STD_MIN, LOG_STD_MAX)


def policy_forward(policy, obs):
    mean, _ = mlp_forward(policy.mean, obs)
    return mean, effective_log_std(policy)


def squash_correction(raw):
    """Sum over action dims of log(1 - tanh(raw)^2 + eps)."""
    return np.sum(np.log(1.0 - np.tanh(raw) ** 2 + TANH_EPS), axis=-1)


def gaussian_log_prob(noise, log_std):
    return np.sum(-0.5 * noise**2 - HALF_LOG_2PI - log_std, axis=-1)


def sample_and_logprob(policy, obs, noise):
    """Reparameterised sample: returns (action in [-1, 1], raw action, log prob)."""
    mean, log_std = policy_forward(policy, obs)
    noise = np.asarray(noise, dtype=float)
    raw = mean + np.exp(log_std) * noise
    logp = gaussian_log_prob(noise, log_std) - squash_correction(raw)
    return np.tanh(raw), raw, logp


def log_prob(policy, obs, raw):
    mean, log_std = policy_forward(policy, obs)
    noise = (raw - mean) / np.exp(log_std)
    return gaussian_log_prob(noise, log_std) - squash_correction(raw)


def entropy(policy):
    """Entropy of the unsquashed Gaussian (state independent)."""
    return float(np.sum(effective_log_std(policy) + 0.5 + HALF_LOG_2PI))
