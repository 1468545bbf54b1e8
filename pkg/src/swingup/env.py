"""Episodic swing-up task on top of the hierarchical controller.

A policy acts every ``inner_steps`` physics steps by nudging the swing-angle
reference; the controller tracks the reference in between.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .control import Gains, TaskReference, _controller, controller_args
from .model import ModelParams, SimState, _rk4_step, total_energy
from .quaternion import error_quat, matvec, rotmat, yaw_quat

OBS_DIM = 13


class EpisodeFinished(RuntimeError):
    """Raised when stepping an environment whose episode is already over."""


@dataclass
class EnvConfig:
    target_alpha: float = 2.4
    angle_tol: float = 0.15
    rate_tol: float = 0.3
    episode_len: int = 400
    action_scale: float = 0.25
    w_angle: float = 0.1
    w_rate: float = 0.1
    w_action: float = 0.01
    w_energy: float = 5.0
    success_bonus: float = 10.0
    reset_std: float = 0.02
    inner_steps: int = 25
    planar: bool = False

    def __post_init__(self):
        positive = ("angle_tol", "rate_tol", "action_scale", "success_bonus")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"env.{name} must be positive")
        for name in ("w_angle", "w_rate", "w_action", "w_energy", "reset_std"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"env.{name} must be non-negative")
        if int(self.episode_len) != self.episode_len or self.episode_len < 1:
            raise ValueError("env.episode_len must be a positive integer")
        if int(self.inner_steps) != self.inner_steps or self.inner_steps < 1:
            raise ValueError("env.inner_steps must be a positive integer")
        if not abs(self.target_alpha) < math.pi:
            raise ValueError("env.target_alpha must satisfy |target_alpha| < pi")
        self.episode_len = int(self.episode_len)
        self.inner_steps = int(self.inner_steps)

    @property
    def action_dim(self):
        return 1 if self.planar else 2


@dataclass
class StepResult:
    obs: np.ndarray
    reward: float
    done: bool
    truncated: bool
    info: dict = field(default_factory=dict)


def target_energy(config, params):
    return params.m * params.g * params.L * (1.0 - math.cos(config.target_alpha))


def _energy_scale(config, params):
    e_star = target_energy(config, params)
    # a zero target has no natural energy scale; fall back to m*g*L
    return e_star if e_star > 1e-12 * params.m * params.g * params.L else params.m * params.g * params.L


def in_success_set(config, state):
    return (
        abs(state.alpha - config.target_alpha) < config.angle_tol
        and abs(state.alpha_dot) < config.rate_tol
        and abs(state.beta_dot) < config.rate_tol
    )


def reward(config, params, state, a):
    a = np.asarray(a, dtype=float)
    e_star = target_energy(config, params)
    energy_err = (total_energy(params, state) - e_star) / _energy_scale(config, params)
    r = (
        -config.w_angle * (state.alpha - config.target_alpha) ** 2
        - config.w_rate * (state.alpha_dot**2 + state.beta_dot**2) * (params.L / params.g)
        - config.w_action * float(a @ a)
        - config.w_energy * energy_err**2
    )
    if in_success_set(config, state):
        r += config.success_bonus
    return r


def observation(params, state, ref, last_action):
    w0 = params.omega0
    qe = error_quat(yaw_quat(ref.yaw_ref), state.q_WB)
    return np.array(
        [
            math.sin(state.alpha),
            math.cos(state.alpha),
            math.sin(state.beta),
            math.cos(state.beta),
            state.alpha_dot / w0,
            state.beta_dot / w0,
            qe[1],
            qe[2],
            qe[3],
            state.omega[0] / w0,
            state.omega[1] / w0,
            state.omega[2] / w0,
            last_action[0],
        ]
    )


# state columns, alpha/beta ref, N thrusts, world force, body torque, saturated
def log_width(n_rotors):
    return 1 + 11 + 2 + n_rotors + 6 + 1


@njit(cache=True)
def _advance(x, t0, ref, n_steps, planar, beta_limit, target, angle_tol, rate_tol, dt, log,
             gains, g, L, m, B, pinv, null, u_max, J, J_inv):
    """Run up to ``n_steps`` controller+RK4 steps.

    Returns (state, steps taken, saturated steps, success held on every step,
    failed). Stops early on failure. Writes one row per step into ``log``
    when it has rows.
    """
    n_sat = 0
    held = True
    failed = False
    taken = 0
    nr = u_max.shape[0]
    for k in range(n_steps):
        u, sat, res, w = _controller(x, ref, gains, g, L, m, B, pinv, null, u_max)
        F_world = matvec(rotmat(x[4:8]), w[0:3])
        x = _rk4_step(x, w[0:3], w[3:6], dt, g, L, m, J, J_inv)
        if planar:
            x[1] = 0.0
            x[3] = 0.0
        taken += 1
        if sat:
            n_sat += 1
        if log.shape[0] > 0:
            row = log[k]
            row[0] = t0 + (k + 1) * dt
            row[1:12] = x
            row[12] = ref[0]
            row[13] = ref[1]
            row[14:14 + nr] = u
            row[14 + nr:17 + nr] = F_world
            row[17 + nr:20 + nr] = w[3:6]
            row[20 + nr] = 1.0 if sat else 0.0
        if not np.all(np.isfinite(x)) or abs(x[1]) >= beta_limit:
            failed = True
            held = False
            break
        if not (abs(x[0] - target) < angle_tol and abs(x[2]) < rate_tol and abs(x[3]) < rate_tol):
            held = False
    return x, taken, n_sat, held, failed


class SwingUpEnv:
    """Gym-style environment: ``reset(seed)`` then ``step(action)`` until done."""

    def __init__(self, config=None, params=None, gains=None):
        self.config = config or EnvConfig()
        self.params = params or ModelParams()
        self.gains = gains or Gains()
        self._ctrl_args = controller_args(self.params, self.gains)
        self.state = SimState()
        self.ref = TaskReference()
        self.last_action = np.zeros(2)
        self.steps = 0
        self.done = True
        self.record = False
        self.trajectory = []

    @property
    def time(self):
        return self.state.t

    @property
    def action_dim(self):
        return self.config.action_dim

    def reset(self, seed=None):
        rng = np.random.default_rng(seed)
        std = self.config.reset_std
        alpha = float(rng.normal(0.0, std)) if std > 0 else 0.0
        beta = float(rng.normal(0.0, std)) if std > 0 else 0.0
        if self.config.planar:
            beta = 0.0
        self.state = SimState(alpha=alpha, beta=beta)
        self.ref = TaskReference.from_state(self.state)
        self.last_action = np.zeros(2)
        self.steps = 0
        self.done = False
        self.trajectory = []
        return self.observe()

    def observe(self):
        return observation(self.params, self.state, self.ref, self.last_action)

    def snapshot(self):
        """JSON-friendly copy of the episode state (not the config)."""
        return {
            "x": self.state.to_vector().tolist(),
            "t": self.state.t,
            "ref": self.ref.as_array().tolist(),
            "last_action": self.last_action.tolist(),
            "steps": self.steps,
            "done": self.done,
        }

    def restore(self, snap):
        self.state = SimState.from_vector(snap["x"], snap["t"])
        self.ref = TaskReference(*snap["ref"])
        self.last_action = np.array(snap["last_action"], dtype=float)
        self.steps = int(snap["steps"])
        self.done = bool(snap["done"])
        self.trajectory = []
        return self.observe()

    def _full_action(self, a):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        if not np.all(np.isfinite(a)):
            raise ValueError("action must be finite")
        full = np.zeros(2)
        n = 1 if self.config.planar else 2
        if a.size < n:
            raise ValueError(f"expected an action of size {n}, got {a.size}")
        full[:n] = a[:n]
        return np.clip(full, -1.0, 1.0)

    def apply_action(self, a):
        """Move the reference by the (clamped) action increment."""
        cfg, p = self.config, self.params
        a = self._full_action(a)
        delta = a * cfg.action_scale
        rate = delta / (cfg.inner_steps * p.dt)
        beta_max = 0.9 * p.beta_limit
        self.ref = TaskReference(
            alpha_ref=float(np.clip(self.ref.alpha_ref + delta[0], -math.pi, math.pi)),
            beta_ref=float(np.clip(self.ref.beta_ref + delta[1], -beta_max, beta_max)),
            alpha_dot_ref=float(rate[0]),
            beta_dot_ref=float(rate[1]),
            yaw_ref=0.0,
        )
        self.last_action = a
        return self.ref

    def step(self, a):
        if self.done:
            raise EpisodeFinished("episode is over; call reset() first")
        cfg, p = self.config, self.params
        a = self._full_action(a)
        self.apply_action(a)
        K = cfg.inner_steps
        log = np.empty((K if self.record else 0, log_width(p.n_rotors)))
        x, taken, n_sat, held, failed = _advance(
            self.state.to_vector(), self.state.t, self.ref.as_array(), K, cfg.planar, p.beta_limit,
            cfg.target_alpha, cfg.angle_tol, cfg.rate_tol, p.dt, log, *self._ctrl_args, p.J, p.J_inv,
        )
        self.state = SimState.from_vector(x, self.state.t + taken * p.dt)
        self.steps += 1
        if self.record:
            self._log_rows(log[:taken], a)

        finite = bool(np.all(np.isfinite(x)))
        if finite:
            r = reward(cfg, p, self.state, a)
        else:
            # worst angle error plus a full energy miss
            r = -(cfg.w_angle * (2.0 * math.pi) ** 2 + cfg.w_energy)
        success = held and not failed
        truncated = not (success or failed) and self.steps >= cfg.episode_len
        self.done = success or failed or truncated
        info = {
            "success": success,
            "failure": failed,
            "energy": total_energy(p, self.state) if finite else float("nan"),
            "saturated_fraction": n_sat / taken,
        }
        return StepResult(self.observe(), float(r), self.done, truncated, info)

    def _log_rows(self, rows, a):
        for row in rows:
            s = SimState.from_vector(row[1:12], row[0])
            r = reward(self.config, self.params, s, a) if np.all(np.isfinite(row[1:12])) else float("nan")
            self.trajectory.append(np.concatenate([row[:-1], [r, row[-1]]]))


def reset(config, params, seed, gains=None):
    env = SwingUpEnv(config, params, gains)
    return env, env.reset(seed)
