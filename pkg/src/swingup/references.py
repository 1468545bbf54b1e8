"""Scripted swing references for controller-only simulation.

Scripts are written like function calls: ``hold(0)``, ``step(0.3, 1.0)``
(also ``step(0.3 at 1.0)``), ``sine(0.3, 0.07)`` and ``pump(2.4)``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .control import Gains, TaskReference, controller_args
from .env import EnvConfig, _advance, log_width, reward
from .model import ModelParams, SimState, SimulationDiverged

_CALL = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")

# name -> (min args, max args, defaults for the optional tail)
_SIGNATURES = {
    "hold": (0, 1, (0.0,)),
    "step": (1, 2, (0.0,)),
    "sine": (2, 2, ()),
    "pump": (0, 1, (2.4,)),
}


@dataclass(frozen=True)
class ReferenceScript:
    """``hold(a0)``: constant reference.
    ``step(a1, t1)``: zero until t1, then a1.
    ``sine(amp, freq)``: amp*sin(2*pi*freq*t), freq in Hz, with the matching rate.
    ``pump(amp)``: bang-bang reference +-amp switched on the sign of the swing
    rate, which keeps the push in phase with the swing at its natural frequency.
    """

    name: str
    args: tuple

    def reference(self, t, state):
        if self.name == "hold":
            return TaskReference(alpha_ref=self.args[0])
        if self.name == "step":
            a1, t1 = self.args
            return TaskReference(alpha_ref=a1 if t >= t1 else 0.0)
        if self.name == "sine":
            amp, freq = self.args
            w = 2.0 * math.pi * freq
            return TaskReference(alpha_ref=amp * math.sin(w * t), alpha_dot_ref=amp * w * math.cos(w * t))
        amp = self.args[0]
        return TaskReference(alpha_ref=amp if state.alpha_dot >= 0.0 else -amp)


def parse_script(text):
    m = _CALL.match(text.replace(" at ", ","))
    if not m or m.group(1) not in _SIGNATURES:
        names = ", ".join(f"{n}(...)" for n in _SIGNATURES)
        raise ValueError(f"unknown reference script {text!r}; expected one of {names}")
    name, body = m.group(1), (m.group(2) or "").strip()
    try:
        args = [float(a) for a in body.split(",")] if body else []
    except ValueError:
        raise ValueError(f"reference script {text!r} has non-numeric arguments") from None
    lo, hi, defaults = _SIGNATURES[name]
    if not lo <= len(args) <= hi:
        raise ValueError(f"{name} takes {lo} to {hi} arguments, got {len(args)}")
    args += list(defaults[len(args) - lo:]) if len(args) < hi else []
    if not all(math.isfinite(a) for a in args):
        raise ValueError(f"reference script {text!r} has non-finite arguments")
    if name == "sine" and args[1] < 0:
        raise ValueError("sine frequency must be non-negative")
    return ReferenceScript(name, tuple(args))


def simulate(script, duration, params=None, gains=None, env_config=None, initial=None):
    """Closed-loop run following ``script``; returns trajectory rows (see files.trajectory_header)."""
    params = params or ModelParams()
    gains = gains or Gains()
    env_config = env_config or EnvConfig()
    if not (math.isfinite(duration) and duration > 0):
        raise ValueError(f"duration must be positive, got {duration}")
    n_steps = int(round(duration / params.dt))
    ctrl = controller_args(params, gains)
    state = initial or SimState()
    x = state.to_vector()
    t = state.t
    zero_action = np.zeros(env_config.action_dim)
    buf = np.empty((1, log_width(params.n_rotors)))
    rows = np.empty((n_steps, buf.shape[1] + 1))  # plus the reward column
    for k in range(n_steps):
        ref = script.reference(t, SimState.from_vector(x, t)).as_array()
        x, taken, _, _, failed = _advance(
            x, t, ref, 1, False, params.beta_limit, env_config.target_alpha, env_config.angle_tol,
            env_config.rate_tol, params.dt, buf, *ctrl, params.J, params.J_inv,
        )
        if failed:
            raise SimulationDiverged(f"simulation left the workspace or diverged at t={t + params.dt:.4g} s")
        t = state.t + (k + 1) * params.dt
        r = reward(env_config, params, SimState.from_vector(x, t), zero_action)
        rows[k, :-2] = buf[0, :-1]
        rows[k, -2] = r
        rows[k, -1] = buf[0, -1]
    return rows
