"""Dynamics of a platform hanging from a rigid massless cable.

The cable is a rod of length ``L`` pinned at the world origin with a
frictionless spherical joint at the platform centre of mass. Swing is
described by two angles (alpha, beta) so that the unit cable direction is

    d(alpha, beta) = (sin b, -sin a cos b, -cos a cos b)

and the attitude is a body-to-world unit quaternion. Rotor thrusts enter the
swing equations through their world-frame force and the attitude equations
through their body-frame torque; the two subsystems couple only through the
thrust direction.

The numerical work happens in numba kernels operating on the flat state vector
``[alpha, beta, alpha_dot, beta_dot, qw, qx, qy, qz, wx, wy, wz]``; the
dataclass API below wraps them.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numba import njit

from .quaternion import matvec, qnormalize, qrate, rotmat

log = logging.getLogger(__name__)

STATE_DIM = 11
DT_SOFT_MAX = 0.005


class ChartSingularityError(ValueError):
    """Raised when |beta| reaches pi/2, where the (alpha, beta) chart degenerates."""


class SimulationDiverged(FloatingPointError):
    """Raised when integration produces a non-finite state."""


@dataclass(frozen=True)
class Rotor:
    position: np.ndarray
    axis: np.ndarray
    kappa: float = 0.01
    sigma: int = 1
    u_max: float = 8.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=float).reshape(3))
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-12:
            raise ValueError(f"rotor axis must have unit norm, got {self.axis}")
        if self.sigma not in (-1, 1):
            raise ValueError(f"rotor spin sign must be +1 or -1, got {self.sigma}")
        if not self.u_max > 0:
            raise ValueError(f"rotor u_max must be positive, got {self.u_max}")


def octagon_layout(radius=0.35, tilt=math.pi / 4, u_max=8.0, kappa=0.01):
    """Eight rotors on a regular octagon with thrust axes tilted out of the rotor plane.

    Each axis lies in the plane spanned by the local tangential direction and
    body z. Rotor k is tilted by +tilt or -tilt from the tangential direction,
    alternating around the ring, and the tangential sense flips every two
    rotors. The all-ones thrust vector is then an exact null vector of the
    allocation matrix, so equal thrusts on every rotor produce no net wrench.
    """
    rotors = []
    tangential_sign = (1, 1, -1, -1, 1, 1, -1, -1)
    spin = (1, 1, -1, -1, 1, 1, -1, -1)
    for k in range(8):
        phi = k * math.pi / 4
        radial = np.array([math.cos(phi), math.sin(phi), 0.0])
        tangent = np.array([-math.sin(phi), math.cos(phi), 0.0])
        vertical = 1.0 if k % 2 == 0 else -1.0
        axis = tangential_sign[k] * math.cos(tilt) * tangent + vertical * math.sin(tilt) * np.array([0.0, 0.0, 1.0])
        axis /= np.linalg.norm(axis)
        rotors.append(Rotor(radius * radial, axis, kappa=kappa, sigma=spin[k], u_max=u_max))
    return rotors


@dataclass
class ModelParams:
    g: float = 9.81
    L: float = 2.0
    m: float = 5.0
    J: np.ndarray = field(default_factory=lambda: np.diag([0.4, 0.4, 0.6]))
    rotors: list = field(default_factory=octagon_layout)
    dt: float = 0.002
    beta_limit: float = 1.4

    def __post_init__(self):
        self.J = np.asarray(self.J, dtype=float).reshape(3, 3)
        self.rotors = list(self.rotors)
        for name in ("g", "L", "m", "dt", "beta_limit"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value}")
            setattr(self, name, value)
        if self.dt > DT_SOFT_MAX:
            log.warning("dt=%g exceeds the recommended maximum %g", self.dt, DT_SOFT_MAX)
        if self.beta_limit >= math.pi / 2:
            raise ValueError("beta_limit must stay below pi/2")
        if not np.array_equal(self.J, self.J.T):
            raise ValueError("inertia tensor must be symmetric")
        if np.linalg.eigvalsh(self.J).min() <= 0:
            raise ValueError("inertia tensor must be positive definite")
        if len(self.rotors) < 6:
            raise ValueError(f"need at least 6 rotors for a full wrench, got {len(self.rotors)}")

    @property
    def n_rotors(self):
        return len(self.rotors)

    @property
    def omega0(self):
        """Small-angle natural frequency sqrt(g/L) of the free swing."""
        return math.sqrt(self.g / self.L)

    @cached_property
    def rotor_positions(self):
        return np.array([r.position for r in self.rotors])

    @cached_property
    def rotor_axes(self):
        return np.array([r.axis for r in self.rotors])

    @cached_property
    def u_max(self):
        return np.array([r.u_max for r in self.rotors], dtype=float)

    @cached_property
    def J_inv(self):
        return np.linalg.inv(self.J)

    @cached_property
    def body_wrench_matrix(self):
        """6xN map from thrusts to (body force, body torque)."""
        cols = []
        for r in self.rotors:
            moment = np.cross(r.position, r.axis) + r.kappa * r.sigma * r.axis
            cols.append(np.concatenate([r.axis, moment]))
        return np.array(cols).T

    def kernel_args(self):
        return (self.g, self.L, self.m, self.J, self.J_inv)


@dataclass
class SimState:
    alpha: float = 0.0
    beta: float = 0.0
    alpha_dot: float = 0.0
    beta_dot: float = 0.0
    q_WB: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    t: float = 0.0

    def __post_init__(self):
        self.q_WB = np.asarray(self.q_WB, dtype=float).reshape(4)
        self.omega = np.asarray(self.omega, dtype=float).reshape(3)

    def to_vector(self):
        x = np.empty(STATE_DIM)
        x[0:4] = (self.alpha, self.beta, self.alpha_dot, self.beta_dot)
        x[4:8] = self.q_WB
        x[8:11] = self.omega
        return x

    @classmethod
    def from_vector(cls, x, t=0.0):
        x = np.asarray(x, dtype=float)
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]), x[4:8].copy(), x[8:11].copy(), float(t))


@dataclass
class Wrench:
    F: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        self.F = np.asarray(self.F, dtype=float).reshape(3)
        self.tau = np.asarray(self.tau, dtype=float).reshape(3)
        if not (np.all(np.isfinite(self.F)) and np.all(np.isfinite(self.tau))):
            raise ValueError("wrench components must be finite")

    @classmethod
    def zero(cls):
        return cls(np.zeros(3), np.zeros(3))

    def as_vector(self):
        return np.concatenate([self.F, self.tau])


@dataclass
class StateDerivative:
    alpha_dot: float
    beta_dot: float
    alpha_ddot: float
    beta_ddot: float
    q_dot: np.ndarray
    omega_dot: np.ndarray

    def as_vector(self):
        x = np.empty(STATE_DIM)
        x[0:4] = (self.alpha_dot, self.beta_dot, self.alpha_ddot, self.beta_ddot)
        x[4:8] = self.q_dot
        x[8:11] = self.omega_dot
        return x


# ---------------------------------------------------------------- kernels


@njit(cache=True)
def _cable_direction(alpha, beta):
    d = np.empty(3)
    cb = np.cos(beta)
    d[0] = np.sin(beta)
    d[1] = -np.sin(alpha) * cb
    d[2] = -np.cos(alpha) * cb
    return d


@njit(cache=True)
def _cable_jacobian(alpha, beta, L):
    """d(bob position)/d(alpha, beta), a 3x2 matrix with orthogonal columns."""
    sa, ca = np.sin(alpha), np.cos(alpha)
    sb, cb = np.sin(beta), np.cos(beta)
    jac = np.empty((3, 2))
    jac[0, 0] = 0.0
    jac[1, 0] = -L * ca * cb
    jac[2, 0] = L * sa * cb
    jac[0, 1] = L * cb
    jac[1, 1] = L * sa * sb
    jac[2, 1] = L * ca * sb
    return jac


@njit(cache=True)
def _swing_accel(alpha, beta, alpha_dot, beta_dot, F, g, L, m):
    cb = np.cos(beta)
    sb = np.sin(beta)
    if cb < 1e-9:
        raise ChartSingularityError("|beta| >= pi/2: swing mass matrix is singular")
    jac = _cable_jacobian(alpha, beta, L)
    mL2 = m * L * L
    Qa = jac[0, 0] * F[0] + jac[1, 0] * F[1] + jac[2, 0] * F[2]
    Qb = jac[0, 1] * F[0] + jac[1, 1] * F[1] + jac[2, 1] * F[2]
    add = (Qa / mL2 - g / L * np.sin(alpha) * cb + 2.0 * sb * cb * alpha_dot * beta_dot) / (cb * cb)
    bdd = Qb / mL2 - g / L * np.cos(alpha) * sb - sb * cb * alpha_dot * alpha_dot
    return add, bdd


@njit(cache=True)
def _deriv(x, F_world, tau_body, g, L, m, J, J_inv):
    dx = np.empty(11)
    add, bdd = _swing_accel(x[0], x[1], x[2], x[3], F_world, g, L, m)
    dx[0] = x[2]
    dx[1] = x[3]
    dx[2] = add
    dx[3] = bdd
    q = x[4:8]
    w = x[8:11]
    dx[4:8] = qrate(q, w)
    dx[8:11] = matvec(J_inv, tau_body - np.cross(w, matvec(J, w)))
    return dx


@njit(cache=True)
def _rk4_step(x, f_body, tau_body, dt, g, L, m, J, J_inv):
    """One RK4 step with thrusts held constant; force re-rotated at each stage."""
    k1 = _deriv(x, matvec(rotmat(x[4:8]), f_body), tau_body, g, L, m, J, J_inv)
    x2 = x + 0.5 * dt * k1
    k2 = _deriv(x2, matvec(rotmat(x2[4:8]), f_body), tau_body, g, L, m, J, J_inv)
    x3 = x + 0.5 * dt * k2
    k3 = _deriv(x3, matvec(rotmat(x3[4:8]), f_body), tau_body, g, L, m, J, J_inv)
    x4 = x + dt * k3
    k4 = _deriv(x4, matvec(rotmat(x4[4:8]), f_body), tau_body, g, L, m, J, J_inv)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    out[4:8] = qnormalize(out[4:8])
    return out


@njit(cache=True)
def _rollout(x, f_body, tau_body, n_steps, dt, g, L, m, J, J_inv):
    """Rows 0..n of a constant-thrust run; stops early (short array) on a bad state."""
    out = np.empty((n_steps + 1, x.shape[0]))
    out[0] = x
    for k in range(n_steps):
        x = _rk4_step(x, f_body, tau_body, dt, g, L, m, J, J_inv)
        if not np.all(np.isfinite(x)) or np.cos(x[1]) < 1e-9:
            return out[:k + 1]
        out[k + 1] = x
    return out


@njit(cache=True)
def _total_energy(x, g, L, m, J):
    cb = np.cos(x[1])
    kin_swing = 0.5 * m * L * L * (cb * cb * x[2] * x[2] + x[3] * x[3])
    w = x[8:11]
    kin_rot = 0.5 * np.dot(w, matvec(J, w))
    z = -L * np.cos(x[0]) * cb
    return kin_swing + kin_rot + m * g * (z + L)


# ---------------------------------------------------------------- public API


def cable_direction(alpha, beta):
    """Unit vector from the anchor to the platform; (0, 0, -1) at rest."""
    return _cable_direction(float(alpha), float(beta))


def cable_jacobian(alpha, beta, L):
    return _cable_jacobian(float(alpha), float(beta), float(L))


def mass_matrix(params, alpha, beta):
    jac = cable_jacobian(alpha, beta, params.L)
    return params.m * (jac.T @ jac)


def bob_position(params, state):
    return params.L * cable_direction(state.alpha, state.beta)


def _check_thrusts(params, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (params.n_rotors,):
        raise ValueError(f"expected {params.n_rotors} thrusts, got shape {u.shape}")
    if not np.all(np.isfinite(u)) or np.any(u < 0) or np.any(u > params.u_max):
        raise ValueError(f"thrusts outside [0, u_max]: {u}")
    return u


def rotor_wrench(params, q_WB, u):
    """World-frame force and body-frame torque produced by thrusts ``u``."""
    u = _check_thrusts(params, u)
    f_body = np.zeros(3)
    tau = np.zeros(3)
    for ui, r in zip(u, params.rotors):
        f_body += ui * r.axis
        tau += ui * (np.cross(r.position, r.axis) + r.kappa * r.sigma * r.axis)
    return Wrench(rotmat(np.asarray(q_WB, dtype=float)) @ f_body, tau)


def _check_chart(params, beta):
    if abs(beta) >= math.pi / 2:
        raise ChartSingularityError(f"|beta|={abs(beta):.6g} reached the chart singularity")


def eom(params, state, wrench):
    """Time derivative of ``state`` under the external ``wrench``."""
    _check_chart(params, state.beta)
    if abs(state.beta) >= params.beta_limit:
        log.debug("beta=%g outside workspace limit %g", state.beta, params.beta_limit)
    dx = _deriv(state.to_vector(), wrench.F, wrench.tau, *params.kernel_args())
    return StateDerivative(dx[0], dx[1], dx[2], dx[3], dx[4:8].copy(), dx[8:11].copy())


def step_rk4(params, state, u):
    """Advance ``state`` by ``params.dt`` holding thrusts ``u`` constant."""
    u = _check_thrusts(params, u)
    _check_chart(params, state.beta)
    wb = params.body_wrench_matrix @ u
    x = _rk4_step(state.to_vector(), wb[:3], wb[3:], params.dt, *params.kernel_args())
    if not np.all(np.isfinite(x)):
        raise SimulationDiverged(f"non-finite state after step at t={state.t}")
    return SimState.from_vector(x, state.t + params.dt)


def rollout(params, state, u, n_steps):
    """State vectors (n_steps + 1 rows) of a run with thrusts ``u`` held throughout."""
    u = _check_thrusts(params, u)
    _check_chart(params, state.beta)
    wb = params.body_wrench_matrix @ u
    xs = _rollout(state.to_vector(), wb[:3], wb[3:], int(n_steps), params.dt, *params.kernel_args())
    if xs.shape[0] < n_steps + 1:
        raise SimulationDiverged(f"state left the chart or diverged at t={state.t + (xs.shape[0] - 1) * params.dt:.4g}")
    return xs


def total_energy(params, state):
    """Swing kinetic + attitude kinetic + potential energy, zero at rest."""
    return _total_energy(state.to_vector(), params.g, params.L, params.m, params.J)
