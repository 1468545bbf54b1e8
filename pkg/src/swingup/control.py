"""Hierarchical controller: swing PD -> attitude PD -> thrust allocation.

The outer loop turns a swing-angle reference into a world-frame force that is
tangent to the cable sphere. It feedback-linearises the swing so that, away
from saturation, the angles obey ``q_ddot = kp*(q_ref - q) + kd*(q_dot_ref - q_dot)``.
The inner loop holds the platform level at the commanded heading. The
allocator maps the resulting body wrench to non-negative rotor thrusts.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize
from numba import njit

from .model import (
    ChartSingularityError,
    SimState,
    Wrench,
    _cable_jacobian,
    rotor_wrench,
)
from .quaternion import error_quat, matTvec, matvec, rotmat, yaw_quat

log = logging.getLogger(__name__)

DAMPING = 1e-6
# clamping changes smaller than this (relative to u_max) are round-off, not saturation
SAT_TOL = 1e-12


class RankDeficientLayout(ValueError):
    pass


@dataclass
class TaskReference:
    alpha_ref: float = 0.0
    beta_ref: float = 0.0
    alpha_dot_ref: float = 0.0
    beta_dot_ref: float = 0.0
    yaw_ref: float = 0.0

    def as_array(self):
        return np.array([self.alpha_ref, self.beta_ref, self.alpha_dot_ref, self.beta_dot_ref, self.yaw_ref])

    @classmethod
    def from_state(cls, state):
        return cls(state.alpha, state.beta, 0.0, 0.0, 0.0)


@dataclass
class Gains:
    kp_sw: float = 6.0
    kd_sw: float = 4.0
    kp_att: float = 10.0
    kd_att: float = 2.0

    def __post_init__(self):
        for name in ("kp_sw", "kd_sw", "kp_att", "kd_att"):
            value = float(getattr(self, name))
            if not (np.isfinite(value) and value >= 0):
                raise ValueError(f"gain {name} must be finite and non-negative, got {value}")
            setattr(self, name, value)
        if self.kp_att > 0 and self.kd_att <= 0:
            raise ValueError("kd_att must be positive when kp_att is positive")

    def as_array(self):
        return np.array([self.kp_sw, self.kd_sw, self.kp_att, self.kd_att])

    def swing_damping_ratio(self):
        """Damping ratio of the linearised, unsaturated closed-loop swing."""
        return self.kd_sw / (2.0 * np.sqrt(self.kp_sw))


@dataclass
class RotorCommand:
    u: np.ndarray


@dataclass
class AllocationReport:
    u: RotorCommand
    achieved: Wrench
    saturated: bool
    residual: float


@dataclass(frozen=True)
class AllocationTables:
    B: np.ndarray  # 6xN body wrench map
    pinv: np.ndarray  # Nx6 damped, refined right inverse
    null: np.ndarray  # non-negative null-space direction, zeros if none exists
    u_max: np.ndarray


def allocation_matrix(params):
    """6xN matrix whose column i is (a_i, p_i x a_i + kappa_i*sigma_i*a_i)."""
    B = params.body_wrench_matrix
    rank = np.linalg.matrix_rank(B)
    if rank < 6:
        raise RankDeficientLayout(f"allocation matrix has rank {rank} < 6")
    return B


def damped_pinv(B, eps=DAMPING, refine=1):
    """Tikhonov right inverse of B with iterative refinement.

    The damped solution alone leaves a residual of order eps/sigma_min^2;
    each refinement sweep squares that factor.
    """
    n = B.shape[1]
    P = np.linalg.solve(B.T @ B + eps * np.eye(n), B.T)
    for _ in range(refine):
        P = P @ (2.0 * np.eye(B.shape[0]) - B @ P)
    return P


def positive_null_vector(B):
    """A null-space vector of B with all entries > 0, scaled to max 1, or zeros."""
    N = scipy.linalg.null_space(B)
    if N.size == 0:
        return np.zeros(B.shape[1])
    ones = np.ones(B.shape[1])
    n = N @ (N.T @ ones)
    if n.min() <= 0:
        # maximise the smallest entry over the null space
        k = N.shape[1]
        c = np.zeros(k + 1)
        c[-1] = -1.0
        A_ub = np.hstack([-N, np.ones((N.shape[0], 1))])
        res = scipy.optimize.linprog(
            c, A_ub=A_ub, b_ub=np.zeros(N.shape[0]), bounds=[(-1, 1)] * k + [(None, None)], method="highs"
        )
        if not res.success or res.x[-1] <= 1e-9:
            log.warning("rotor layout has no positive internal-force mode; thrusts will be clamped only")
            return np.zeros(B.shape[1])
        n = N @ res.x[:k]
    return n / n.max()


def allocation_tables(params):
    tables = params.__dict__.get("_allocation_tables")
    if tables is None:
        B = allocation_matrix(params)
        tables = AllocationTables(B, damped_pinv(B), positive_null_vector(B), params.u_max.copy())
        params.__dict__["_allocation_tables"] = tables
    return tables


# ---------------------------------------------------------------- kernels


@njit(cache=True)
def _swing_force(x, ref, kp, kd, g, L, m):
    """World force that produces q_ddot = v on the cable sphere (tangent to it)."""
    alpha, beta, ad, bd = x[0], x[1], x[2], x[3]
    cb = np.cos(beta)
    sb = np.sin(beta)
    if cb < 1e-9:
        raise ChartSingularityError("|beta| >= pi/2: swing mass matrix is singular")
    va = kp * (ref[0] - alpha) + kd * (ref[2] - ad)
    vb = kp * (ref[1] - beta) + kd * (ref[3] - bd)
    mL2 = m * L * L
    Qa = mL2 * (cb * cb * va - 2.0 * sb * cb * ad * bd) + m * g * L * np.sin(alpha) * cb
    Qb = mL2 * (vb + sb * cb * ad * ad) + m * g * L * np.cos(alpha) * sb
    jac = _cable_jacobian(alpha, beta, L)
    return jac[:, 0] * (Qa / (L * L * cb * cb)) + jac[:, 1] * (Qb / (L * L))


@njit(cache=True)
def _attitude_torque(q, omega, yaw_ref, kp, kd):
    qe = error_quat(yaw_quat(yaw_ref), q)
    return -kp * qe[1:4] - kd * omega


@njit(cache=True)
def _allocate(F_world, tau_body, q, B, pinv, null, u_max):
    w = np.empty(6)
    w[0:3] = matTvec(rotmat(q), F_world)
    w[3:6] = tau_body
    u = matvec(pinv, w)
    # lift along the internal-force mode until every thrust is non-negative
    lift = 0.0
    for i in range(u.shape[0]):
        if null[i] > 0.0 and -u[i] / null[i] > lift:
            lift = -u[i] / null[i]
    u = u + lift * null
    saturated = False
    scale = 1.0
    for i in range(u.shape[0]):
        if u[i] > u_max[i] and u_max[i] / u[i] < scale:
            scale = u_max[i] / u[i]
    if scale < 1.0:
        u = u * scale
        saturated = True
    for i in range(u.shape[0]):
        if u[i] < 0.0:
            if u[i] < -SAT_TOL * u_max[i]:
                saturated = True
            u[i] = 0.0
        elif u[i] > u_max[i]:
            if u[i] > u_max[i] * (1.0 + SAT_TOL):
                saturated = True
            u[i] = u_max[i]
    achieved = matvec(B, u)
    residual = np.sqrt(np.sum((achieved - w) ** 2))
    return u, saturated, residual, achieved


@njit(cache=True)
def _controller(x, ref, gains, g, L, m, B, pinv, null, u_max):
    F = _swing_force(x, ref, gains[0], gains[1], g, L, m)
    tau = _attitude_torque(x[4:8], x[8:11], ref[4], gains[2], gains[3])
    return _allocate(F, tau, x[4:8], B, pinv, null, u_max)


# ---------------------------------------------------------------- public API


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("controller inputs must be finite")


def swing_outer_loop(params, gains, state, ref):
    """Desired world force for the swing loop; always orthogonal to the cable."""
    x = state.to_vector()
    r = ref.as_array()
    _check_finite(x, r)
    return _swing_force(x, r, gains.kp_sw, gains.kd_sw, params.g, params.L, params.m)


def attitude_inner_loop(gains, q_WB, omega, yaw_ref):
    """Body torque holding the platform level at heading ``yaw_ref``."""
    q = np.asarray(q_WB, dtype=float)
    w = np.asarray(omega, dtype=float)
    _check_finite(q, w, np.array([yaw_ref]))
    return _attitude_torque(q, w, float(yaw_ref), gains.kp_att, gains.kd_att)


def _report(params, q, u, saturated, residual):
    return AllocationReport(RotorCommand(u), rotor_wrench(params, q, u), bool(saturated), float(residual))


def allocate(params, q_WB, wrench_des):
    """Thrusts realising ``wrench_des`` (world force, body torque) within rotor limits."""
    t = allocation_tables(params)
    q = np.asarray(q_WB, dtype=float)
    _check_finite(q, wrench_des.F, wrench_des.tau)
    u, saturated, residual, _ = _allocate(wrench_des.F, wrench_des.tau, q, t.B, t.pinv, t.null, t.u_max)
    return _report(params, q, u, saturated, residual)


def controller_args(params, gains):
    t = allocation_tables(params)
    return (gains.as_array(), params.g, params.L, params.m, t.B, t.pinv, t.null, t.u_max)


def controller_step(params, gains, state, ref):
    x = state.to_vector()
    r = ref.as_array()
    _check_finite(x, r)
    u, saturated, residual, _ = _controller(x, r, *controller_args(params, gains))
    report = _report(params, state.q_WB, u, saturated, residual)
    return report.u, report
