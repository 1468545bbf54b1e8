"""Scalar-first unit quaternion helpers (w, x, y, z), Hamilton convention.

All functions are numba-compiled so they can be called from the simulation
kernels as well as from plain Python.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def qmul(p, q):
    pw, px, py, pz = p[0], p[1], p[2], p[3]
    qw, qx, qy, qz = q[0], q[1], q[2], q[3]
    out = np.empty(4)
    out[0] = pw * qw - px * qx - py * qy - pz * qz
    out[1] = pw * qx + px * qw + py * qz - pz * qy
    out[2] = pw * qy - px * qz + py * qw + pz * qx
    out[3] = pw * qz + px * qy - py * qx + pz * qw
    return out


@njit(cache=True)
def qconj(q):
    out = np.empty(4)
    out[0] = q[0]
    out[1] = -q[1]
    out[2] = -q[2]
    out[3] = -q[3]
    return out


@njit(cache=True)
def qnormalize(q):
    return q / np.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])


@njit(cache=True)
def rotmat(q):
    """Rotation matrix R such that v_world = R @ v_body for q = q_WB."""
    w, x, y, z = q[0], q[1], q[2], q[3]
    R = np.empty((3, 3))
    R[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[0, 1] = 2.0 * (x * y - w * z)
    R[0, 2] = 2.0 * (x * z + w * y)
    R[1, 0] = 2.0 * (x * y + w * z)
    R[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[1, 2] = 2.0 * (y * z - w * x)
    R[2, 0] = 2.0 * (x * z - w * y)
    R[2, 1] = 2.0 * (y * z + w * x)
    R[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


@njit(cache=True)
def qrate(q, omega):
    """q_dot = 0.5 * q (x) (0, omega), omega in the body frame."""
    w = np.empty(4)
    w[0] = 0.0
    w[1] = omega[0]
    w[2] = omega[1]
    w[3] = omega[2]
    return 0.5 * qmul(q, w)


@njit(cache=True)
def yaw_quat(yaw):
    out = np.zeros(4)
    out[0] = np.cos(0.5 * yaw)
    out[3] = np.sin(0.5 * yaw)
    return out


@njit(cache=True)
def error_quat(q_ref, q):
    """q_e = q_ref^-1 (x) q with the scalar part made non-negative."""
    qe = qmul(qconj(q_ref), q)
    if qe[0] < 0.0:
        qe = -qe
    return qe


def from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    s = np.sin(0.5 * angle)
    return np.array([np.cos(0.5 * angle), *(s * axis)])


@njit(cache=True)
def matvec(A, v):
    """A @ v without a BLAS call; much faster for the tiny matrices used here."""
    n, k = A.shape
    out = np.zeros(n)
    for i in range(n):
        s = 0.0
        for j in range(k):
            s += A[i, j] * v[j]
        out[i] = s
    return out


@njit(cache=True)
def matTvec(A, v):
    """A.T @ v without a BLAS call."""
    n, k = A.shape
    out = np.zeros(k)
    for i in range(n):
        for j in range(k):
            out[j] += A[i, j] * v[i]
    return out
