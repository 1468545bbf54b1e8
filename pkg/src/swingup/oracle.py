"""Independent reference computations and the self-check suite.

Nothing here reuses the code path it verifies: the period oracle integrates
the elliptic period integral instead of the equations of motion, the
advantage oracle sums the definition directly, the energy oracle works from
Cartesian bob kinematics, and the gradient oracle differences the loss.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .control import Gains, allocate, allocation_tables
from .learn.mlp import init_mlp
from .learn.policy import init_policy, log_prob
from .learn.ppo import Minibatch, RolloutBuffer, gae, ppo_loss
from .model import ModelParams, SimState, Wrench, eom, rollout, step_rk4

CHECKS = ("energy", "period", "allocation", "gradient", "gae")


# ---------------------------------------------------------------- oracles


def agm(a, b, tol=4e-16, max_iter=64):
    """Arithmetic-geometric mean. Converges quadratically; the cap guards
    against the two means trading the last bit forever."""
    for _ in range(max_iter):
        if abs(a - b) <= tol * max(abs(a), abs(b)):
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return 0.5 * (a + b)


def ellipk(k):
    """Complete elliptic integral of the first kind, modulus k."""
    return math.pi / (2.0 * agm(1.0, math.sqrt(1.0 - k * k)))


def planar_period(g, L, amplitude):
    """Exact period of a planar pendulum released from rest at ``amplitude``."""
    if not 0 < amplitude < math.pi:
        raise ValueError(f"amplitude must lie in (0, pi), got {amplitude}")
    return 4.0 * math.sqrt(L / g) * ellipk(math.sin(0.5 * amplitude))


def period_quadrature(g, L, amplitude, n=200):
    """Midpoint rule on the regularised period integral (substituting sin(t/2) = k sin(phi))."""
    k = math.sin(0.5 * amplitude)
    h = 0.5 * math.pi / n
    phi = (np.arange(n) + 0.5) * h
    return 4.0 * math.sqrt(L / g) * h * float(np.sum(1.0 / np.sqrt(1.0 - (k * np.sin(phi)) ** 2)))


def finite_diff_gradient(f, x, h=1e-5):
    return finite_diff_gradient_inplace(f, np.array(x, dtype=float), h)


def brute_force_returns(rewards, values, dones, gamma, lam, last_value=0.0):
    """Advantages from the explicit sum A_t = sum_l (gamma*lam)^l * delta_{t+l}, cut at episode ends.

    Arrays are 1-D over time for a single environment.
    """
    T = len(rewards)
    nxt = [values[t + 1] if t + 1 < T else last_value for t in range(T)]
    adv = np.zeros(T)
    for t in range(T):
        total = 0.0
        coef = 1.0
        for s in range(t, T):
            delta = rewards[s] + gamma * nxt[s] * (1.0 - dones[s]) - values[s]
            total += coef * delta
            if dones[s]:
                break
            coef *= gamma * lam
        adv[t] = total
    return adv


def cartesian_energy(params, x):
    """Energy from the bob's Cartesian position and velocity plus body spin."""
    a, b, ad, bd = x[0], x[1], x[2], x[3]
    L = params.L
    pos_z = -L * math.cos(a) * math.cos(b)
    vel = L * np.array(
        [
            math.cos(b) * bd,
            -math.cos(a) * math.cos(b) * ad + math.sin(a) * math.sin(b) * bd,
            math.sin(a) * math.cos(b) * ad + math.cos(a) * math.sin(b) * bd,
        ]
    )
    w = np.asarray(x[8:11])
    return 0.5 * params.m * float(vel @ vel) + 0.5 * float(w @ params.J @ w) + params.m * params.g * (pos_z + L)


def cartesian_energies(params, X):
    """``cartesian_energy`` for every row of a (T, 11) array."""
    a, b, ad, bd = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
    L = params.L
    vel = L * np.stack(
        [
            np.cos(b) * bd,
            -np.cos(a) * np.cos(b) * ad + np.sin(a) * np.sin(b) * bd,
            np.sin(a) * np.cos(b) * ad + np.cos(a) * np.sin(b) * bd,
        ],
        axis=1,
    )
    w = X[:, 8:11]
    spin = 0.5 * np.einsum("ti,ij,tj->t", w, params.J, w)
    return 0.5 * params.m * np.sum(vel * vel, axis=1) + spin + params.m * params.g * (L - L * np.cos(a) * np.cos(b))


def energy_audit(params, trajectory):
    """Max relative energy drift max_t |E_t - E_0| / max(|E_0|, m g L).

    ``trajectory`` is a sequence of SimStates or state vectors, or a (T, 11) array.
    """
    if isinstance(trajectory, np.ndarray):
        X = trajectory
    else:
        X = np.array([s.to_vector() if isinstance(s, SimState) else np.asarray(s) for s in trajectory])
    if X.size == 0:
        return 0.0
    E = cartesian_energies(params, X.reshape(-1, X.shape[-1]))
    return float(np.max(np.abs(E - E[0])) / max(abs(E[0]), params.m * params.g * params.L))


def euler_trajectory(params, state, n_steps):
    """Unactuated explicit-Euler run with step ``params.dt`` (comparison baseline)."""
    out = [state]
    x = state.to_vector()
    zero = Wrench.zero()
    for k in range(n_steps):
        dx = eom(params, SimState.from_vector(x), zero).as_vector()
        x = x + params.dt * dx
        x[4:8] /= np.linalg.norm(x[4:8])
        out.append(SimState.from_vector(x, (k + 1) * params.dt))
    return out


def rk4_trajectory(params, state, n_steps):
    out = [state]
    u = np.zeros(params.n_rotors)
    for _ in range(n_steps):
        state = step_rk4(params, state, u)
        out.append(state)
    return out


def measured_period(ts, alphas):
    """Mean spacing of same-direction zero crossings, linearly interpolated."""
    crossings = []
    for i in range(1, len(alphas)):
        if alphas[i - 1] < 0.0 <= alphas[i]:
            frac = -alphas[i - 1] / (alphas[i] - alphas[i - 1])
            crossings.append(ts[i - 1] + frac * (ts[i] - ts[i - 1]))
    if len(crossings) < 2:
        raise ValueError("trajectory too short to contain a full period")
    return float(np.mean(np.diff(crossings)))


def extrema(ts, xs):
    """Times and values of the local extrema of a sampled signal."""
    xs = np.asarray(xs)
    d = np.diff(xs)
    idx = np.nonzero(d[:-1] * d[1:] < 0)[0] + 1
    return np.asarray(ts)[idx], xs[idx]


def damping_from_extrema(values):
    """Damping ratio from successive half-period extrema of a decaying oscillation.

    Consecutive extrema shrink by exp(-pi*zeta/sqrt(1 - zeta^2)); the median
    over pairs is inverted for zeta.
    """
    v = np.abs(np.asarray(values, dtype=float))
    if v.size < 2:
        raise ValueError("need at least two extrema")
    d = float(np.median(np.log(v[:-1] / v[1:])))
    return d / math.sqrt(math.pi**2 + d * d)


def relative_gradient_error(analytic, numeric):
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


# ---------------------------------------------------------------- check suite


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str
    seconds: float = 0.0

    def to_dict(self):
        return asdict(self)


def check_energy(params, **_):
    p = params
    start = SimState(alpha=1.0, beta=0.3, alpha_dot=0.0, beta_dot=0.4, omega=[0.2, -0.1, 0.3])
    n = int(round(10.0 / p.dt))
    drift = energy_audit(p, rollout(p, start, np.zeros(p.n_rotors), n))
    return CheckResult("energy", drift < 1e-6, drift, 1e-6, f"RK4, 10 s at dt={p.dt:g}, relative drift {drift:.3e}")


def simulated_period(params, amplitude, duration):
    n = int(round(duration / params.dt))
    traj = rk4_trajectory(params, SimState(alpha=amplitude), n)
    return measured_period(np.array([s.t for s in traj]), np.array([s.alpha for s in traj]))


def check_period(params, **_):
    small = simulated_period(params, 0.01, 4.5 * 2 * math.pi * math.sqrt(params.L / params.g))
    ref_small = 2.0 * math.pi * math.sqrt(params.L / params.g)
    err_small = abs(small - ref_small) / ref_small
    large_ref = planar_period(params.g, params.L, 2.0)
    large = simulated_period(params, 2.0, 3.5 * large_ref)
    err_large = abs(large - large_ref) / large_ref
    ok = err_small < 1e-3 and err_large < 5e-3
    value = max(err_small / 1e-3, err_large / 5e-3)
    return CheckResult(
        "period", ok, value, 1.0,
        f"small-angle error {err_small:.2e} (tol 1e-3), 2 rad error {err_large:.2e} (tol 5e-3); value is worst error/tol",
    )


def random_interior_wrench(params, rng, fraction=0.5, tries=1000):
    """A body wrench whose unclamped allocation stays within fraction*u_max."""
    t = allocation_tables(params)
    for _ in range(tries):
        w = rng.normal(size=6) * np.array([4.0, 4.0, 4.0, 0.5, 0.5, 0.5]) * rng.uniform(0, 1)
        u = t.pinv @ w
        lift = max(0.0, float(np.max(-u[t.null > 0] / t.null[t.null > 0]))) if np.any(t.null > 0) else 0.0
        u = u + lift * t.null
        if np.all(u >= 0) and np.all(u <= fraction * t.u_max):
            return w
    raise RuntimeError("could not sample an interior wrench")


def check_allocation(params, seed=0, n=1000, **_):
    rng = np.random.default_rng([seed, 11])
    level = np.array([1.0, 0.0, 0.0, 0.0])
    zero = allocate(params, level, Wrench.zero())
    worst = 0.0
    saturated = 0
    for _ in range(n):
        w = random_interior_wrench(params, rng)
        rep = allocate(params, level, Wrench(w[:3], w[3:]))
        worst = max(worst, rep.residual)
        saturated += rep.saturated
    zero_ok = bool(np.all(zero.u.u == 0.0))
    ok = worst < 1e-6 and zero_ok and saturated == 0
    return CheckResult(
        "allocation", ok, worst, 1e-6,
        f"{n} interior wrenches, worst residual {worst:.2e}, {saturated} saturated, zero wrench -> zero thrust: {zero_ok}",
    )


def random_minibatch(policy, rng, n=32):
    obs = rng.normal(size=(n, policy.obs_dim))
    raw = rng.normal(size=(n, policy.act_dim)) * 0.8
    old = log_prob(policy, obs, raw) + rng.normal(scale=0.3, size=n)
    adv = rng.normal(size=n)
    ret = rng.normal(size=n)
    return Minibatch(obs, raw, old, adv, ret)


def gradient_errors(
    policy, value_net, batch, clip_eps=0.2, value_coef=0.5, entropy_coef=0.01, h=1e-5, max_entries=None, rng=None
):
    """Relative analytic-vs-central-difference error for every trainable tensor.

    With ``max_entries`` only that many randomly chosen entries of each larger
    tensor are differenced (the comparison uses the same entries).
    """
    _, grads, _ = ppo_loss(policy, value_net, batch, clip_eps, value_coef, entropy_coef)
    tensors = {**policy.tensors(), **value_net.tensors("v")}

    def f(_x):
        return ppo_loss(policy, value_net, batch, clip_eps, value_coef, entropy_coef, need_grad=False)[0]

    errors = {}
    for name, arr in tensors.items():
        if max_entries is None or arr.size <= max_entries:
            errors[name] = relative_gradient_error(grads[name], finite_diff_gradient_inplace(f, arr, h))
            continue
        rng = rng or np.random.default_rng(0)
        picks = rng.choice(arr.size, size=max_entries, replace=False)
        numeric = np.empty(max_entries)
        for j, flat_index in enumerate(picks):
            idx = np.unravel_index(flat_index, arr.shape)
            orig = arr[idx]
            arr[idx] = orig + h
            fp = f(arr)
            arr[idx] = orig - h
            fm = f(arr)
            arr[idx] = orig
            numeric[j] = (fp - fm) / (2.0 * h)
        errors[name] = relative_gradient_error(grads[name].reshape(-1)[picks], numeric)
    return errors


def finite_diff_gradient_inplace(f, arr, h=1e-5):
    """Central differences of f() with respect to the entries of ``arr``, perturbed in place."""
    grad = np.empty(arr.shape)
    for idx in np.ndindex(arr.shape):
        orig = arr[idx]
        arr[idx] = orig + h
        fp = f(arr)
        arr[idx] = orig - h
        fm = f(arr)
        arr[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad


def check_gradient(params=None, seed=0, hidden=(64, 64), n_batches=5, max_entries=None, **_):
    rng = np.random.default_rng([seed, 12])
    worst = 0.0
    worst_name = ""
    for _ in range(n_batches):
        policy = init_policy(rng, 13, 2, hidden)
        # move away from the near-zero output initialisation
        for W in policy.mean.weights:
            W += rng.normal(scale=0.3, size=W.shape)
        policy.log_std[:] = rng.uniform(-1.0, 0.5, size=policy.act_dim)
        value_net = init_mlp(rng, [13, *hidden, 1])
        batch = random_minibatch(policy, rng)
        for name, err in gradient_errors(policy, value_net, batch, max_entries=max_entries, rng=rng).items():
            if err > worst:
                worst, worst_name = err, name
    coverage = "every entry" if max_entries is None else f"up to {max_entries} entries"
    return CheckResult(
        "gradient", worst < 1e-4, worst, 1e-4, f"{n_batches} minibatches of 32, {coverage} per tensor, worst tensor {worst_name}"
    )


def check_gae(seed=0, n_buffers=100, T=50, **_):
    rng = np.random.default_rng([seed, 13])
    worst = 0.0
    for _ in range(n_buffers):
        E = int(rng.integers(1, 4))
        buf = RolloutBuffer.empty(T, E, 1, 1)
        buf.reward[:] = rng.normal(size=(T, E))
        buf.value[:] = rng.normal(size=(T, E))
        buf.done[:] = rng.random((T, E)) < 0.1
        buf.last_value[:] = rng.normal(size=E)
        gamma, lam = rng.uniform(0.8, 1.0), rng.uniform(0.0, 1.0)
        adv, _ = gae(buf, gamma, lam)
        for e in range(E):
            ref = brute_force_returns(buf.reward[:, e], buf.value[:, e], buf.done[:, e], gamma, lam, buf.last_value[e])
            worst = max(worst, float(np.max(np.abs(adv[:, e] - ref))))
    return CheckResult("gae", worst < 1e-10, worst, 1e-10, f"{n_buffers} random buffers, T={T}, random episode ends")


_RUNNERS = {
    "energy": check_energy,
    "period": check_period,
    "allocation": check_allocation,
    "gradient": check_gradient,
    "gae": check_gae,
}


def run_checks(params=None, gains=None, seed=0, only=None, hidden=(64, 64)):
    params = params or ModelParams()
    gains = gains or Gains()
    names = list(CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in _RUNNERS]
    if unknown:
        raise ValueError(f"unknown check(s): {', '.join(unknown)}; choose from {', '.join(CHECKS)}")
    results = []
    for name in names:
        t0 = time.perf_counter()
        res = _RUNNERS[name](params=params, seed=seed, hidden=hidden)
        res.seconds = round(time.perf_counter() - t0, 3)
        results.append(res)
    return results
