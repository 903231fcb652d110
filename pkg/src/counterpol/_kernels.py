"""Compiled episode loop used by ``rollout.sample_episodes``.

Mirrors the numpy dynamics in ``envs`` and the network forward pass in
``policy`` one episode at a time; the tests cross-check the two paths.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

CARTPOLE, ACROBOT, PENDULUM = 0, 1, 2
HEAD_CATEGORICAL, HEAD_GAUSSIAN = 0, 1

_LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def _cartpole(s, a, ns):
    gravity = 9.8
    masspole = 0.1
    total_mass = 1.1
    length = 0.5
    polemass_length = masspole * length
    tau = 0.02
    x, x_dot, theta, theta_dot = s[0], s[1], s[2], s[3]
    force = 10.0 if a == 1 else -10.0
    costheta = math.cos(theta)
    sintheta = math.sin(theta)
    temp = (force + polemass_length * theta_dot**2 * sintheta) / total_mass
    thetaacc = (gravity * sintheta - costheta * temp) / (
        length * (4.0 / 3.0 - masspole * costheta**2 / total_mass)
    )
    xacc = temp - polemass_length * thetaacc * costheta / total_mass
    ns[0] = x + tau * x_dot
    ns[1] = x_dot + tau * xacc
    ns[2] = theta + tau * theta_dot
    ns[3] = theta_dot + tau * thetaacc
    term = abs(ns[0]) > 2.4 or abs(ns[2]) > 12 * 2 * math.pi / 360
    return 1.0, term


@njit(cache=True)
def _acrobot_dsdt(s, torque, out):
    m1 = 1.0
    m2 = 1.0
    l1 = 1.0
    lc1 = 0.5
    lc2 = 0.5
    i1 = 1.0
    i2 = 1.0
    g = 9.8
    theta1, theta2, dtheta1, dtheta2 = s[0], s[1], s[2], s[3]
    d1 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * math.cos(theta2)) + i1 + i2
    d2 = m2 * (lc2**2 + l1 * lc2 * math.cos(theta2)) + i2
    phi2 = m2 * lc2 * g * math.cos(theta1 + theta2 - math.pi / 2.0)
    phi1 = (
        -m2 * l1 * lc2 * dtheta2**2 * math.sin(theta2)
        - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * math.sin(theta2)
        + (m1 * lc1 + m2 * l1) * g * math.cos(theta1 - math.pi / 2)
        + phi2
    )
    ddtheta2 = (
        torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1**2 * math.sin(theta2) - phi2
    ) / (m2 * lc2**2 + i2 - d2**2 / d1)
    ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
    out[0] = dtheta1
    out[1] = dtheta2
    out[2] = ddtheta1
    out[3] = ddtheta2


@njit(cache=True)
def _wrap(x, low, high):
    diff = high - low
    while x > high:
        x = x - diff
    while x < low:
        x = x + diff
    return x


@njit(cache=True)
def _acrobot(s, a, ns):
    torque = float(a) - 1.0
    dt = 0.2
    dt2 = dt / 2.0
    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    tmp = np.empty(4)
    _acrobot_dsdt(s, torque, k1)
    for i in range(4):
        tmp[i] = s[i] + dt2 * k1[i]
    _acrobot_dsdt(tmp, torque, k2)
    for i in range(4):
        tmp[i] = s[i] + dt2 * k2[i]
    _acrobot_dsdt(tmp, torque, k3)
    for i in range(4):
        tmp[i] = s[i] + dt * k3[i]
    _acrobot_dsdt(tmp, torque, k4)
    for i in range(4):
        ns[i] = s[i] + dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i])
    ns[0] = _wrap(ns[0], -math.pi, math.pi)
    ns[1] = _wrap(ns[1], -math.pi, math.pi)
    ns[2] = min(max(ns[2], -4 * math.pi), 4 * math.pi)
    ns[3] = min(max(ns[3], -9 * math.pi), 9 * math.pi)
    term = -math.cos(ns[0]) - math.cos(ns[1] + ns[0]) > 1.0
    return (0.0 if term else -1.0), term


@njit(cache=True)
def _pendulum(s, u, ns):
    th, thdot = s[0], s[1]
    u = min(max(u, -2.0), 2.0)
    th_norm = ((th + np.pi) % (2 * np.pi)) - np.pi
    cost = th_norm**2 + 0.1 * thdot**2 + 0.001 * u**2
    newthdot = thdot + (3 * 10.0 / (2 * 1.0) * math.sin(th) + 3.0 / (1.0 * 1.0**2) * u) * 0.05
    newthdot = min(max(newthdot, -8.0), 8.0)
    ns[0] = th + newthdot * 0.05
    ns[1] = newthdot
    return -cost, False


@njit(cache=True)
def _observe(env, s, obs):
    if env == CARTPOLE:
        for i in range(4):
            obs[i] = s[i]
    elif env == ACROBOT:
        obs[0] = math.cos(s[0])
        obs[1] = math.sin(s[0])
        obs[2] = math.cos(s[1])
        obs[3] = math.sin(s[1])
        obs[4] = s[2]
        obs[5] = s[3]
    else:
        obs[0] = math.cos(s[0])
        obs[1] = math.sin(s[0])
        obs[2] = s[1]


@njit(cache=True)
def _mlp(theta, sizes, x):
    h = x
    off = 0
    nl = sizes.shape[0] - 1
    for layer in range(nl):
        fi = sizes[layer]
        fo = sizes[layer + 1]
        y = np.zeros(fo)
        for i in range(fi):
            hi = h[i]
            base = off + i * fo
            for j in range(fo):
                y[j] += hi * theta[base + j]
        off += fi * fo
        for j in range(fo):
            y[j] += theta[off + j]
        off += fo
        if layer < nl - 1:
            for j in range(fo):
                y[j] = math.tanh(y[j])
        h = y
    return h, off


@njit(cache=True)
def run_episodes(env, head, theta, sizes, init_states, noise, horizon,
                 obs_buf, act_buf, rew_buf, lp_buf, lengths, terminated,
                 act_low, act_high):
    n = init_states.shape[0]
    obs_dim = obs_buf.shape[2]
    s = np.empty(init_states.shape[1])
    ns = np.empty(init_states.shape[1])
    obs = np.empty(obs_dim)
    for ep in range(n):
        for i in range(s.shape[0]):
            s[i] = init_states[ep, i]
        lengths[ep] = 0
        terminated[ep] = False
        for t in range(horizon):
            _observe(env, s, obs)
            out, off = _mlp(theta, sizes, obs)
            if head == HEAD_CATEGORICAL:
                zmax = out[0]
                for j in range(1, out.shape[0]):
                    zmax = max(zmax, out[j])
                tot = 0.0
                for j in range(out.shape[0]):
                    tot += math.exp(out[j] - zmax)
                lse = math.log(tot)
                u = noise[ep, t, 0]
                cdf = 0.0
                a = out.shape[0] - 1
                for j in range(out.shape[0]):
                    cdf += math.exp(out[j] - zmax - lse)
                    if cdf > u:
                        a = j
                        break
                lp = out[a] - zmax - lse
                act_buf[ep, t, 0] = a
                if env == CARTPOLE:
                    r, term = _cartpole(s, a, ns)
                else:
                    r, term = _acrobot(s, a, ns)
            else:
                lp = 0.0
                for j in range(out.shape[0]):
                    std = math.exp(theta[off + j])
                    aj = out[j] + std * noise[ep, t, j]
                    act_buf[ep, t, j] = aj
                    z = (aj - out[j]) / std
                    lp += -0.5 * z * z - theta[off + j] - 0.5 * _LOG_2PI
                u = min(max(act_buf[ep, t, 0], act_low), act_high)
                r, term = _pendulum(s, u, ns)
            for i in range(obs_dim):
                obs_buf[ep, t, i] = obs[i]
            rew_buf[ep, t] = r
            lp_buf[ep, t] = lp
            lengths[ep] = t + 1
            for i in range(s.shape[0]):
                s[i] = ns[i]
            if term:
                terminated[ep] = True
                break
