"""Classic-control environments: CartPole, Acrobot and Pendulum.

Dynamics constants follow the Gymnasium classic-control implementations.
Randomness only enters through ``reset``; transitions are deterministic.
All dynamics are written over a leading batch axis so that several episodes
can be stepped in lockstep; the single-episode ``step`` is the batch routine
applied to a batch of one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np


class EnvId(str, Enum):
    CARTPOLE = "cartpole"
    ACROBOT = "acrobot"
    PENDULUM = "pendulum"


@dataclass(frozen=True)
class Discrete:
    n: int


@dataclass(frozen=True)
class Box:
    low: float
    high: float
    dim: int


@dataclass(frozen=True)
class EnvSpec:
    id: EnvId
    obs_dim: int
    action_space: Discrete | Box
    max_episode_steps: int
    known_max_return: float | None = None
    state_dim: int = 0

    @property
    def discrete(self) -> bool:
        return isinstance(self.action_space, Discrete)


@dataclass(frozen=True)
class EnvState:
    internal_state: np.ndarray
    step_count: int = 0


class StepResult(NamedTuple):
    observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool


class InvalidActionError(ValueError):
    pass


CARTPOLE = EnvSpec(EnvId.CARTPOLE, 4, Discrete(2), 500, 500.0, state_dim=4)
ACROBOT = EnvSpec(EnvId.ACROBOT, 6, Discrete(3), 500, None, state_dim=4)
PENDULUM = EnvSpec(EnvId.PENDULUM, 3, Box(-2.0, 2.0, 1), 200, None, state_dim=2)

SPECS = {spec.id.value: spec for spec in (CARTPOLE, ACROBOT, PENDULUM)}


def make(env_id: str | EnvId) -> EnvSpec:
    """Look up an environment spec by id (``cartpole | acrobot | pendulum``)."""
    key = env_id.value if isinstance(env_id, EnvId) else str(env_id).lower()
    try:
        return SPECS[key]
    except KeyError:
        raise ValueError(
            f"unknown environment {env_id!r}; valid ids: {', '.join(SPECS)}"
        ) from None


def max_return(spec: EnvSpec) -> float | None:
    return spec.known_max_return


def make_rng(seed: int) -> np.random.Generator:
    # PCG64 wants a non-negative seed; fold negatives into the unsigned range
    return np.random.default_rng(int(seed) % (1 << 64))


# ---------------------------------------------------------------------------
# CartPole
# ---------------------------------------------------------------------------

CP_GRAVITY = 9.8
CP_MASS_CART = 1.0
CP_MASS_POLE = 0.1
CP_TOTAL_MASS = CP_MASS_CART + CP_MASS_POLE
CP_HALF_LENGTH = 0.5
CP_POLEMASS_LENGTH = CP_MASS_POLE * CP_HALF_LENGTH
CP_FORCE_MAG = 10.0
CP_TAU = 0.02
CP_THETA_THRESHOLD = 12 * 2 * math.pi / 360
CP_X_THRESHOLD = 2.4


def _cartpole_step(states: np.ndarray, actions: np.ndarray):
    x, x_dot, theta, theta_dot = states.T
    force = np.where(actions == 1, CP_FORCE_MAG, -CP_FORCE_MAG)
    costheta = np.cos(theta)
    sintheta = np.sin(theta)
    temp = (force + CP_POLEMASS_LENGTH * theta_dot**2 * sintheta) / CP_TOTAL_MASS
    thetaacc = (CP_GRAVITY * sintheta - costheta * temp) / (
        CP_HALF_LENGTH * (4.0 / 3.0 - CP_MASS_POLE * costheta**2 / CP_TOTAL_MASS)
    )
    xacc = temp - CP_POLEMASS_LENGTH * thetaacc * costheta / CP_TOTAL_MASS
    # explicit Euler: positions use the old velocities
    nxt = np.stack(
        [
            x + CP_TAU * x_dot,
            x_dot + CP_TAU * xacc,
            theta + CP_TAU * theta_dot,
            theta_dot + CP_TAU * thetaacc,
        ],
        axis=1,
    )
    terminated = (np.abs(nxt[:, 0]) > CP_X_THRESHOLD) | (
        np.abs(nxt[:, 2]) > CP_THETA_THRESHOLD
    )
    rewards = np.ones(len(states))
    return nxt, rewards, terminated


def _cartpole_obs(states: np.ndarray) -> np.ndarray:
    return states.copy()


def _cartpole_reset(rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-0.05, 0.05, size=4)


# ---------------------------------------------------------------------------
# Acrobot ("book" dynamics, RK4 over one 0.2 s step)
# ---------------------------------------------------------------------------

AC_DT = 0.2
AC_LINK_LENGTH_1 = 1.0
AC_LINK_MASS_1 = 1.0
AC_LINK_MASS_2 = 1.0
AC_LINK_COM_POS_1 = 0.5
AC_LINK_COM_POS_2 = 0.5
AC_LINK_MOI = 1.0
AC_MAX_VEL_1 = 4 * math.pi
AC_MAX_VEL_2 = 9 * math.pi
AC_TORQUES = np.array([-1.0, 0.0, 1.0])
AC_GRAVITY = 9.8


def _acrobot_dsdt(s: np.ndarray, torque: np.ndarray) -> np.ndarray:
    m1, m2 = AC_LINK_MASS_1, AC_LINK_MASS_2
    l1 = AC_LINK_LENGTH_1
    lc1, lc2 = AC_LINK_COM_POS_1, AC_LINK_COM_POS_2
    i1 = i2 = AC_LINK_MOI
    g = AC_GRAVITY
    theta1, theta2, dtheta1, dtheta2 = s.T
    d1 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * np.cos(theta2)) + i1 + i2
    d2 = m2 * (lc2**2 + l1 * lc2 * np.cos(theta2)) + i2
    phi2 = m2 * lc2 * g * np.cos(theta1 + theta2 - math.pi / 2.0)
    phi1 = (
        -m2 * l1 * lc2 * dtheta2**2 * np.sin(theta2)
        - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * np.sin(theta2)
        + (m1 * lc1 + m2 * l1) * g * np.cos(theta1 - math.pi / 2)
        + phi2
    )
    ddtheta2 = (
        torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1**2 * np.sin(theta2) - phi2
    ) / (m2 * lc2**2 + i2 - d2**2 / d1)
    ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
    return np.stack([dtheta1, dtheta2, ddtheta1, ddtheta2], axis=1)


def _wrap(x: np.ndarray, low: float, high: float) -> np.ndarray:
    diff = high - low
    x = x.copy()
    while True:
        over = x > high
        if not over.any():
            break
        x[over] -= diff
    while True:
        under = x < low
        if not under.any():
            break
        x[under] += diff
    return x


def _acrobot_step(states: np.ndarray, actions: np.ndarray):
    torque = AC_TORQUES[actions]
    dt = AC_DT
    dt2 = dt / 2.0
    k1 = _acrobot_dsdt(states, torque)
    k2 = _acrobot_dsdt(states + dt2 * k1, torque)
    k3 = _acrobot_dsdt(states + dt2 * k2, torque)
    k4 = _acrobot_dsdt(states + dt * k3, torque)
    ns = states + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    ns[:, 0] = _wrap(ns[:, 0], -math.pi, math.pi)
    ns[:, 1] = _wrap(ns[:, 1], -math.pi, math.pi)
    ns[:, 2] = np.clip(ns[:, 2], -AC_MAX_VEL_1, AC_MAX_VEL_1)
    ns[:, 3] = np.clip(ns[:, 3], -AC_MAX_VEL_2, AC_MAX_VEL_2)
    terminated = -np.cos(ns[:, 0]) - np.cos(ns[:, 1] + ns[:, 0]) > 1.0
    rewards = np.where(terminated, 0.0, -1.0)
    return ns, rewards, terminated


def _acrobot_obs(states: np.ndarray) -> np.ndarray:
    th1, th2, dth1, dth2 = states.T
    return np.stack(
        [np.cos(th1), np.sin(th1), np.cos(th2), np.sin(th2), dth1, dth2], axis=1
    )


def _acrobot_reset(rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-0.1, 0.1, size=4)


# ---------------------------------------------------------------------------
# Pendulum
# ---------------------------------------------------------------------------

PD_MAX_SPEED = 8.0
PD_MAX_TORQUE = 2.0
PD_DT = 0.05
PD_GRAVITY = 10.0
PD_MASS = 1.0
PD_LENGTH = 1.0


def angle_normalize(x):
    return ((x + np.pi) % (2 * np.pi)) - np.pi


def _pendulum_step(states: np.ndarray, actions: np.ndarray):
    th, thdot = states.T
    u = np.clip(np.asarray(actions, dtype=float).reshape(len(states), -1)[:, 0],
                -PD_MAX_TORQUE, PD_MAX_TORQUE)
    costs = angle_normalize(th) ** 2 + 0.1 * thdot**2 + 0.001 * u**2
    newthdot = thdot + (
        3 * PD_GRAVITY / (2 * PD_LENGTH) * np.sin(th)
        + 3.0 / (PD_MASS * PD_LENGTH**2) * u
    ) * PD_DT
    newthdot = np.clip(newthdot, -PD_MAX_SPEED, PD_MAX_SPEED)
    newth = th + newthdot * PD_DT
    nxt = np.stack([newth, newthdot], axis=1)
    return nxt, -costs, np.zeros(len(states), dtype=bool)


def _pendulum_obs(states: np.ndarray) -> np.ndarray:
    th, thdot = states.T
    return np.stack([np.cos(th), np.sin(th), thdot], axis=1)


def _pendulum_reset(rng: np.random.Generator) -> np.ndarray:
    high = np.array([np.pi, 1.0])
    return rng.uniform(low=-high, high=high)


_DYNAMICS = {
    EnvId.CARTPOLE: (_cartpole_reset, _cartpole_step, _cartpole_obs),
    EnvId.ACROBOT: (_acrobot_reset, _acrobot_step, _acrobot_obs),
    EnvId.PENDULUM: (_pendulum_reset, _pendulum_step, _pendulum_obs),
}


# ---------------------------------------------------------------------------
# Public interface
# ---------------------------------------------------------------------------


def reset_from_rng(spec: EnvSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw one initial physical state from ``rng``."""
    return _DYNAMICS[spec.id][0](rng)


def observe(spec: EnvSpec, states: np.ndarray) -> np.ndarray:
    """Observations for a ``(n, state_dim)`` batch of physical states."""
    return _DYNAMICS[spec.id][2](np.atleast_2d(states))


def check_actions(spec: EnvSpec, actions: np.ndarray) -> np.ndarray:
    if spec.discrete:
        actions = np.asarray(actions)
        if actions.dtype.kind not in "iu":
            if not np.all(np.equal(np.mod(actions, 1), 0)):
                raise InvalidActionError(f"non-integer discrete action {actions!r}")
            actions = actions.astype(np.int64)
        n = spec.action_space.n
        if np.any((actions < 0) | (actions >= n)):
            raise InvalidActionError(f"action out of range [0, {n}): {actions!r}")
        return actions
    return np.asarray(actions, dtype=float)


def step_batch(spec: EnvSpec, states: np.ndarray, actions: np.ndarray):
    """Advance a batch of physical states by one transition.

    Returns ``(next_states, rewards, terminated)``; truncation is the caller's
    business since it depends on per-episode step counts.
    """
    actions = check_actions(spec, actions)
    return _DYNAMICS[spec.id][1](states, actions)


def reset(spec: EnvSpec, seed: int) -> tuple[EnvState, np.ndarray]:
    rng = make_rng(seed)
    s = reset_from_rng(spec, rng)
    return EnvState(s, 0), observe(spec, s)[0]


def step(spec: EnvSpec, state: EnvState, action) -> tuple[EnvState, StepResult]:
    if state.step_count >= spec.max_episode_steps:
        raise ValueError("episode already reached its step limit")
    a = np.asarray(action)
    if spec.discrete:
        a = a.reshape(1)
    else:
        a = a.reshape(1, -1)
    nxt, rewards, terminated = step_batch(spec, state.internal_state[None, :], a)
    count = state.step_count + 1
    term = bool(terminated[0])
    trunc = (not term) and count >= spec.max_episode_steps
    new_state = EnvState(nxt[0], count)
    return new_state, StepResult(observe(spec, nxt)[0], float(rewards[0]), term, trunc)
