"""On-policy episode sampling and Monte-Carlo estimators."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _kernels, envs
from .envs import EnvId, EnvSpec
from .policy import (
    CATEGORICAL,
    GAUSSIAN,
    Categorical,
    PolicyParams,
    ArchMismatchError,
    forward_batch,
    inverse_cdf,
    kl_divergence,
    log_prob,
)

DEFAULT_GAMMA = 0.99

_ENV_CODES = {
    EnvId.CARTPOLE: _kernels.CARTPOLE,
    EnvId.ACROBOT: _kernels.ACROBOT,
    EnvId.PENDULUM: _kernels.PENDULUM,
}


class StepRecord(NamedTuple):
    obs: np.ndarray
    action: int | np.ndarray
    reward: float
    log_prob: float


@dataclass(frozen=True)
class Trajectory:
    """One episode stored column-wise; ``steps`` gives the row view."""

    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    log_probs: np.ndarray
    seed: int = 0
    terminated: bool = False

    def __post_init__(self):
        if len(self.rewards) == 0:
            raise ValueError("trajectory must contain at least one step")
        n = len(self.rewards)
        if not (len(self.obs) == len(self.actions) == len(self.log_probs) == n):
            raise ValueError("trajectory columns have inconsistent lengths")

    @property
    def length(self) -> int:
        return len(self.rewards)

    @property
    def steps(self) -> list[StepRecord]:
        acts = self.actions
        return [
            StepRecord(
                self.obs[t],
                int(acts[t]) if acts.ndim == 1 else acts[t],
                float(self.rewards[t]),
                float(self.log_probs[t]),
            )
            for t in range(self.length)
        ]

    @classmethod
    def from_steps(cls, steps: list[StepRecord], seed: int = 0) -> Trajectory:
        return cls(
            obs=np.array([s.obs for s in steps], dtype=np.float64),
            actions=np.array([s.action for s in steps]),
            rewards=np.array([s.reward for s in steps], dtype=np.float64),
            log_probs=np.array([s.log_prob for s in steps], dtype=np.float64),
            seed=seed,
        )


@dataclass(frozen=True)
class Batch:
    trajectories: list[Trajectory]
    gamma: float = DEFAULT_GAMMA
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if len(self.trajectories) < 1:
            raise ValueError("batch needs at least one trajectory")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def total_steps(self) -> int:
        return sum(tr.length for tr in self.trajectories)

    def observations(self) -> np.ndarray:
        if "obs" not in self._cache:
            self._cache["obs"] = np.concatenate([tr.obs for tr in self.trajectories])
        return self._cache["obs"]

    def actions(self) -> np.ndarray:
        if "actions" not in self._cache:
            self._cache["actions"] = np.concatenate([tr.actions for tr in self.trajectories])
        return self._cache["actions"]

    def rewards_to_go(self, gamma: float | None = None) -> np.ndarray:
        g = self.gamma if gamma is None else gamma
        return np.concatenate([rewards_to_go(tr.rewards, g) for tr in self.trajectories])

    def returns(self, gamma: float | None = None) -> np.ndarray:
        g = self.gamma if gamma is None else gamma
        return np.array([discounted_return(tr, g) for tr in self.trajectories])


def _check_compatible(spec: EnvSpec, params: PolicyParams) -> None:
    arch = params.arch
    if arch.obs_dim != spec.obs_dim:
        raise ArchMismatchError(
            f"policy expects obs_dim {arch.obs_dim}, {spec.id.value} has {spec.obs_dim}"
        )
    if spec.discrete and (arch.head != CATEGORICAL or arch.n_out != spec.action_space.n):
        raise ArchMismatchError("policy action space does not match environment")
    if not spec.discrete and (arch.head != GAUSSIAN or arch.n_out != spec.action_space.dim):
        raise ArchMismatchError("policy action space does not match environment")


def _episode_noise(spec: EnvSpec, rngs: list[np.random.Generator]):
    """Initial states plus one block of action noise per episode."""
    horizon = spec.max_episode_steps
    states = np.stack([envs.reset_from_rng(spec, rng) for rng in rngs])
    if spec.discrete:
        noise = np.stack([rng.random(horizon) for rng in rngs])[:, :, None]
    else:
        adim = spec.action_space.dim
        noise = np.stack([rng.standard_normal((horizon, adim)) for rng in rngs])
    return states, noise


def sample_episodes(
    spec: EnvSpec,
    params: PolicyParams,
    n: int,
    base_seed: int,
    gamma: float = DEFAULT_GAMMA,
) -> Batch:
    """Roll out ``n`` complete episodes; episode ``i`` is seeded with ``base_seed + i``.

    Each episode owns a generator that first draws the initial state and then
    one block of action noise covering the episode-length cap, so any single
    episode can be replayed from its seed alone.
    """
    if n < 1:
        raise ValueError("n must be positive")
    _check_compatible(spec, params)
    horizon = spec.max_episode_steps
    rngs = [envs.make_rng(base_seed + i) for i in range(n)]
    states, noise = _episode_noise(spec, rngs)
    adim = 1 if spec.discrete else spec.action_space.dim
    obs_buf = np.zeros((n, horizon, spec.obs_dim))
    act_buf = np.zeros((n, horizon, adim))
    rew_buf = np.zeros((n, horizon))
    lp_buf = np.zeros((n, horizon))
    lengths = np.zeros(n, dtype=np.int64)
    terminated = np.zeros(n, dtype=np.bool_)
    if spec.discrete:
        low = high = 0.0
    else:
        low, high = spec.action_space.low, spec.action_space.high
    _kernels.run_episodes(
        _ENV_CODES[spec.id],
        _kernels.HEAD_CATEGORICAL if spec.discrete else _kernels.HEAD_GAUSSIAN,
        params.theta,
        np.array(params.arch.layer_sizes, dtype=np.int64),
        states, noise, horizon,
        obs_buf, act_buf, rew_buf, lp_buf, lengths, terminated,
        float(low), float(high),
    )
    trajs = []
    for i in range(n):
        T = int(lengths[i])
        acts = act_buf[i, :T, 0].astype(np.int64) if spec.discrete else act_buf[i, :T].copy()
        trajs.append(
            Trajectory(
                obs=obs_buf[i, :T].copy(),
                actions=acts,
                rewards=rew_buf[i, :T].copy(),
                log_probs=lp_buf[i, :T].copy(),
                seed=base_seed + i,
                terminated=bool(terminated[i]),
            )
        )
    return Batch(trajs, gamma)


def sample_episodes_numpy(
    spec: EnvSpec,
    params: PolicyParams,
    n: int,
    base_seed: int,
    gamma: float = DEFAULT_GAMMA,
) -> Batch:
    """Same contract as ``sample_episodes`` but stepped in lockstep through the
    numpy environment and policy code.  Slower; kept as the reference path."""
    if n < 1:
        raise ValueError("n must be positive")
    _check_compatible(spec, params)
    horizon = spec.max_episode_steps
    rngs = [envs.make_rng(base_seed + i) for i in range(n)]
    states, noise = _episode_noise(spec, rngs)
    if spec.discrete:
        act_buf = np.zeros((n, horizon), dtype=np.int64)
    else:
        act_buf = np.zeros((n, horizon, spec.action_space.dim))
    obs_buf = np.zeros((n, horizon, spec.obs_dim))
    rew_buf = np.zeros((n, horizon))
    lp_buf = np.zeros((n, horizon))
    lengths = np.zeros(n, dtype=np.int64)
    terminated = np.zeros(n, dtype=bool)

    active = np.arange(n)
    for t in range(horizon):
        obs = envs.observe(spec, states[active])
        dist = forward_batch(params, obs)
        if isinstance(dist, Categorical):
            a = inverse_cdf(dist.probs, noise[active, t, 0])
            lp = dist.log_probs[np.arange(len(active)), a]
            env_a = a
        else:
            a = dist.mean + dist.std * noise[active, t]
            lp = log_prob(dist, a)
            env_a = np.clip(a, spec.action_space.low, spec.action_space.high)
        nxt, rew, term = envs.step_batch(spec, states[active], env_a)
        obs_buf[active, t] = obs
        act_buf[active, t] = a
        rew_buf[active, t] = rew
        lp_buf[active, t] = lp
        lengths[active] += 1
        states[active] = nxt
        terminated[active[term]] = True
        active = active[~term]
        if active.size == 0:
            break

    trajs = []
    for i in range(n):
        T = int(lengths[i])
        trajs.append(
            Trajectory(
                obs=obs_buf[i, :T].copy(),
                actions=act_buf[i, :T].copy(),
                rewards=rew_buf[i, :T].copy(),
                log_probs=lp_buf[i, :T].copy(),
                seed=base_seed + i,
                terminated=bool(terminated[i]),
            )
        )
    return Batch(trajs, gamma)


def rewards_to_go(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """``out[t] = sum_{j >= t} gamma**(j - t) * rewards[j]``."""
    out = np.empty(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def reward_to_go(traj: Trajectory, t: int, gamma: float) -> float:
    if not 0 <= t < traj.length:
        raise IndexError(f"t={t} outside trajectory of length {traj.length}")
    return float(rewards_to_go(traj.rewards[t:], gamma)[0])


def discounted_return(traj: Trajectory, gamma: float) -> float:
    return float(rewards_to_go(traj.rewards, gamma)[0])


def estimate_performance(batch: Batch, gamma: float | None = None) -> float:
    """Mean (discounted) return over the batch's episodes."""
    total = 0.0
    for r in batch.returns(gamma):
        total += r
    return total / len(batch)


# evaluation episodes are drawn from their own seed range
EVAL_SEED_BASE = 1 << 50


def evaluation_seed(seed: int, n_episodes: int) -> int:
    return EVAL_SEED_BASE + seed * n_episodes


def evaluate(
    spec: EnvSpec, params: PolicyParams, n_episodes: int = 100, seed: int = 0, gamma: float = 1.0
) -> tuple[float, float]:
    """Mean and standard deviation of the return over a dedicated evaluation batch."""
    batch = sample_episodes(spec, params, n_episodes, evaluation_seed(seed, n_episodes), gamma)
    returns = batch.returns()
    return estimate_performance(batch), float(np.std(returns))


def per_state_kl(pivot: PolicyParams, params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    if pivot.arch != params.arch:
        raise ArchMismatchError("policies have different architectures")
    return np.atleast_1d(kl_divergence(forward_batch(pivot, obs), forward_batch(params, obs)))


def estimate_kl(pivot: PolicyParams, params: PolicyParams, batch: Batch) -> float:
    """State-visitation average of KL(pi_pivot(.|s) || pi_params(.|s))."""
    kls = per_state_kl(pivot, params, batch.observations())
    return float(kls.sum() / batch.total_steps)


def write_trace_csv(batch: Batch, path: str | Path) -> None:
    """Dump every step as ``episode, t, obs_*, action*, reward, log_prob``."""
    first = batch.trajectories[0]
    obs_cols = [f"obs_{i}" for i in range(first.obs.shape[1])]
    if first.actions.ndim == 1:
        act_cols = ["action"]
    else:
        act_cols = [f"action_{i}" for i in range(first.actions.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "t", *obs_cols, *act_cols, "reward", "log_prob"])
        for ep, tr in enumerate(batch.trajectories):
            for t in range(tr.length):
                act = np.atleast_1d(tr.actions[t])
                writer.writerow(
                    [ep, t, *(repr(float(v)) for v in tr.obs[t]),
                     *(repr(a.item()) for a in act),
                     repr(float(tr.rewards[t])), repr(float(tr.log_probs[t]))]
                )
