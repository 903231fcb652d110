"""Advantage policy-gradient trainer that produces the original policies.

Monte-Carlo reward-to-go minus a learned state value gives the advantage;
policy and critic are both updated with Adam.  Snapshots are taken the first
time the rolling mean of undiscounted episode returns reaches each requested
level.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .envs import EnvSpec
from .policy import (
    PolicyArch,
    PolicyParams,
    categorical_arch,
    gaussian_arch,
    init_params,
    log_prob_grad_sum,
    value_arch,
    value_forward_batch,
    value_grad_sum,
)
from .rollout import evaluate, sample_episodes

log = logging.getLogger(__name__)

# training episodes use their own seed range, disjoint from evaluation
TRAIN_SEED_BASE = 1 << 45
TRAIN_SEED_STRIDE = 1 << 30


@dataclass(frozen=True)
class TrainerConfig:
    total_updates: int = 500
    n_episodes_per_update: int = 10
    eta_policy: float = 1e-3
    eta_value: float = 1e-3
    gamma: float = 0.99
    checkpoint_levels: tuple[float, ...] = ()
    seed: int = 0
    hidden_sizes: tuple[int, ...] = (64, 64)
    window: int = 20
    eval_episodes: int = 100
    normalize_advantages: bool = True
    value_scale: float = 1.0
    # linearly anneal both learning rates to zero over the run
    anneal: bool = True

    def __post_init__(self):
        levels = tuple(float(x) for x in self.checkpoint_levels)
        if list(levels) != sorted(levels):
            raise ValueError("checkpoint_levels must be sorted ascending")
        object.__setattr__(self, "checkpoint_levels", levels)
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.eta_policy <= 0 or self.eta_value <= 0:
            raise ValueError("learning rates must be positive")
        if self.total_updates < 0 or self.n_episodes_per_update < 1:
            raise ValueError("invalid update/episode counts")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["checkpoint_levels"] = list(self.checkpoint_levels)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainerConfig:
        names = {f.name for f in fields(cls)}
        kw = {k: v for k, v in d.items() if k in names}
        for key in ("checkpoint_levels", "hidden_sizes"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)


@dataclass
class TrainedCheckpoint:
    params: PolicyParams
    achieved_j: float
    achieved_std: float
    update: int
    level: float | None
    rolling_mean: float


@dataclass
class TrainingResult:
    checkpoints: list[TrainedCheckpoint] = field(default_factory=list)
    skipped_levels: list[float] = field(default_factory=list)
    history: list[float] = field(default_factory=list)


class Adam:
    def __init__(self, n: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, grad: np.ndarray, lr_scale: float = 1.0) -> np.ndarray:
        """Return the parameter increment for a *descent* step on ``grad``."""
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return -self.lr * lr_scale * mhat / (np.sqrt(vhat) + self.eps)


def policy_arch_for(spec: EnvSpec, hidden_sizes=(64, 64)) -> PolicyArch:
    if spec.discrete:
        return categorical_arch(spec.obs_dim, spec.action_space.n, hidden_sizes)
    return gaussian_arch(spec.obs_dim, spec.action_space.dim, hidden_sizes)


def train_baseline(spec: EnvSpec, cfg: TrainerConfig) -> TrainingResult:
    """Train from scratch and return level-crossing snapshots plus the final policy."""
    policy = init_params(policy_arch_for(spec, cfg.hidden_sizes), cfg.seed)
    vparams = init_params(value_arch(spec.obs_dim, cfg.hidden_sizes), cfg.seed + 1)
    popt = Adam(policy.arch.n_params, cfg.eta_policy)
    vopt = Adam(vparams.arch.n_params, cfg.eta_value)
    window: deque[float] = deque(maxlen=cfg.window)
    levels = list(cfg.checkpoint_levels)
    result = TrainingResult()

    def snapshot(params, update, level, rolling):
        mean, std = evaluate(spec, params, cfg.eval_episodes, seed=cfg.seed)
        log.info("checkpoint update=%d level=%s rolling=%.1f eval=%.1f", update, level, rolling, mean)
        result.checkpoints.append(TrainedCheckpoint(params, mean, std, update, level, rolling))

    update = 0
    for update in range(cfg.total_updates):
        batch = sample_episodes(
            spec, policy, cfg.n_episodes_per_update,
            TRAIN_SEED_BASE + cfg.seed * TRAIN_SEED_STRIDE + update * cfg.n_episodes_per_update,
            cfg.gamma,
        )
        window.extend(batch.returns(1.0))
        rolling = float(np.mean(window))
        result.history.append(rolling)
        while levels and len(window) == cfg.window and rolling >= levels[0]:
            snapshot(policy, update, levels.pop(0), rolling)

        obs = batch.observations()
        targets = batch.rewards_to_go()
        values = value_forward_batch(vparams, obs) * cfg.value_scale
        adv = targets - values
        if cfg.normalize_advantages and adv.size > 1:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        n = batch.total_steps
        pgrad = log_prob_grad_sum(policy, obs, batch.actions(), adv) / n
        vgrad = value_grad_sum(vparams, obs, (values - targets) / cfg.value_scale) / n
        scale = 1.0 - update / cfg.total_updates if cfg.anneal else 1.0
        policy = policy.with_theta(policy.theta + popt.step(-pgrad, scale))
        vparams = vparams.with_theta(vparams.theta + vopt.step(vgrad, scale))

    for level in levels:
        log.warning("level %.1f not reached within %d updates", level, cfg.total_updates)
        result.skipped_levels.append(level)
    snapshot(policy, cfg.total_updates, None, float(np.mean(window)) if window else float("nan"))
    return result
