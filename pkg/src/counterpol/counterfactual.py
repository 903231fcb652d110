"""Counterfactual policy optimization with iterative KL pivoting.

Given a policy ``pi_0`` and a target return, gradient descent on

    |J(theta) - R_target| + k * KL(pi_pivot || pi_theta)

moves the policy until its Monte-Carlo return estimate is within ``delta`` of
the target.  The KL pivot is replaced by the current policy every ``m``
gradient steps.  With a target above every achievable return the descent
direction is exactly the negated ascent direction of a KL-penalized
trust-region update; ``verify_equivalence`` checks that on a shared batch.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path

import numpy as np

from .envs import EnvSpec
from .policy import PolicyParams, ArchMismatchError, kl_grad_sum, log_prob_grad_sum
from .rollout import Batch, estimate_kl, estimate_performance, sample_episodes

log = logging.getLogger(__name__)

# episode seeds for update ``s`` of a run seeded ``seed``: seed * STRIDE + s * N + i
SEED_STRIDE = 1_000_000_007


@dataclass(frozen=True)
class CounterpolConfig:
    r_target: float
    delta: float
    k: float
    m: int = 10
    n_episodes: int = 10
    eta: float = 3e-3
    gamma: float = 0.99
    max_outer_iters: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.delta <= 0 or self.eta <= 0:
            raise ValueError("delta and eta must be positive")
        if self.k < 0:
            raise ValueError("k must be non-negative")
        if self.m < 1 or self.n_episodes < 1 or self.max_outer_iters < 1:
            raise ValueError("m, n_episodes and max_outer_iters must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> CounterpolConfig:
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass(frozen=True)
class TrustRegionConfig:
    lam: float
    eta: float = 3e-3
    gamma: float = 0.99
    n_episodes: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")


class RunStatus(str, Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxItersExceeded"
    DIVERGED = "NonFiniteGradient"


@dataclass
class UpdateRecord:
    outer: int
    inner: int
    j_estimate: float
    j_undiscounted: float
    kl_estimate: float
    return_penalty: float
    grad_norm: float
    pivot_updated: bool


@dataclass
class RunLog:
    records: list[UpdateRecord] = field(default_factory=list)
    status: RunStatus | None = None
    n_outer: int = 0
    n_inner: int = 0
    episodes: int = 0
    wall_time: float = 0.0

    @property
    def final_estimate(self) -> float:
        return self.records[-1].j_estimate if self.records else math.nan

    def write_csv(self, path: str | Path) -> None:
        names = [f.name for f in fields(UpdateRecord)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            for rec in self.records:
                writer.writerow([_fmt(getattr(rec, n)) for n in names])

    def summary(self) -> dict:
        return {
            "status": self.status.value if self.status else None,
            "final_j_estimate": self.final_estimate,
            "n_outer": self.n_outer,
            "n_inner": self.n_inner,
            "episodes": self.episodes,
            "wall_time": self.wall_time,
        }

    def write_summary(self, path: str | Path, **extra) -> None:
        Path(path).write_text(json.dumps({**self.summary(), **extra}, indent=2) + "\n")


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def _sgn(x: float) -> float:
    return float(np.sign(x))


def _check_arch(a: PolicyParams, b: PolicyParams):
    if a.arch != b.arch:
        raise ArchMismatchError("policies have different architectures")


# ---------------------------------------------------------------------------
# Gradient estimators
# ---------------------------------------------------------------------------


def policy_gradient_estimate(params: PolicyParams, batch: Batch) -> np.ndarray:
    """Reward-to-go weighted score average, normalised by the total step count.

    No baseline is subtracted.
    """
    weights = batch.rewards_to_go()
    g = log_prob_grad_sum(params, batch.observations(), batch.actions(), weights)
    return g / batch.total_steps


def return_penalty_grad(params: PolicyParams, batch: Batch, r_target: float) -> np.ndarray:
    """Gradient of ``|J - r_target|``: ``sgn(J - r_target) * grad J`` with sgn(0) = 0."""
    s = _sgn(estimate_performance(batch) - r_target)
    return s * policy_gradient_estimate(params, batch)


def kl_gradient_estimate(pivot: PolicyParams, params: PolicyParams, batch: Batch) -> np.ndarray:
    _check_arch(pivot, params)
    return kl_grad_sum(pivot, params, batch.observations()) / batch.total_steps


def counterfactual_gradient(
    pivot: PolicyParams, params: PolicyParams, batch: Batch, r_target: float, k: float
) -> np.ndarray:
    """Descent direction of the return penalty plus ``k`` times the pivot KL."""
    return return_penalty_grad(params, batch, r_target) + k * kl_gradient_estimate(
        pivot, params, batch
    )


def trust_region_gradient(
    pivot: PolicyParams, params: PolicyParams, batch: Batch, lam: float
) -> np.ndarray:
    """Ascent direction of ``J - lam * KL(pi_pivot || pi_theta)``."""
    return policy_gradient_estimate(params, batch) - lam * kl_gradient_estimate(
        pivot, params, batch
    )


def equivalence_deviation(
    pivot: PolicyParams, params: PolicyParams, batch: Batch, k: float, r_target: float = 1e9
) -> float:
    """Largest elementwise gap between the counterfactual descent direction and
    the negated trust-region ascent direction (lambda = k)."""
    cf = counterfactual_gradient(pivot, params, batch, r_target, k)
    tr = trust_region_gradient(pivot, params, batch, k)
    return float(np.max(np.abs(cf + tr)))


def verify_equivalence(
    pivot: PolicyParams,
    params: PolicyParams,
    batch: Batch,
    k: float,
    r_target: float = 1e9,
    tol: float = 1e-12,
) -> bool:
    return equivalence_deviation(pivot, params, batch, k, r_target) < tol


# ---------------------------------------------------------------------------
# Optimization loops
# ---------------------------------------------------------------------------


def episode_seed(run_seed: int, update: int, n_episodes: int) -> int:
    return run_seed * SEED_STRIDE + update * n_episodes


def counterpol_optimize(
    pivot0: PolicyParams, spec: EnvSpec, cfg: CounterpolConfig
) -> tuple[PolicyParams, RunLog]:
    """Search for a counterfactual policy of ``pivot0`` reaching ``cfg.r_target``.

    Every inner step draws a fresh on-policy batch, checks the stopping rule
    ``|J - R_target| < delta`` on it, and otherwise takes one plain gradient
    step of size ``eta``.  After ``m`` inner steps the KL pivot becomes the
    current policy.
    """
    start = time.perf_counter()
    runlog = RunLog()
    theta = np.array(pivot0.theta)
    pivot = pivot0
    params = pivot0
    update = 0
    for outer in range(cfg.max_outer_iters):
        for inner in range(cfg.m):
            params = pivot0.with_theta(theta)
            batch = sample_episodes(
                spec, params, cfg.n_episodes, episode_seed(cfg.seed, update, cfg.n_episodes),
                cfg.gamma,
            )
            runlog.episodes += cfg.n_episodes
            j_est = estimate_performance(batch)
            j_undisc = j_est if cfg.gamma == 1.0 else estimate_performance(batch, 1.0)
            kl_est = estimate_kl(pivot, params, batch)
            penalty = abs(j_est - cfg.r_target)
            if penalty < cfg.delta:
                runlog.records.append(
                    UpdateRecord(outer, inner, j_est, j_undisc, kl_est, penalty, math.nan, False)
                )
                runlog.status = RunStatus.CONVERGED
                runlog.wall_time = time.perf_counter() - start
                return params, runlog
            grad = counterfactual_gradient(pivot, params, batch, cfg.r_target, cfg.k)
            gnorm = float(np.linalg.norm(grad))
            runlog.records.append(
                UpdateRecord(outer, inner, j_est, j_undisc, kl_est, penalty, gnorm,
                             inner == cfg.m - 1)
            )
            if not np.all(np.isfinite(grad)):
                log.warning("non-finite gradient at outer=%d inner=%d", outer, inner)
                runlog.status = RunStatus.DIVERGED
                runlog.wall_time = time.perf_counter() - start
                return params, runlog
            theta = theta - cfg.eta * grad
            if not np.all(np.isfinite(theta)):
                runlog.status = RunStatus.DIVERGED
                runlog.wall_time = time.perf_counter() - start
                return params, runlog
            update += 1
            runlog.n_inner += 1
        pivot = pivot0.with_theta(theta)
        runlog.n_outer += 1
    runlog.status = RunStatus.MAX_ITERS
    runlog.wall_time = time.perf_counter() - start
    return pivot0.with_theta(theta), runlog


def trust_region_optimize(
    pivot0: PolicyParams, spec: EnvSpec, cfg: TrustRegionConfig, n_outer: int, m: int = 10
) -> PolicyParams:
    """KL-penalized policy-gradient ascent with the pivot reset every ``m`` steps.

    Uses the same per-update episode seeds as ``counterpol_optimize`` so the
    two loops can be compared step for step.
    """
    theta = np.array(pivot0.theta)
    pivot = pivot0
    update = 0
    for _ in range(n_outer):
        for _ in range(m):
            params = pivot0.with_theta(theta)
            batch = sample_episodes(
                spec, params, cfg.n_episodes, episode_seed(cfg.seed, update, cfg.n_episodes),
                cfg.gamma,
            )
            theta = theta + cfg.eta * trust_region_gradient(pivot, params, batch, cfg.lam)
            update += 1
        pivot = pivot0.with_theta(theta)
    return pivot0.with_theta(theta)
