"""Per-environment presets and the checkpoint x target x seed grid runner."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .counterfactual import CounterpolConfig, RunLog, counterpol_optimize
from .envs import EnvSpec, make
from .policy import PolicyParams
from .rollout import estimate_kl, evaluation_seed, sample_episodes
from .trainer import TrainerConfig, train_baseline

log = logging.getLogger(__name__)

TABLE1_COLUMNS = (
    "env", "J_pi0", "R_target", "seed", "n_outer", "n_inner",
    "J_cf_eval_mean", "J_cf_eval_std", "kl_final",
)


@dataclass(frozen=True)
class EnvPreset:
    targets: tuple[float, ...]
    delta: float
    k: float
    eta: float
    trainer: TrainerConfig
    # returns the trained checkpoints are meant to land near
    reference_levels: tuple[float, ...]
    eval_episodes: int = 100
    max_outer_iters: int = 2000

    def counterpol_config(self, r_target: float, seed: int = 0, **overrides) -> CounterpolConfig:
        kw = dict(r_target=float(r_target), delta=self.delta, k=self.k, m=10, n_episodes=10,
                  eta=self.eta, gamma=1.0, max_outer_iters=self.max_outer_iters, seed=seed)
        kw.update(overrides)
        return CounterpolConfig(**kw)


PRESETS: dict[str, EnvPreset] = {
    "cartpole": EnvPreset(
        targets=(50.0, 250.0, 450.0), delta=10.0, k=10.0, eta=3e-3,
        trainer=TrainerConfig(total_updates=500, eta_policy=1e-3, gamma=0.99,
                              checkpoint_levels=(215.0, 350.0, 500.0)),
        reference_levels=(235.6, 368.2, 500.0),
    ),
    "acrobot": EnvPreset(
        targets=(-120.0, -100.0, -80.0), delta=2.5, k=1.0, eta=3e-3,
        trainer=TrainerConfig(total_updates=300, eta_policy=1e-3, gamma=0.99, value_scale=100.0,
                              checkpoint_levels=(-147.0, -89.0, -84.0)),
        reference_levels=(-146.7, -89.0, -84.3),
    ),
    "pendulum": EnvPreset(
        targets=(-1000.0, -750.0, -500.0), delta=37.5, k=1e5, eta=3e-7,
        trainer=TrainerConfig(total_updates=800, eta_policy=5e-3, gamma=0.95, value_scale=100.0,
                              checkpoint_levels=(-810.0, -740.0, -590.0)),
        reference_levels=(-853.5, -792.6, -568.0),
        # the step size that keeps the k=1e5 KL term stable barely moves the return,
        # so a longer budget only adds runtime
        max_outer_iters=100,
    ),
}


def preset(env_id: str) -> EnvPreset:
    return PRESETS[make(env_id).id.value]


def train_level_checkpoints(spec: EnvSpec, cfg: TrainerConfig) -> list[tuple[PolicyParams, float]]:
    """One (policy, evaluated return) per requested level.

    A level the trainer never reached is filled with the final policy so the
    grid keeps its shape; the trainer already logged a warning for it.
    """
    result = train_baseline(spec, cfg)
    final = result.checkpoints[-1]
    by_level = {c.level: c for c in result.checkpoints if c.level is not None}
    out = []
    for level in cfg.checkpoint_levels:
        c = by_level.get(level, final)
        out.append((c.params, c.achieved_j))
    return out


@dataclass
class CellResult:
    env: str
    j_pi0: float
    r_target: float
    seed: int
    params: PolicyParams
    runlog: RunLog
    eval_mean: float
    eval_std: float
    kl_final: float

    def row(self) -> list:
        return [self.env, self.j_pi0, self.r_target, self.seed, self.runlog.n_outer,
                self.runlog.n_inner, self.eval_mean, self.eval_std, self.kl_final]


def run_cell(spec: EnvSpec, pivot0: PolicyParams, j_pi0: float, cfg: CounterpolConfig,
             eval_episodes: int = 100) -> CellResult:
    """Run one counterfactual search and evaluate it on a fresh 100-episode batch.

    ``kl_final`` is KL(pi_0 || pi_cf) averaged over the states of that batch.
    """
    params, runlog = counterpol_optimize(pivot0, spec, cfg)
    batch = sample_episodes(spec, params, eval_episodes,
                            evaluation_seed(cfg.seed, eval_episodes), 1.0)
    returns = batch.returns()
    kl = estimate_kl(pivot0, params, batch)
    return CellResult(spec.id.value, float(j_pi0), cfg.r_target, cfg.seed, params, runlog,
                      float(np.mean(returns)), float(np.std(returns)), kl)


def run_grid(spec: EnvSpec, checkpoints: list[tuple[PolicyParams, float]],
             p: EnvPreset | None = None, seeds=(0, 1, 2), **overrides) -> list[CellResult]:
    p = p or preset(spec.id.value)
    cells = []
    for pivot0, j0 in checkpoints:
        for target in p.targets:
            for seed in seeds:
                cfg = p.counterpol_config(target, seed, **overrides)
                cell = run_cell(spec, pivot0, j0, cfg, p.eval_episodes)
                log.info("J0=%.1f R=%.1f seed=%d %s outer=%d eval=%.1f", j0, target, seed,
                         cell.runlog.status.value, cell.runlog.n_outer, cell.eval_mean)
                cells.append(cell)
    return cells


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_table_csv(cells: list[CellResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TABLE1_COLUMNS)
        for c in cells:
            writer.writerow([_fmt(v) for v in c.row()])
