"""Command-line entry point: ``python3 -m counterpol <command> ...``.

Every command that writes outputs also writes ``config.json`` holding the
fully resolved configuration.  Failures print a single line
``error: <kind>: <message>`` to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .counterfactual import equivalence_deviation
from .envs import SPECS, make
from .persist import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .rollout import evaluate, sample_episodes
from .trainer import TrainerConfig, train_baseline

OUTPUT_ROOT_ENV = "COUNTERPOL_OUTPUT_ROOT"
EXIT_USAGE, EXIT_FAILURE = 2, 1


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = EXIT_FAILURE):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


def _env(value: str) -> str:
    try:
        return make(value).id.value
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _out_dir(args, name: str) -> Path:
    if args.out is not None:
        out = Path(args.out)
    else:
        out = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(out: Path, doc: dict) -> None:
    (out / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load(path: str, env_id: str) -> Checkpoint:
    if not Path(path).is_file():
        raise CliError("missing-file", f"checkpoint not found: {path}")
    try:
        ck = load_checkpoint(path)
    except CheckpointError as e:
        raise CliError("bad-checkpoint", f"{path}: {e}") from None
    if ck.env_id != env_id:
        raise CliError("env-mismatch", f"checkpoint is for {ck.env_id}, not {env_id}")
    return ck


def cmd_train(args) -> int:
    spec = make(args.env)
    p = experiments.preset(args.env)
    base = p.trainer.to_dict()
    base["seed"] = args.seed
    if args.levels is not None:
        base["checkpoint_levels"] = sorted(args.levels)
    if args.updates is not None:
        base["total_updates"] = args.updates
    cfg = TrainerConfig.from_dict(base)
    out = _out_dir(args, f"train-{args.env}")
    _write_config(out, {"command": "train", "env": args.env, "trainer": cfg.to_dict()})
    result = train_baseline(spec, cfg)
    for i, c in enumerate(result.checkpoints):
        name = f"level_{i}.json" if c.level is not None else "final.json"
        save_checkpoint(out / name, Checkpoint.from_params(
            args.env, c.params, achieved_J=c.achieved_j, achieved_std=c.achieved_std,
            update=c.update, level=c.level, seed=args.seed))
        print(f"{name}\tlevel={c.level}\tupdate={c.update}\tJ={c.achieved_j:.2f}±{c.achieved_std:.2f}")
    for level in result.skipped_levels:
        print(f"skipped level {level}: not reached within {cfg.total_updates} updates")
    return 0


def cmd_counterfactual(args) -> int:
    spec = make(args.env)
    ck = _load(args.checkpoint, args.env)
    p = experiments.preset(args.env)
    overrides = {k: v for k, v in dict(delta=args.delta, k=args.k, m=args.m, n_episodes=args.n,
                                        eta=args.eta, gamma=args.gamma,
                                        max_outer_iters=args.max_outer).items() if v is not None}
    try:
        cfg = p.counterpol_config(args.target, args.seed, **overrides)
    except ValueError as e:
        raise CliError("invalid-config", str(e)) from None
    out = _out_dir(args, f"counterfactual-{args.env}")
    _write_config(out, {"command": "counterfactual", "env": args.env,
                        "checkpoint": str(Path(args.checkpoint).resolve()),
                        "counterpol": cfg.to_dict(), "eval_episodes": p.eval_episodes})
    cell = experiments.run_cell(spec, ck.params, ck.meta.get("achieved_J", float("nan")), cfg,
                                p.eval_episodes)
    cell.runlog.write_csv(out / "runlog.csv")
    cell.runlog.write_summary(out / "summary.json", eval_mean=cell.eval_mean,
                              eval_std=cell.eval_std, kl_final=cell.kl_final)
    save_checkpoint(out / "counterfactual.json", Checkpoint.from_params(
        args.env, cell.params, achieved_J=cell.eval_mean, seed=args.seed, r_target=args.target))
    print(f"status={cell.runlog.status.value} n_outer={cell.runlog.n_outer} "
          f"n_inner={cell.runlog.n_inner} eval={cell.eval_mean:.2f}±{cell.eval_std:.2f} "
          f"kl={cell.kl_final:.6g}")
    return 0


def cmd_eval(args) -> int:
    spec = make(args.env)
    ck = _load(args.checkpoint, args.env)
    mean, std = evaluate(spec, ck.params, args.episodes, seed=args.seed)
    print(f"mean={mean:.4f} std={std:.4f} episodes={args.episodes}")
    return 0


def cmd_verify_equivalence(args) -> int:
    spec = make(args.env)
    ck = _load(args.checkpoint, args.env)
    pivot = ck.params
    rng = np.random.default_rng(args.seed)
    params = pivot.with_theta(pivot.theta + 0.01 * rng.standard_normal(pivot.arch.n_params))
    batch = sample_episodes(spec, params, args.n, args.seed, args.gamma)
    dev = equivalence_deviation(pivot, params, batch, args.k)
    ok = dev < 1e-12
    print(f"{'PASS' if ok else 'FAIL'} max_abs_deviation={dev:.3e}")
    return 0 if ok else EXIT_FAILURE


def cmd_reproduce_table1(args) -> int:
    spec = make(args.env)
    p = experiments.preset(args.env)
    out = _out_dir(args, f"table1-{args.env}")
    trainer_cfg = TrainerConfig.from_dict({**p.trainer.to_dict(), "seed": args.seed})
    overrides = {} if args.max_outer is None else {"max_outer_iters": args.max_outer}
    _write_config(out, {
        "command": "reproduce-table1", "env": args.env, "trainer": trainer_cfg.to_dict(),
        "counterpol": [p.counterpol_config(t, s, **overrides).to_dict()
                       for t in p.targets for s in args.seeds],
        "eval_episodes": p.eval_episodes,
        "checkpoints": args.checkpoints,
    })
    if args.checkpoints:
        loaded = [_load(path, args.env) for path in args.checkpoints]
        checkpoints = [(c.params, float(c.meta["achieved_J"])) for c in loaded]
    else:
        checkpoints = experiments.train_level_checkpoints(spec, trainer_cfg)
        for i, (params, j) in enumerate(checkpoints):
            save_checkpoint(out / f"pi0_{i}.json",
                            Checkpoint.from_params(args.env, params, achieved_J=j, seed=args.seed))
    cells = experiments.run_grid(spec, checkpoints, p, seeds=tuple(args.seeds), **overrides)
    experiments.write_table_csv(cells, out / "table1.csv")
    print((out / "table1.csv").read_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ids = ", ".join(SPECS)
    parser = _Parser(prog="counterpol", description="Counterfactual explanation policies.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def env_arg(p):
        p.add_argument("--env", type=_env, required=True, help=f"one of: {ids}")

    p = sub.add_parser("train", help="train original policies and snapshot them at return levels")
    env_arg(p)
    p.add_argument("--levels", type=float, nargs="+", default=None)
    p.add_argument("--updates", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("counterfactual", help="search for a counterfactual policy")
    env_arg(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--delta", type=float)
    p.add_argument("--k", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--max-outer", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_counterfactual)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    env_arg(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify-equivalence", help="check the trust-region gradient identity")
    env_arg(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify_equivalence)

    p = sub.add_parser("reproduce-table1", help="run the checkpoint x target x seed grid")
    env_arg(p)
    p.add_argument("--checkpoints", nargs="+", default=None,
                   help="reuse saved original policies instead of training them")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--seed", type=int, default=0, help="trainer seed")
    p.add_argument("--max-outer", type=int, default=None, help="cap on outer updates per cell")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_reproduce_table1)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except CliError as e:
        print(f"error: {e.kind}: {e}", file=sys.stderr)
        return e.code
    except (OSError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
