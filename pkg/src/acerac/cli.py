"""Command-line entry point: ``acerac train|eval|plot``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import harness
from .envs import make_env
from .mlp import load_checkpoint

log = logging.getLogger("acerac")

EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _setup_logging() -> None:
    level = os.environ.get("ACERAC_LOG", "info").strip().lower()
    logging.basicConfig(
        level=logging.DEBUG if level == "debug" else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _train_one(cfg: harness.RunConfig, seed: int, out: Path) -> Path:
    return harness.train(cfg, seed, out)


def cmd_train(args) -> int:
    try:
        cfg = harness.load_run_config(args.config, env=args.env, seeds=args.seed, out=args.out)
    except (harness.ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if len(cfg.seeds) == 1:
        jobs = [(cfg.seeds[0], cfg.out)]
    else:
        jobs = [(s, cfg.out / f"seed_{s}") for s in cfg.seeds]
    try:
        if len(jobs) == 1 or args.jobs == 1:
            for seed, out in jobs:
                path = harness.train(cfg, seed, out)
                print(path)
        else:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                futures = [pool.submit(_train_one, cfg, seed, out) for seed, out in jobs]
                for fut in futures:
                    print(fut.result())
    except harness.TrainingDiverged as exc:
        print(f"error: {exc}; diagnostics written next to the metrics", file=sys.stderr)
        return EXIT_DIVERGED
    return 0


def cmd_eval(args) -> int:
    try:
        ckpt = load_checkpoint(args.checkpoint)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    env = make_env(ckpt.meta["env"])
    actor, theta = ckpt.nets["actor"], ckpt.params["actor"]
    low, high = np.array(ckpt.meta["action_low"]), np.array(ckpt.meta["action_high"])

    def policy(s):
        return np.clip(actor.forward(theta, s), low, high)

    mean, std = harness.evaluate(policy, env, args.episodes, harness.eval_seed(args.seed))
    print(f"mean_return {mean:.6f}")
    print(f"std_return {std:.6f}")
    return 0


def cmd_plot(args) -> int:
    from .plotting import plot_learning_curve

    try:
        table = harness.emit_plot_data(args.runs, args.out)
    except (harness.PlotDataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    figure = plot_learning_curve(table, Path(args.out).with_suffix(".png"))
    print(args.out)
    print(figure)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acerac", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a toy environment")
    p.add_argument("--env", default=None, help="environment name (overrides the config file)")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--seed", type=int, nargs="+", default=[0], help="one or more seeds")
    p.add_argument("--out", required=True, type=Path, help="run directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel processes when several seeds are given")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint greedily")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--episodes", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="aggregate runs into a plot table and figure")
    p.add_argument("--runs", nargs="+", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
