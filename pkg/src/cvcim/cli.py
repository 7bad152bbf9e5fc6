"""Command-line front end.

Subcommands: run (full experiment grid), sweep (feedback-strength grid),
ratio (roundtrip-ratio comparison of two run directories), oracle
(reference-optimum table for instance files), gen (write generated
instances to files), report (render figures from a run directory).
"""

from __future__ import annotations

import argparse
import logging
from dataclasses import replace

from .config import load_config
from .runner import (
    generate_instance_files,
    oracle_references,
    ratio_files,
    run_experiment,
    sweep_experiment,
)

logger = logging.getLogger("cvcim")


def _add_config_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="experiment config (TOML)")
    sub.add_argument("--seed", type=int, default=None, help="override the master seed")
    sub.add_argument("--out", default=None, help="output directory (overrides config)")
    sub.add_argument("--workers", type=int, default=0, help="worker processes (0 = machine parallelism)")
    sub.add_argument("--stride", type=int, default=None, help="gap-record stride override")


def _load_with_overrides(args) -> tuple:
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, master_seed=args.seed)
    if args.stride is not None:
        config = replace(config, stride=args.stride)
    workers = args.workers
    if workers <= 0:
        import os

        workers = os.cpu_count() or 1
    return config, workers


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvcim",
        description="Optical-machine simulator and benchmark harness for box-constrained QPs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the (instance x policy x sample) grid")
    _add_config_args(p_run)

    p_sweep = sub.add_parser("sweep", help="run the (kappa x lambda) sensitivity grid")
    _add_config_args(p_sweep)

    p_ratio = sub.add_parser("ratio", help="roundtrip-ratio comparison of two run directories")
    p_ratio.add_argument("dir_a", help="run directory of the first variant")
    p_ratio.add_argument("dir_b", help="run directory of the second variant")
    p_ratio.add_argument("--policy-a", default=None, help="policy name in dir_a (if several)")
    p_ratio.add_argument("--policy-b", default=None, help="policy name in dir_b (if several)")
    p_ratio.add_argument("--x", default="5,10,25,50", help="comma-separated percentile list")
    p_ratio.add_argument("--out", default=None, help="output directory (default: dir_a)")

    p_oracle = sub.add_parser("oracle", help="compute reference optima for instance files")
    p_oracle.add_argument("instances", nargs="+", help="canonical instance files")
    p_oracle.add_argument("--starts", type=int, default=100, help="multi-start count")
    p_oracle.add_argument("--iters", type=int, default=1000, help="max iterations per start")
    p_oracle.add_argument("--seed", type=int, default=7, help="oracle RNG seed")
    p_oracle.add_argument("--out", required=True, help="reference table file to write")

    p_gen = sub.add_parser("gen", help="write generated instances to canonical files")
    p_gen.add_argument("labels", nargs="+", help="generator labels: cond-n{n}-k{kappa}-s{seed}")
    p_gen.add_argument("--out", required=True, help="directory for the instance files")

    p_report = sub.add_parser("report", help="render figures from a run directory")
    p_report.add_argument("run_dir", help="directory holding run/sweep/ratio outputs")
    p_report.add_argument("--out", default=None, help="figure directory (default: run_dir)")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)

    if args.command == "run":
        config, workers = _load_with_overrides(args)
        paths = run_experiment(config, workers=workers, out_dir=args.out)
        for name, path in paths.items():
            logger.info("wrote %s: %s", name, path)
    elif args.command == "sweep":
        config, workers = _load_with_overrides(args)
        paths = sweep_experiment(config, workers=workers, out_dir=args.out)
        for name, path in paths.items():
            logger.info("wrote %s: %s", name, path)
    elif args.command == "ratio":
        xs = tuple(float(x) for x in args.x.split(","))
        path = ratio_files(
            args.dir_a, args.dir_b, policy_a=args.policy_a, policy_b=args.policy_b,
            xs=xs, out_dir=args.out,
        )
        logger.info("wrote ratio table: %s", path)
    elif args.command == "oracle":
        table = oracle_references(
            args.instances, n_starts=args.starts, max_iters=args.iters,
            seed=args.seed, out_file=args.out,
        )
        logger.info("wrote %d reference entries: %s", len(table), args.out)
    elif args.command == "gen":
        paths = generate_instance_files(args.labels, args.out)
        for path in paths:
            logger.info("wrote instance: %s", path)
    elif args.command == "report":
        from .report import render_report

        for path in render_report(args.run_dir, out_dir=args.out):
            logger.info("wrote figure: %s", path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
