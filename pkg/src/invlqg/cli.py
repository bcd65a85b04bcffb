"""Command line entry point: `invlqg run | validate | plot`."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import ConfigError, ExperimentConfig, check_config, load_config
from .experiment import format_table, run_experiment
from .plots import write_plot_scripts


def _load(path) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return load_config(path)


def _cmd_run(args) -> int:
    cfg = _load(args.config)
    cfg = cfg.with_overrides(
        base_seed=args.seed,
        output_dir=args.out,
        dump_trajectory=args.dump_trajectory,
        log_trials=True if args.log_trials else None,
    )
    # re-check overrides against the same rules as the file
    errors = check_config(cfg)
    if errors:
        raise ConfigError(errors)
    threads = args.threads or cfg.threads or os.cpu_count() or 1
    report = run_experiment(cfg, threads=threads)
    print(format_table(report))
    print(f"wrote {len(report.files)} files to {cfg.output_dir}")
    return 0


def _cmd_validate(args) -> int:
    load_config(args.config)
    print("ok")
    return 0


def _cmd_plot(args) -> int:
    scripts = write_plot_scripts(args.indir)
    if not scripts:
        print(f"no reports found in {args.indir}", file=sys.stderr)
        return 1
    for s in scripts:
        print(s)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="invlqg", description="Invariant vs conventional LQG experiments")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the Monte Carlo grid and predictions")
    run.add_argument("--config", help="key = value config file (defaults apply if omitted)")
    run.add_argument("--out", help="output directory")
    run.add_argument("--threads", type=int, help="worker processes (default: available cores)")
    run.add_argument("--seed", type=int, help="base seed")
    run.add_argument("--log-trials", action="store_true", help="write per-trial cost logs")
    run.add_argument("--dump-trajectory", type=int, metavar="TRIAL", help="dump both trajectories of one trial")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", help="check a config file")
    val.add_argument("--config", required=True)
    val.set_defaults(func=_cmd_validate)

    plot = sub.add_parser("plot", help="emit gnuplot scripts for a report directory")
    plot.add_argument("--in", dest="indir", required=True)
    plot.set_defaults(func=_cmd_plot)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
