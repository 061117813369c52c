"""Command line entry point: ``spacetime-ota run|summarize|check``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import solver
from .checks import run_checks
from .experiment import (ExperimentConfig, format_summary, load_config, run_experiment,
                         summarize, write_outputs)


def _cmd_run(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.master_seed = args.seed
    out = Path(args.output or cfg.output_dir)
    logging.info("backend=%s realizations=%d T=%s snr=%s", solver.BACKEND,
                 cfg.n_realizations, cfg.t_values, cfg.snr_values)
    done = []

    def progress(r):
        done.append(r)
        logging.info("realization %d finished (%d/%d)", r, len(done), cfg.n_realizations)

    result = run_experiment(cfg, threads=args.threads, progress=progress)
    paths = write_outputs(result, out)
    summary = summarize(paths["results"], out / "summary.csv")
    print(format_summary(summary))
    failed = sum(r.failed for r in result.records)
    if failed:
        logging.warning("%d records flagged as diverged", failed)
    return 0


def _cmd_summarize(args):
    path = Path(args.results)
    target = Path(args.output) if args.output else path.with_name("summary.csv")
    print(format_summary(summarize(path, target)))
    return 0


def _cmd_check(args):
    return 0 if run_checks() else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spacetime-ota",
        description="Multi-slot over-the-air computation experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a sweep and write CSV tables")
    run.add_argument("--config", help="YAML config file (all keys optional)")
    run.add_argument("--seed", type=int, help="override master_seed")
    run.add_argument("--output", help="output directory (overrides output_dir)")
    run.add_argument("--threads", type=int, default=1,
                     help="worker threads over realizations")
    run.set_defaults(func=_cmd_run)

    summ = sub.add_parser("summarize", help="aggregate a results.csv")
    summ.add_argument("results", help="path to results.csv")
    summ.add_argument("--output", help="summary.csv path (default: next to results)")
    summ.set_defaults(func=_cmd_summarize)

    chk = sub.add_parser("check", help="run the quick invariant/oracle checks")
    chk.set_defaults(func=_cmd_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
