"""Command-line entry point: run experiments, regenerate plots, compare runs.

Exit codes: 0 success, 1 configuration error, 2 training failure, 3 I/O
failure.  The dataset cache directory can be moved with $GANPRIVACY_CACHE.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .data import DataError
from .experiment import ConfigError, compare_runs, emit_plots, run_experiment
from .trainers import TrainingError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_TRAINING = 2
EXIT_IO = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ganprivacy",
        description="Train privacy-preserving GANs, attack them, and report the metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one experiment from a YAML config")
    run.add_argument("config", type=Path)
    run.add_argument("--output-dir", type=Path, default=None, help="override the config's output_dir")
    run.add_argument("--force", action="store_true", help="overwrite an existing run directory")

    plot = sub.add_parser("plot", help="regenerate plots for a run directory")
    plot.add_argument("run_dir", type=Path)

    compare = sub.add_parser("compare", help="aggregate several runs into a comparison CSV")
    compare.add_argument("run_dirs", type=Path, nargs="+")
    compare.add_argument("--out", type=Path, default=Path("comparison"))
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            run_dir = run_experiment(args.config, output_dir=args.output_dir, force=args.force)
            print(f"run complete: {run_dir}")
        elif args.command == "plot":
            for path in emit_plots(args.run_dir):
                print(path)
        elif args.command == "compare":
            print(compare_runs(args.run_dirs, args.out))
    except (ConfigError, DataError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingError as exc:
        print(f"training failure: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
