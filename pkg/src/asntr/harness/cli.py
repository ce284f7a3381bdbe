"""Command line: ``asntr run``, ``asntr compare`` and ``asntr selftest``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import ConfigError
from .compare import CompareError, compare_directory
from .config import load_config
from .runner import OutputError, run_experiment
from .selftest import selftest

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


def cli_run(config_path, out_dir=None) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"{config_path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    target = Path(out_dir or cfg.output_dir or Path("results") / cfg.name)

    def progress(opt, seed, result):
        print(f"{opt} seed {seed}: {len(result.trace)} iterations, N_g={result.n_grad}, "
              f"stopped by {result.termination}")

    try:
        run_experiment(cfg, target, progress)
    except OutputError as exc:
        for path, msg in exc.failures:
            print(f"cannot write {path}: {msg}", file=sys.stderr)
        return EXIT_FAILURE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(f"outputs in {target}")
    return EXIT_OK


def cli_compare(directory) -> int:
    try:
        written = compare_directory(directory)
    except CompareError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"cannot write in {directory}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    for path in written:
        print(path)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="asntr", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log optimizer warnings")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run every optimizer and seed of a config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", help="output directory (overrides output_dir in the config)")
    p_cmp = sub.add_parser("compare", help="compare asntr and storm_like runs in a directory")
    p_cmp.add_argument("--dir", required=True)
    sub.add_parser("selftest", help="run the quick property checks")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return cli_run(args.config, args.out)
    if args.command == "compare":
        return cli_compare(args.dir)
    return selftest()


if __name__ == "__main__":
    sys.exit(main())
