"""Command line entry point: ``lslrom run`` and ``lslrom validate``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
The output directory is taken from ``--out``, then the ``LSLROM_OUTPUT_DIR``
environment variable, then the ``output_dir`` configuration key.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .config import MODES, load_config
from .exceptions import ConfigurationError, DataInconsistencyError, DiscretizationError
from .experiments import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _modes(text):
    modes = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in modes if m not in MODES]
    if not modes or bad:
        raise argparse.ArgumentTypeError(f"modes must be a comma list from {','.join(MODES)}")
    return modes


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lslrom", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment configuration")
    run.add_argument("config")
    run.add_argument("--out", help="output directory")
    run.add_argument("--modes", type=_modes, help="comma separated subset of born,lsl,cheated")
    run.add_argument("--seed", type=int, help="noise seed")
    val = sub.add_parser("validate", help="check a configuration file")
    val.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigurationError as exc:
        for problem in exc.problems:
            print(f"{args.config}: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"{args.config}: ok ({cfg.scenario}, {len(cfg.sources)} sources, n={cfg.n})")
        return EXIT_OK
    try:
        report, _, files = run_experiment(cfg, out_dir=args.out, modes=args.modes,
                                          seed=args.seed)
    except ConfigurationError as exc:
        for problem in exc.problems:
            print(f"{args.config}: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (DiscretizationError, DataInconsistencyError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for mode, stats in report.modes.items():
        print(f"{mode:8s} misfit={stats['misfit']:.4g} image_error={stats['image_error']:.4g} "
              f"ncc={stats['ncc']:.4g} ghost={stats['ghost_ratio']:.4g}")
    print(f"wrote {len(files)} files to {files[-1].parent if files else '-'}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
