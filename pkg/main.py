#!/usr/bin/env python3
"""
Harmonic power-flow command line.

    hpf run --config src/data/study_system.yaml --with-oracle

Exit codes: 0 success, 2 non-convergence, 3 configuration error,
1 any other model or simulation failure.
"""

import argparse
import logging
import os
import sys

# Add src directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.config import STUDIES, load_study_config
from src.exceptions import ConfigError, HpfError, SolverError
from src.studies import StudyResult, run_study

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_NON_CONVERGENCE = 2
EXIT_CONFIG = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hpf", description="Harmonic power-flow studies")
    commands = parser.add_subparsers(dest="command", required=True)
    run = commands.add_parser("run", help="run a study from a YAML study file")
    run.add_argument("--config", required=True,
                     help="study file (path or bundled:<name>, e.g. bundled:study_system)")
    run.add_argument("--study", choices=STUDIES, help="override the study named in the file")
    run.add_argument("--seed", type=int, help="seed for random initial points")
    run.add_argument("--out", help="output directory")
    run.add_argument("--with-oracle", action="store_true", help="also run the time-domain comparison")
    run.add_argument("--hmax", type=int, help="highest harmonic order")
    run.add_argument("--tol", type=float, help="Newton tolerance in p.u.")
    run.add_argument("--verbose", action="store_true", help="debug logging")
    return parser


def print_summary(result: StudyResult) -> None:
    print(f"\n=== Study Summary: {result.study} ===")
    for key, value in result.summary.items():
        if isinstance(value, float):
            print(f"  {key.replace('_', ' ')}: {value:.6g}")
        else:
            print(f"  {key.replace('_', ' ')}: {value}")
    print(f"\n=== Artefacts ({len(result.files)}) in {result.output_dir} ===")
    for path in result.files:
        print(f"  {os.path.relpath(path, result.output_dir)}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_study_config(args.config).with_overrides(
            study=args.study, seed=args.seed, output_dir=args.out, with_oracle=args.with_oracle,
            h_max=args.hmax, tol=args.tol)
        print(f"=== Harmonic Power Flow: {cfg.study} ===")
        result = run_study(cfg)
    except ConfigError as exc:
        print(f"Configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"Solver failed: {exc}", file=sys.stderr)
        return EXIT_NON_CONVERGENCE
    except HpfError as exc:
        print(f"Study failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print_summary(result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
