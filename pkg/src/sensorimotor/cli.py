"""
Command-line entry point.

Usage:
  sensorimotor [--config PATH] [--seed INT] [--workers INT] [--out DIR]
               [--stage-cache on|off] [-v | -q] {explore,metric,embed,toy,analyze,all}

Exit codes: 0 success, 1 an analysis check failed, 2 bad configuration,
argument or artifact, 3 numerical failure.
"""

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from .config import ExperimentConfig
from .errors import (
    ArtifactError,
    ConfigError,
    DegenerateGeometryError,
    MetricError,
    NumericalError,
    ProbeFamilyError,
)
from .logging import configure_logging, logging_redirect_meter
from .pipeline import SUMMARY, run_analysis, run_embedding, run_exploration, run_metric, run_toy

__all__ = ["main", "EXIT_OK", "EXIT_FAIL", "EXIT_USAGE", "EXIT_NUMERICAL"]
log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
STAGES = ("explore", "metric", "embed", "toy", "analyze", "all")


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected 'on' or 'off', got {value!r}")
    return value == "on"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sensorimotor",
        description="Discover an environment-independent representation of a simulated"
        " arm's retina pose from its sensorimotor data.",
    )
    parser.add_argument("stage", choices=STAGES, help="pipeline stage to run")
    parser.add_argument("--config", type=Path, help="TOML experiment configuration")
    parser.add_argument("--seed", type=int, help="master seed (overrides the config)")
    parser.add_argument("--workers", type=int, help="worker processes")
    parser.add_argument("--out", type=Path, help="run directory")
    parser.add_argument(
        "--stage-cache",
        type=_on_off,
        metavar="on|off",
        help="skip stages whose inputs are unchanged [default: on]",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.from_toml(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(
        master_seed=args.seed, workers=args.workers, out=args.out, stage_cache=args.stage_cache
    )


def run_stage(stage: str, cfg: ExperimentConfig) -> int:
    if stage in ("explore", "all"):
        run_exploration(cfg)
    if stage in ("metric", "all"):
        run_metric(cfg)
    if stage in ("embed", "all"):
        run_embedding(cfg)
    if stage == "toy":
        document, passed = run_toy(cfg)
        for name in ("toy_one_motor", "toy_two_motor"):
            print(f"{name:<23} {'PASS' if document[name]['passed'] else 'FAIL'}")
        return EXIT_OK if passed else EXIT_FAIL
    if stage in ("analyze", "all"):
        _, passed = run_analysis(cfg)
        print((cfg.out / SUMMARY).read_text(encoding="utf-8"), end="")
        return EXIT_OK if passed else EXIT_FAIL
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    """
    Parameters
    ----------
    argv  : list of str, optional
        Arguments without the program name [default: sys.argv[1:]].

    Returns
    -------
    out  : int
        Process exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    configure_logging(-1 if args.quiet else int(args.verbose))

    try:
        cfg = load_config(args)
        log.debug("config %s", cfg.config_hash)
        with logging_redirect_meter():
            return run_stage(args.stage, cfg)
    except (ConfigError, ArtifactError, MetricError, ProbeFamilyError) as e:
        log.error("%s: %s", type(e).__name__, e)
        return EXIT_USAGE
    except (NumericalError, DegenerateGeometryError) as e:
        log.error("%s: %s", type(e).__name__, e)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
