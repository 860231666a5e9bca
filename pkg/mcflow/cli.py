"""
Command line front end.

    python -m mcflow <subcommand> --config <path> [--out <dir>] [--seed <u64>]

Exit code 0 when every asserted bound passes, 1 when a bound fails or a run
aborts, 2 when the config is invalid.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from mcflow import __version__
from mcflow.experiments import HANDLERS
from mcflow.shared.artifact_store import ArtifactStore
from mcflow.shared.errors import BoundViolation, ConfigError, MCFlowError
from mcflow.shared.log_setup import setup_logging
from mcflow.shared.models import ExperimentConfig, ExperimentSummary
from mcflow.shared.settings import load_environment, load_experiment_config, load_global_settings, resolve_output_dir

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='mcflow',
        description='Graphical mean curvature flow as a heat-kernel fixed point, with numerical certificates.',
    )
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    parser.add_argument('--settings', type=Path, default=None, help='Global settings YAML (default config/config.yaml)')
    subparsers = parser.add_subparsers(dest='subcommand', required=True)
    for name in HANDLERS:
        sub = subparsers.add_parser(name)
        sub.add_argument('--config', type=Path, required=True, help='Experiment config YAML')
        sub.add_argument('--out', default=None, help='Output directory')
        sub.add_argument('--seed', type=int, default=None, help='Override the config seed')
        if name == 'plot':
            sub.add_argument('--input', default=None, help='CSV to render')
    return parser


def prepare_config(args: argparse.Namespace) -> ExperimentConfig:
    """
    Load the experiment config and apply command-line overrides.

    Raises:
        ConfigError: invalid config, or one written for another subcommand
    """
    config = load_experiment_config(args.config)
    if config.experiment != args.subcommand:
        raise ConfigError(f"{args.config}:1: experiment: config is for '{config.experiment}', not '{args.subcommand}'")

    updates = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
        updates['seed'] = args.seed
    if getattr(args, 'input', None):
        updates['plot'] = config.plot.model_copy(update={'input': args.input})
    if updates:
        config = config.model_copy(update=updates)
    return config


def run(subcommand: str, config: ExperimentConfig, store: ArtifactStore) -> ExperimentSummary:
    """Dispatch one experiment; the handler writes its own summary."""
    logger.info(f"Running {subcommand} (seed {config.seed}) into {store.root}")
    return HANDLERS[subcommand](config, store)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    load_environment()
    try:
        settings = load_global_settings(args.settings)
    except ConfigError as e:
        print(e, file=sys.stderr)
        return EXIT_CONFIG
    setup_logging(settings.logging.level, settings.logging.format)

    try:
        config = prepare_config(args)
        store = ArtifactStore(
            resolve_output_dir(config, args.out),
            csv_digits=settings.artifacts.csv_digits,
            snapshot_stride=settings.artifacts.snapshot_stride,
        )
        summary = run(args.subcommand, config, store)
    except ConfigError as e:
        print(e, file=sys.stderr)
        return EXIT_CONFIG
    except BoundViolation as e:
        logger.error(f"Bound violated: {e}", exc_info=True)
        return EXIT_FAILED
    except MCFlowError as e:
        logger.error(f"{args.subcommand} aborted: {e}", exc_info=True)
        return EXIT_FAILED
    except OSError as e:
        logger.error(f"Cannot write output: {e}", exc_info=True)
        return EXIT_FAILED

    if not summary.passed:
        failed = ', '.join(check.name for check in summary.failed_checks())
        logger.error(f"{args.subcommand} failed bounds: {failed}")
        return EXIT_FAILED
    return EXIT_OK
