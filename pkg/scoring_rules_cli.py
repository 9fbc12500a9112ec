"""
Command-line front end for the local scoring rule experiments.

    local-scoring-rules <experiment> [--config FILE] [--seed N] [--out FILE]
                        [--threads N] [--log-level LEVEL]

Exit status: 0 success, 1 a check failed, 2 invalid configuration,
3 numerical failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from tools.config import EXPERIMENTS, load_config, with_overrides
from tools.errors import ConfigError
from tools.experiments import ExperimentRunner
from tools.report_format import TableFormats

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID_CONFIG = 2
EXIT_NUMERICAL_FAILURE = 3

logger = logging.getLogger("local_scoring_rules")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="local-scoring-rules",
        description="Local proper scoring rules: scores, divergences, SURE and cross-validation experiments.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS, help="Experiment to run")
    parser.add_argument("--config", type=Path, default=None, help="JSON experiment configuration")
    parser.add_argument("--seed", type=int, default=None, help="Override the configured seed")
    parser.add_argument("--out", type=str, default=None, help="CSV output path (markdown summary on stdout if omitted)")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads for Monte Carlo engines")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level on stderr")
    return parser


def configure_logging(level: str) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level)


def _extra_path(out: Path, table: str) -> Path:
    return out.with_name(f"{out.stem}_{table}{out.suffix or '.csv'}")


def write_outputs(result: dict, out: Optional[str]) -> None:
    table = result["table"]
    if out is None:
        print(ExperimentRunner.summarize(result))
        for name, rows in result.get("extra_tables", {}).items():
            print()
            print(TableFormats.to_markdown(rows, name))
        return
    path = TableFormats.write_csv(result["rows"], table, out)
    logger.info("wrote %s", path)
    for name, rows in result.get("extra_tables", {}).items():
        extra = TableFormats.write_csv(rows, name, _extra_path(path, name))
        logger.info("wrote %s", extra)
    print(TableFormats.summary_line(table, result))


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    if args.seed is not None and args.seed < 0:
        print("invalid configuration: --seed must be nonnegative", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    if args.threads is not None and args.threads < 1:
        print("invalid configuration: --threads must be at least 1", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    try:
        config = load_config(args.config, args.experiment)
    except ConfigError as exc:
        print(f"invalid configuration ({exc.field}): {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    config = with_overrides(config, seed=args.seed, threads=args.threads, out=args.out)

    result = ExperimentRunner().run(config)
    if not result["success"]:
        print(f"numerical failure: {result['error']}", file=sys.stderr)
        return EXIT_NUMERICAL_FAILURE

    write_outputs(result, config.out)
    if not result["passed"]:
        failed = [name for name, ok in result["checks"].items() if not ok]
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
