"""Command-line front end: simulate | verify | holonomy | cartan."""
import argparse
import logging
import os
import sys

import psutil

from agents.orchestrator import COMMANDS, EXIT_CONFIG, Orchestrator
from utils.config_manager import ScenarioConfig
from utils.errors import ConfigError

# Configure logging
logger = logging.getLogger(__name__)

# tolerance replaced by --tol for each command
PRIMARY_TOLERANCE = {
    "simulate": "reconstruction",
    "verify": "identity",
    "holonomy": "split",
    "cartan": "order_band",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="higher-gauge-lab",
        description="Higher gauge theory over the Grassmannian: simulations, identity suites and holonomies.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config",
                        help="scenario file (JSON, or YAML with a .yaml/.yml suffix; default: the stored config.json)")
    parser.add_argument("--out", help="output directory (default: output.dir of the scenario)")
    parser.add_argument("--seed", type=int, help="override the scenario seed")
    parser.add_argument("--tol", type=float, help="override the command's pass/fail tolerance")
    parser.add_argument("--threads", type=int, default=psutil.cpu_count(logical=True) or 1,
                        help="worker threads (default: available cores)")
    parser.add_argument("--no-timestamp", action="store_true", help="omit the timestamp from the report")
    parser.add_argument("--fs-linear", action="store_true",
                        help="use arccos|det| instead of arccos|det|^2 in the Fubini-Study distance")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    return parser


def scenario_from_args(args: argparse.Namespace) -> ScenarioConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.tol is not None:
        overrides["tolerances"] = {PRIMARY_TOLERANCE[args.command]: args.tol}
    if args.fs_linear:
        overrides["numerics"] = {"fs_squared": False}
    return ScenarioConfig.from_file(args.config, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.threads is not None and args.threads < 1:
        logger.error(f"--threads must be positive, got {args.threads}")
        return EXIT_CONFIG
    try:
        scenario = scenario_from_args(args)
    except ConfigError as e:
        logger.error(f"Configuration error: {str(e)}")
        return EXIT_CONFIG

    base_dir = os.path.dirname(os.path.abspath(args.config)) if args.config else None
    orchestrator = Orchestrator({
        "threads": args.threads,
        "holonomy_config": {"base_dir": base_dir},
        "report_config": {"timestamp": not args.no_timestamp},
    })
    result = orchestrator.run_command(args.command, scenario, args.out)
    return result["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
