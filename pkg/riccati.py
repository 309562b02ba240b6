"""
Structured Riccati suite - Main Entry Point
Runs the CARE experiments (decay, divide-and-conquer, TINK, SDRE control) from the command line.
"""
import argparse
import asyncio
import importlib
import logging
import os
import sys
from typing import Dict, List, Optional

from dotenv import load_dotenv

from utils.config import load_config
from utils.database import db
from utils.errors import ConfigError, RiccatiError, SizeCapError

# Load environment variables
load_dotenv()

# Configure logging
logging.basicConfig(
    level=os.getenv('RICCATI_LOG_LEVEL', 'INFO').upper(),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler('riccati.log'),
        logging.StreamHandler()
    ]
)
logger = logging.getLogger('riccati')

VERSION = "1.0.0"

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_SIZE_CAP = 3
EXIT_SOLVER = 4


class RiccatiSuite:
    """Registry of experiments loaded from ``initial_extensions``."""

    def __init__(self):
        self.version = VERSION
        self.experiments: Dict[str, object] = {}
        self.initial_extensions = [
            'experiments.decay',
            'experiments.dac_bench',
            'experiments.tink_bench',
            'experiments.allen_cahn',
            'experiments.cucker_smale',
            'experiments.verify',
        ]

    async def setup_hook(self):
        """Initialize the run ledger and load every experiment module."""
        logger.info("Initializing run ledger...")
        await db.init_db()
        logger.info(f"Run ledger ready at {db.db_path}")

        for extension in self.initial_extensions:
            try:
                module = importlib.import_module(extension)
                await module.setup(self)
                logger.info(f"Loaded extension: {extension}")
            except Exception as e:
                logger.error(f"Failed to load extension {extension}: {e}")

    async def add_experiment(self, experiment) -> None:
        if experiment.name in self.experiments:
            raise ValueError(f"experiment {experiment.name!r} is already registered")
        self.experiments[experiment.name] = experiment

    def get_experiment(self, name: str):
        return self.experiments.get(name)

    async def run(self, command: str, config_path: Optional[str] = None,
                  overrides: Optional[dict] = None) -> int:
        """Run one experiment and return the process exit code."""
        experiment = self.get_experiment(command)
        if experiment is None:
            logger.error(f"Experiment {command!r} is not loaded")
            return EXIT_UNEXPECTED
        try:
            config = load_config(experiment.config_name, config_path, overrides)
            summary = await experiment.run(config)
        except Exception as error:
            return self.on_experiment_error(command, error)
        if experiment.strict and not summary.ok:
            logger.error(f"{command}: {len(summary.failures)} check(s) failed: {', '.join(summary.failures)}")
            return EXIT_SOLVER
        return EXIT_OK

    def on_experiment_error(self, command: str, error: Exception) -> int:
        """Global error handler for experiment runs."""
        if isinstance(error, ConfigError):
            logger.error(f"{command}: invalid configuration: {error}")
            return EXIT_CONFIG
        elif isinstance(error, SizeCapError):
            logger.error(f"{command}: problem too large: {error}")
            return EXIT_SIZE_CAP
        elif isinstance(error, RiccatiError):
            logger.error(f"{command}: {type(error).__name__}: {error}")
            return EXIT_SOLVER
        else:
            logger.error(f"{command}: unexpected error: {error}", exc_info=error)
            return EXIT_UNEXPECTED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='riccati', description="Structured CARE experiments")
    parser.add_argument('--version', action='version', version=f"%(prog)s {VERSION}")
    subparsers = parser.add_subparsers(dest='command', required=True)
    for command in ('decay', 'dac-bench', 'tink-bench', 'allen-cahn', 'cucker-smale', 'verify'):
        sub = subparsers.add_parser(command)
        sub.add_argument('--config', metavar='PATH', help="YAML experiment config")
        sub.add_argument('--out', metavar='DIR', help="output directory")
        sub.add_argument('--seed', metavar='N', type=int, help="single seed, replaces the configured seeds")
        sub.add_argument('--threads', metavar='N', type=int, help="worker threads for independent rows")
    return parser


async def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the suite."""
    args = build_parser().parse_args(argv)
    suite = RiccatiSuite()
    await suite.setup_hook()
    overrides = {'out': args.out, 'seed': args.seed, 'threads': args.threads}
    return await suite.run(args.command, args.config, overrides)


if __name__ == "__main__":
    try:
        sys.exit(asyncio.run(main()))
    except KeyboardInterrupt:
        logger.info("Suite stopped by user")
