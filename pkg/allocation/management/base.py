"""
Shared plumbing of the run, sweep and verify commands.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure or
non-convergence.
"""

import argparse
import logging
import sys

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from allocation.exceptions import (
    AllocationError,
    InvalidParameterError,
    InvalidPriceError,
    RateDomainError,
    ScenarioError,
)
from allocation.protocol import EngineConfig
from allocation.scenarios import Scenario, builtin_table1, load_scenario

logger = logging.getLogger(__name__)

INPUT_ERROR = 1
NUMERICAL_ERROR = 2

INPUT_ERRORS = (ScenarioError, InvalidParameterError, RateDomainError, InvalidPriceError)


def positive_float(value):
    try:
        number = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number: {value!r}")
    if not number > 0 or number == float('inf'):
        raise argparse.ArgumentTypeError(f"must be a finite number > 0, got {value!r}")
    return number


def non_negative_int(value):
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer: {value!r}")
    if number < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value!r}")
    return number


class AllocationCommand(BaseCommand):
    """Base class: scenario source, engine flags and exit-code mapping."""

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)

        def usage_error(message):
            if parser.called_from_command_line:
                parser.print_usage(sys.stderr)
                sys.stderr.write(f"{parser.prog}: error: {message}\n")
                sys.exit(INPUT_ERROR)
            raise CommandError(f"Error: {message}", returncode=INPUT_ERROR)

        parser.error = usage_error
        return parser

    def add_scenario_arguments(self, parser):
        source = parser.add_mutually_exclusive_group()
        source.add_argument('scenario', nargs='?', type=str, help='Path to a scenario YAML file')
        source.add_argument('--table1', action='store_true', help='Use the built-in three-cell network')
        parser.add_argument(
            '--global-domain', action='store_true',
            help='Pool all sectors under one MME domain instead of one domain per base station',
        )

    def add_engine_arguments(self, parser):
        parser.add_argument('--delta', type=positive_float, help='Convergence threshold on aggregate bids')
        parser.add_argument('--damping', type=positive_float, help='Bid damping factor in (0, 1]')
        parser.add_argument('--max-rounds', type=non_negative_int, help='Round limit per domain')
        parser.add_argument(
            '--adaptive-damping', action=argparse.BooleanOptionalAction, default=None,
            help='Halve the damping whenever the total bid of a domain oscillates '
                 '(default: ALLOCATION_ADAPTIVE_DAMPING)',
        )

    def load_source(self, options) -> Scenario:
        if options.get('table1'):
            return builtin_table1()
        if not options.get('scenario'):
            raise CommandError('Give a scenario path or --table1', returncode=INPUT_ERROR)
        return load_scenario(options['scenario'])

    def engine_config(self, options) -> EngineConfig:
        def pick(name, default):
            value = options.get(name)
            return default if value is None else value

        return EngineConfig(
            delta=pick('delta', settings.ALLOCATION_DELTA),
            max_rounds=pick('max_rounds', settings.ALLOCATION_MAX_ROUNDS),
            damping=pick('damping', settings.ALLOCATION_DAMPING),
            initial_bid=settings.ALLOCATION_INITIAL_BID,
            adaptive_damping=pick('adaptive_damping', settings.ALLOCATION_ADAPTIVE_DAMPING),
        )

    def handle(self, *args, **options):
        try:
            self.run_command(options)
        except INPUT_ERRORS as e:
            logger.error(f"{self.__class__.__module__}: {e}")
            raise CommandError(str(e), returncode=INPUT_ERROR)
        except AllocationError as e:
            logger.error(f"{self.__class__.__module__}: {e}")
            raise CommandError(str(e), returncode=NUMERICAL_ERROR)
        except OSError as e:
            raise CommandError(str(e), returncode=INPUT_ERROR)

    def run_command(self, options):
        raise NotImplementedError('subclasses of AllocationCommand must provide a run_command() method')

    def summary(self, options):
        """Summary stream: stdout, or stderr when the CSV goes to stdout."""
        return self.stdout if options.get('out') else self.stderr
