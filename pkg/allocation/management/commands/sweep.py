from django.conf import settings
from django.core.management.base import CommandError

from allocation.management.base import (
    INPUT_ERROR,
    NUMERICAL_ERROR,
    AllocationCommand,
    non_negative_int,
    positive_float,
)
from allocation.results import write_results, write_rows
from allocation.scenarios import SweepSpec
from allocation.sweep import run_sweep


class Command(AllocationCommand):
    help = 'Run a scenario over a grid of total rates, one results row per (R, user)'

    def add_arguments(self, parser):
        self.add_scenario_arguments(parser)
        parser.add_argument('--start', type=positive_float, help='First total rate of the grid')
        parser.add_argument('--end', type=positive_float, help='Last total rate of the grid')
        parser.add_argument('--step', type=positive_float, help='Grid spacing')
        self.add_engine_arguments(parser)
        parser.add_argument('--out', type=str, help='Results CSV path (stdout if omitted)')
        parser.add_argument('--workers', type=non_negative_int, help='Thread-pool size for sweep points')
        parser.add_argument(
            '--celery', action='store_true',
            help='Dispatch sweep points as Celery tasks (eager unless CELERY_TASK_ALWAYS_EAGER is off)',
        )

    def grid(self, scenario, options):
        rates = scenario.sweep_rates()
        start = options.get('start') or rates[0]
        end = options.get('end') or max(rates[-1], start)
        step = options.get('step') or (rates[1] - rates[0] if len(rates) > 1 else SweepSpec().step)
        if start > end:
            raise CommandError(f"--start {start:g} exceeds --end {end:g}", returncode=INPUT_ERROR)
        return SweepSpec(start=start, end=end, step=step).rates()

    def run_command(self, options):
        scenario = self.load_source(options)
        cfg = self.engine_config(options)
        rates = self.grid(scenario, options)
        workers = options.get('workers') or settings.ALLOCATION_SWEEP_WORKERS

        sweep = run_sweep(
            scenario, rates, cfg,
            global_domain=options.get('global_domain', False),
            workers=workers,
            use_celery=options.get('celery', False),
        )
        rows = sweep.rows
        if options.get('out'):
            write_results(rows, options['out'])
        else:
            write_rows(rows, self.stdout)

        out = self.summary(options)
        out.write(f"Swept {len(rates)} rates from {rates[0]:g} to {rates[-1]:g}: {len(rows)} rows")
        if not sweep.converged:
            raise CommandError(
                f"No convergence at R={', '.join(f'{r:g}' for r in sweep.failed_rates)}",
                returncode=NUMERICAL_ERROR,
            )
        out.write(self.style.SUCCESS('All sweep points converged'))
