from django.core.management.base import CommandError

from allocation.management.base import NUMERICAL_ERROR, AllocationCommand, positive_float
from allocation.protocol import run
from allocation.results import rows_from_run, write_results, write_rows, write_trace


class Command(AllocationCommand):
    help = 'Run the bidding protocol once on every MME domain of a scenario'

    def add_arguments(self, parser):
        self.add_scenario_arguments(parser)
        parser.add_argument('--rate', type=positive_float, help='Total rate of every domain (overrides the file)')
        self.add_engine_arguments(parser)
        parser.add_argument('--out', type=str, help='Results CSV path (stdout if omitted)')
        parser.add_argument('--trace-dir', type=str, help='Directory for sectors.csv and users.csv round traces')

    def run_command(self, options):
        scenario = self.load_source(options)
        cfg = self.engine_config(options)
        rate = options.get('rate')
        if rate is not None:
            scenario = scenario.with_total_rate(rate)
        if options.get('global_domain'):
            scenario = scenario.pooled()

        result = run(scenario, cfg)
        rows = rows_from_run(result)
        if options.get('out'):
            write_results(rows, options['out'])
        else:
            write_rows(rows, self.stdout)
        if options.get('trace_dir'):
            write_trace(result, options['trace_dir'])

        out = self.summary(options)
        for domain in result.domains:
            prices = sorted({s.p_l for s in domain.sectors if s.p_l is not None})
            price = f"{prices[0]:.6g}" if len(prices) == 1 else ', '.join(f"{p:.6g}" for p in prices)
            status = 'converged' if domain.converged else 'NOT converged'
            out.write(
                f"Domain {domain.domain}: {status} after {domain.rounds} rounds, "
                f"R={domain.total_rate:g}, sector prices {price}"
            )

        if not result.converged:
            raise CommandError(
                f"No convergence within {cfg.max_rounds} rounds; "
                f"try --damping below 1 or --adaptive-damping",
                returncode=NUMERICAL_ERROR,
            )
        out.write(self.style.SUCCESS(f"Allocated rates to {len(rows)} users"))
