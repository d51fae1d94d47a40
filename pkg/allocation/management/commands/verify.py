from django.conf import settings
from django.core.management.base import CommandError

from allocation.management.base import NUMERICAL_ERROR, AllocationCommand, non_negative_int, positive_float
from allocation.oracle import verify


class Command(AllocationCommand):
    help = 'Compare distributed rates with the centralized oracle and certify optimality'

    def add_arguments(self, parser):
        self.add_scenario_arguments(parser)
        parser.add_argument('--rate', type=positive_float, help='Total rate of every domain (overrides the file)')
        self.add_engine_arguments(parser)
        parser.add_argument('--trials', type=non_negative_int, default=1000,
                            help='Random transfers tried by the optimality check (default 1000)')
        parser.add_argument('--tolerance', type=float,
                            help='Allowed |distributed - centralized| per user (default max(1e-2, 10*delta))')
        parser.add_argument('--seed', type=int, help='Seed of the transfer sampler')

    def run_command(self, options):
        scenario = self.load_source(options)
        cfg = self.engine_config(options)
        if options.get('rate') is not None:
            scenario = scenario.with_total_rate(options['rate'])
        if options.get('global_domain'):
            scenario = scenario.pooled()
        seed = options.get('seed')
        if seed is None:
            seed = settings.ALLOCATION_CERTIFY_SEED

        report = verify(
            scenario, cfg,
            trials=options['trials'],
            tolerance=options.get('tolerance'),
            seed=seed,
        )

        self.stdout.write(f"{'user':<8} {'domain':<8} {'distributed':>14} {'centralized':>14} {'|diff|':>10}")
        for row in report.rows:
            flag = '' if row.difference <= report.tolerance else '  !'
            self.stdout.write(
                f"{row.user:<8} {row.domain:<8} {row.distributed:>14.9g} "
                f"{row.centralized:>14.9g} {row.difference:>10.3g}{flag}"
            )
        for domain, certified in sorted(report.certified.items()):
            verdict = 'passed' if certified else 'FAILED'
            self.stdout.write(f"Domain {domain}: optimality check {verdict} ({options['trials']} transfers)")

        if not report.passed:
            reasons = []
            if not report.converged:
                reasons.append('distributed run did not converge')
            if not report.within_tolerance:
                reasons.append(
                    f"max difference {report.max_difference:.3g} exceeds tolerance {report.tolerance:.3g}"
                )
            if not all(report.certified.values()):
                reasons.append('optimality check failed')
            raise CommandError('Verification failed: ' + '; '.join(reasons), returncode=NUMERICAL_ERROR)
        self.stdout.write(self.style.SUCCESS(
            f"Distributed allocation matches the oracle within {report.tolerance:.3g}"
        ))
