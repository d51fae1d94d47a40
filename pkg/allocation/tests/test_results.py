"""
Tests for results and trace CSV output.
"""

import csv
import io
import os
import tempfile

from django.test import SimpleTestCase

from allocation.protocol import EngineConfig, run
from allocation.results import (
    RESULT_COLUMNS,
    SECTOR_TRACE_COLUMNS,
    USER_TRACE_COLUMNS,
    ResultRow,
    format_value,
    rows_from_run,
    write_results,
    write_rows,
    write_trace,
)
from allocation.scenarios import DomainSpec, Scenario, SectorSpec, builtin_table1


def small_run():
    return run(builtin_table1().restricted_to(['A-S1', 'B-S1'], 60.0, domain_id='AB'))


class FormatValueTest(SimpleTestCase):
    """Test cases for CSV cell formatting."""

    def test_values(self):
        """Test floats keep 9 significant digits, booleans are lower case and None is empty."""
        self.assertEqual(format_value(1 / 3), '0.333333333')
        self.assertEqual(format_value(100.0), '100')
        self.assertEqual(format_value(1.5e-12), '1.5e-12')
        self.assertEqual(format_value(True), 'true')
        self.assertEqual(format_value(False), 'false')
        self.assertEqual(format_value(None), '')
        self.assertEqual(format_value(42), '42')
        self.assertEqual(format_value('A-S1'), 'A-S1')


class WriteRowsTest(SimpleTestCase):
    """Test cases for the results table."""

    def test_header_only(self):
        """Test an empty run still writes the header."""
        stream = io.StringIO()
        self.assertEqual(write_rows([], stream), 0)
        self.assertEqual(stream.getvalue(), ','.join(RESULT_COLUMNS) + '\n')

    def test_rows_sorted_by_rate_then_user(self):
        """Test rows come out ordered by (R, user id) whatever the input order."""
        def row(R, user):
            return ResultRow('s', R, 'D', 'S', user, 'log', 1.0, 0.5, 0.5, 3, True)

        stream = io.StringIO()
        write_rows([row(100.0, 'B1'), row(50.0, 'Z9'), row(100.0, 'A1')], stream)
        reader = list(csv.DictReader(io.StringIO(stream.getvalue())))
        self.assertEqual([(r['R'], r['user']) for r in reader], [('50', 'Z9'), ('100', 'A1'), ('100', 'B1')])
        self.assertEqual(reader[0]['converged'], 'true')

    def test_rows_from_run(self):
        """Test one row per user carrying the run's rate, rounds and convergence."""
        result = small_run()
        rows = rows_from_run(result)
        self.assertEqual(len(rows), 12)
        self.assertEqual([r.user for r in rows], sorted(r.user for r in rows))
        self.assertTrue(all(r.R == 60.0 and r.domain == 'AB' for r in rows))
        self.assertTrue(all(r.rounds == result.domains[0].rounds for r in rows))
        self.assertEqual({r.kind for r in rows}, {'sigmoid', 'log'})

    def test_pooled_rows_carry_the_pooled_total(self):
        """Test R is the total rate of the row's domain after pooling."""
        network = builtin_table1()
        scenario = Scenario(
            name='two',
            domain=[DomainSpec(id='A', total_rate=30.0), DomainSpec(id='B', total_rate=20.0)],
            sector=[SectorSpec(id='A-S1', domain='A'), SectorSpec(id='B-S1', domain='B')],
            user=[user for user in network.user if user.sector in ('A-S1', 'B-S1')],
        )
        cfg = EngineConfig(adaptive_damping=True)
        separate = rows_from_run(run(scenario, cfg))
        self.assertEqual({(r.domain, r.R) for r in separate}, {('A', 30.0), ('B', 20.0)})
        pooled = rows_from_run(run(scenario.pooled(), cfg))
        self.assertEqual({(r.domain, r.R) for r in pooled}, {('ALL', 50.0)})

    def test_byte_identical(self):
        """Test two runs of the same scenario write the same bytes."""
        with tempfile.TemporaryDirectory() as tmp:
            paths = [os.path.join(tmp, f"run{i}.csv") for i in range(2)]
            for path in paths:
                self.assertEqual(write_results(rows_from_run(small_run()), path), 12)
            with open(paths[0], 'rb') as first, open(paths[1], 'rb') as second:
                self.assertEqual(first.read(), second.read())


class WriteTraceTest(SimpleTestCase):
    """Test cases for the round traces."""

    def test_trace_files(self):
        """Test sectors.csv and users.csv hold one row per sector or user per round."""
        result = small_run()
        rounds = result.domains[0].rounds
        with tempfile.TemporaryDirectory() as tmp:
            directory = os.path.join(tmp, 'trace')
            write_trace(result, directory)
            with open(os.path.join(directory, 'sectors.csv'), encoding='utf-8') as file:
                sectors = list(csv.reader(file))
            with open(os.path.join(directory, 'users.csv'), encoding='utf-8') as file:
                users = list(csv.reader(file))

        self.assertEqual(sectors[0], SECTOR_TRACE_COLUMNS)
        self.assertEqual(users[0], USER_TRACE_COLUMNS)
        self.assertEqual(len(sectors) - 1, 2 * rounds)
        self.assertEqual(len(users) - 1, 12 * rounds)
        self.assertEqual(sectors[1][:3], ['1', 'AB', 'A-S1'])
        self.assertEqual(sectors[1][6], 'false')
        self.assertEqual(users[1][:3], ['1', 'A1', '1'])
