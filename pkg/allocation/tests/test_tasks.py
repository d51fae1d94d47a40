"""
Unit tests for Celery tasks.

This module tests sweep-point execution on a worker and its error payloads.
"""

from dataclasses import asdict

from django.test import SimpleTestCase, override_settings
from unittest.mock import patch

from allocation.exceptions import AllocationError, SolverFailureError
from allocation.protocol import EngineConfig
from allocation.scenarios import builtin_table1
from allocation.sweep import _point_from_payload, run_point, run_sweep
from allocation.tasks import run_sweep_point_task


def sector_one():
    return builtin_table1().restricted_to(['A-S1'], 100.0)


@override_settings(CELERY_TASK_ALWAYS_EAGER=True)
class RunSweepPointTaskTest(SimpleTestCase):
    """Test cases for the run_sweep_point_task Celery task."""

    def setUp(self):
        """Set up the scenario payload."""
        self.scenario = sector_one()
        self.payload = self.scenario.model_dump(mode='json')
        self.engine = asdict(EngineConfig())

    def test_success(self):
        """Test a sweep point returns its rows like a local run."""
        result = run_sweep_point_task(self.payload, 50.0, self.engine)

        self.assertEqual(result['status'], 'success')
        self.assertEqual(result['rate'], 50.0)
        self.assertTrue(result['converged'])
        self.assertEqual(len(result['rows']), 6)

        local = run_point(self.scenario, 50.0)
        self.assertEqual(_point_from_payload(result).rows, local.rows)

    def test_global_domain(self):
        """Test the pooled flag reaches the worker and R reports the pooled total."""
        engine = asdict(EngineConfig(adaptive_damping=True))
        result = run_sweep_point_task(builtin_table1().model_dump(mode='json'), 100.0, engine, True)
        self.assertEqual(result['status'], 'success')
        self.assertEqual(result['rate'], 100.0)
        self.assertEqual({row['domain'] for row in result['rows']}, {'ALL'})
        self.assertTrue(all(row['R'] == 300.0 for row in result['rows']))

    @patch('allocation.tasks.run_point')
    def test_allocation_error(self, mock_run_point):
        """Test a numerical failure is returned with its type."""
        mock_run_point.side_effect = SolverFailureError('no bracket')

        result = run_sweep_point_task(self.payload, 50.0, self.engine)

        self.assertEqual(result['status'], 'error')
        self.assertEqual(result['error_type'], 'SolverFailureError')
        self.assertIn('no bracket', result['error'])

    def test_invalid_engine(self):
        """Test a bad engine configuration is reported, not raised."""
        result = run_sweep_point_task(self.payload, 50.0, dict(self.engine, delta=-1))
        self.assertEqual(result['status'], 'error')
        self.assertEqual(result['error_type'], 'InvalidParameterError')

    @patch('allocation.tasks.run_point')
    def test_unexpected_error(self, mock_run_point):
        """Test unexpected exceptions are caught as well."""
        mock_run_point.side_effect = RuntimeError('worker lost')

        result = run_sweep_point_task(self.payload, 50.0, self.engine)

        self.assertEqual(result['status'], 'error')
        self.assertEqual(result['error_type'], 'RuntimeError')


class CelerySweepTest(SimpleTestCase):
    """Test cases for dispatching a sweep through Celery."""

    def test_matches_serial_sweep(self):
        """Test Celery and serial sweeps give the same rows."""
        rates = [25.0, 50.0, 100.0]
        serial = run_sweep(sector_one(), rates)
        dispatched = run_sweep(sector_one(), rates, use_celery=True)
        self.assertEqual(dispatched.rows, serial.rows)
        self.assertTrue(dispatched.converged)

    def test_error_payload_is_raised(self):
        """Test an error payload becomes the matching exception."""
        with self.assertRaises(SolverFailureError):
            _point_from_payload({'status': 'error', 'rate': 50.0, 'error': 'x',
                                 'error_type': 'SolverFailureError'})
        with self.assertRaises(AllocationError):
            _point_from_payload({'status': 'error', 'rate': 50.0, 'error': 'x', 'error_type': 'KeyError'})
