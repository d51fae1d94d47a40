from __future__ import absolute_import, unicode_literals
from celery import shared_task
from dataclasses import asdict
import logging

from .exceptions import AllocationError
from .protocol import EngineConfig
from .scenarios import Scenario
from .sweep import run_point

logger = logging.getLogger(__name__)


@shared_task(bind=True)
def run_sweep_point_task(self, scenario_data, rate, engine, global_domain=False):
    """
    Run one sweep point on a worker.

    Args:
        scenario_data (dict): Scenario as dumped by ``Scenario.model_dump(mode='json')``
        rate (float): Total rate of every domain at this point
        engine (dict): ``EngineConfig`` fields
        global_domain (bool): Pool every sector under one MME domain

    Returns:
        dict: ``status`` plus the result rows, or the error and its type
    """
    logger.info(f"Starting sweep point R={rate}")

    try:
        scenario = Scenario.model_validate(scenario_data)
        cfg = EngineConfig(**engine)
        point = run_point(scenario, float(rate), cfg, global_domain=global_domain)

        logger.info(
            f"Sweep point R={rate} done: {len(point.rows)} rows, converged={point.converged}"
        )
        return {
            'status': 'success',
            'rate': point.rate,
            'converged': point.converged,
            'rows': [asdict(row) for row in point.rows],
        }

    except AllocationError as e:
        logger.error(f"Sweep point R={rate} failed: {e}")
        return {
            'status': 'error',
            'rate': rate,
            'error': str(e),
            'error_type': type(e).__name__,
        }

    except Exception as e:
        logger.critical(f"Fatal error in sweep point R={rate}: {e}", exc_info=True)
        return {
            'status': 'error',
            'rate': rate,
            'error': str(e),
            'error_type': type(e).__name__,
        }
