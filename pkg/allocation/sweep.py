"""
Total-rate sweeps.

A sweep runs the protocol once per grid value of ``R`` (every domain gets
that total rate, or the pooled domain gets the sum). Points are
independent, so they may run on a thread pool or as Celery tasks; rows
are always returned ordered by ``(R, user id)``.
"""

import concurrent.futures
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import exceptions
from .optimizer import DEFAULT_SOLVER, SolverConfig
from .protocol import EngineConfig, RunResult, run
from .results import ResultRow, rows_from_run
from .scenarios import Scenario
from .utility import evaluate

logger = logging.getLogger(__name__)


@dataclass
class SweepPoint:
    rate: float
    rows: List[ResultRow]
    converged: bool
    result: Optional[RunResult] = None


@dataclass
class SweepResult:
    scenario: str
    points: List[SweepPoint] = field(default_factory=list)

    @property
    def rows(self) -> List[ResultRow]:
        return sorted((row for point in self.points for row in point.rows), key=lambda row: row.sort_key)

    @property
    def converged(self) -> bool:
        return all(point.converged for point in self.points)

    @property
    def failed_rates(self) -> List[float]:
        return [point.rate for point in self.points if not point.converged]


def point_scenario(scenario: Scenario, rate: float, global_domain: bool = False) -> Scenario:
    """
    Scenario of one sweep point: every domain at ``rate``, optionally pooled.

    A pooled point shares the sum of the member domains' rates.
    """
    scenario = scenario.with_total_rate(rate)
    return scenario.pooled() if global_domain else scenario


def run_point(scenario: Scenario, rate: float, cfg: EngineConfig = EngineConfig(),
              solver: SolverConfig = DEFAULT_SOLVER, global_domain: bool = False) -> SweepPoint:
    result = run(point_scenario(scenario, rate, global_domain), cfg, solver)
    return SweepPoint(rate=rate, rows=rows_from_run(result), converged=result.converged, result=result)


def _run_threaded(scenario, rates, cfg, solver, global_domain, workers) -> List[SweepPoint]:
    points = []
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_rate = {
            executor.submit(run_point, scenario, rate, cfg, solver, global_domain): rate
            for rate in rates
        }
        for future in concurrent.futures.as_completed(future_to_rate):
            rate = future_to_rate[future]
            try:
                points.append(future.result())
            except exceptions.AllocationError as e:
                logger.error(f"Sweep point R={rate:g} failed: {e}")
                raise
    return points


def _point_from_payload(payload: dict) -> SweepPoint:
    if payload.get('status') != 'success':
        error_class = getattr(exceptions, payload.get('error_type', ''), exceptions.AllocationError)
        if not (isinstance(error_class, type) and issubclass(error_class, exceptions.AllocationError)):
            error_class = exceptions.AllocationError
        raise error_class(f"sweep point R={payload.get('rate')} failed: {payload.get('error')}")
    rows = [ResultRow(**row) for row in payload['rows']]
    return SweepPoint(rate=payload['rate'], rows=rows, converged=payload['converged'])


def _run_celery(scenario, rates, cfg, global_domain) -> List[SweepPoint]:
    from .tasks import run_sweep_point_task

    scenario_data = scenario.model_dump(mode='json')
    engine = asdict(cfg)
    pending = [run_sweep_point_task.delay(scenario_data, rate, engine, global_domain) for rate in rates]
    return [_point_from_payload(async_result.get()) for async_result in pending]


def run_sweep(scenario: Scenario, rates: Sequence[float], cfg: EngineConfig = EngineConfig(),
              solver: SolverConfig = DEFAULT_SOLVER, global_domain: bool = False,
              workers: int = 1, use_celery: bool = False) -> SweepResult:
    """
    Run ``scenario`` once per total rate in ``rates``.

    Args:
        scenario (Scenario): Base scenario
        rates (Sequence[float]): Per-domain total rates
        cfg (EngineConfig): Protocol parameters
        solver (SolverConfig): Per-user solver tolerances
        global_domain (bool): Pool every sector under one MME domain
        workers (int): Thread-pool size; 1 runs the points in order
        use_celery (bool): Dispatch the points as Celery tasks instead

    Returns:
        SweepResult: Points ordered by rate. Celery points carry rows only.

    Raises:
        AllocationError: The first failure of any point
    """
    rates = [float(rate) for rate in rates]
    logger.info(
        f"Sweeping {scenario.name!r} over {len(rates)} rates "
        f"({'celery' if use_celery else f'{workers} worker(s)'}, global_domain={global_domain})"
    )
    if use_celery:
        points = _run_celery(scenario, rates, cfg, global_domain)
    elif workers > 1:
        points = _run_threaded(scenario, rates, cfg, solver, global_domain, workers)
    else:
        points = [run_point(scenario, rate, cfg, solver, global_domain) for rate in rates]

    sweep = SweepResult(scenario=scenario.name, points=sorted(points, key=lambda point: point.rate))
    if sweep.converged:
        logger.info(f"Sweep of {scenario.name!r} converged at all {len(rates)} rates")
    else:
        logger.warning(f"Sweep of {scenario.name!r} did not converge at R={sweep.failed_rates}")
    return sweep


@dataclass
class FigureSeries:
    """Rate, bid and utility of one user along the sweep."""
    user: str
    sector: str
    R: np.ndarray
    rate: np.ndarray
    bid: np.ndarray
    utility: np.ndarray


def first_sectors(scenario: Scenario) -> List[str]:
    """The first sector (by id) of every domain."""
    first = {}
    for sector in sorted(scenario.sector, key=lambda s: s.id):
        first.setdefault(sector.domain, sector.id)
    return [first[domain] for domain in sorted(first)]


def figure_series(rows: Sequence[ResultRow], scenario: Scenario,
                  sectors: Optional[Sequence[str]] = None) -> Dict[str, FigureSeries]:
    """
    Per-user series of rate, bid and achieved utility versus ``R``.

    Args:
        rows (Sequence[ResultRow]): Sweep rows
        scenario (Scenario): Scenario the rows came from
        sectors (Sequence[str]): Sectors to keep; the first sector of every domain by default

    Returns:
        Dict[str, FigureSeries]: Keyed by user id, each ordered by ``R``
    """
    sectors = set(sectors if sectors is not None else first_sectors(scenario))
    utilities = {user.id: user.utility() for user in scenario.user}
    by_user: Dict[str, List[ResultRow]] = {}
    for row in sorted(rows, key=lambda row: row.sort_key):
        if row.sector in sectors:
            by_user.setdefault(row.user, []).append(row)

    series = {}
    for user, user_rows in sorted(by_user.items()):
        rates = np.array([row.final_rate for row in user_rows])
        series[user] = FigureSeries(
            user=user,
            sector=user_rows[0].sector,
            R=np.array([row.R for row in user_rows]),
            rate=rates,
            bid=np.array([row.final_bid for row in user_rows]),
            utility=np.asarray(evaluate(utilities[user], rates)),
        )
    return series


def first_rate_reaching(series: FigureSeries, threshold: float) -> Optional[float]:
    """Smallest ``R`` at which the user's rate reaches ``threshold``, or None."""
    reached = np.nonzero(series.rate >= threshold)[0]
    return float(series.R[reached[0]]) if reached.size else None
