"""
CSV output of runs, sweeps and round traces.

Floats are printed with 9 significant digits and rows are ordered by
``(R, user id)``, so identical runs produce identical bytes.
"""

import csv
import logging
import os
from dataclasses import astuple, dataclass
from typing import Iterable, List, Optional, TextIO

from .protocol import RunResult

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ['scenario', 'R', 'domain', 'sector', 'user', 'kind', 'final_rate',
                  'final_bid', 'price', 'rounds', 'converged']
SECTOR_TRACE_COLUMNS = ['round', 'domain', 'sector', 'W', 'R_l', 'p_l', 'bids_stable', 'damping']
USER_TRACE_COLUMNS = ['round', 'user', 'bid', 'rate']


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    R: float
    domain: str
    sector: str
    user: str
    kind: str
    final_rate: float
    final_bid: float
    price: Optional[float]
    rounds: int
    converged: bool

    @property
    def sort_key(self):
        return (self.R, self.user)


def format_value(value) -> str:
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def rows_from_run(result: RunResult) -> List[ResultRow]:
    """
    One row per user of ``result``.

    ``R`` is the total rate the user's MME domain shared, so a pooled
    domain reports the sum of the pooled base stations' rates.
    """
    rows = []
    for domain in result.domains:
        for user in domain.users:
            rows.append(ResultRow(
                scenario=result.scenario, R=domain.total_rate, domain=domain.domain, sector=user.sector,
                user=user.user, kind=user.kind, final_rate=user.rate, final_bid=user.bid,
                price=user.price, rounds=domain.rounds, converged=domain.converged,
            ))
    return sorted(rows, key=lambda row: row.sort_key)


def _writer(stream: TextIO):
    return csv.writer(stream, lineterminator='\n')


def write_rows(rows: Iterable[ResultRow], stream: TextIO) -> int:
    """Write a header and ``rows`` to ``stream``; returns the number of rows."""
    writer = _writer(stream)
    writer.writerow(RESULT_COLUMNS)
    count = 0
    for row in sorted(rows, key=lambda row: row.sort_key):
        writer.writerow([format_value(value) for value in astuple(row)])
        count += 1
    return count


def write_results(rows: Iterable[ResultRow], path) -> int:
    """
    Write result rows to ``path``.

    Returns:
        int: Number of data rows written

    Raises:
        OSError: Surfaced unchanged from the file system
    """
    with open(path, 'w', encoding='utf-8', newline='') as file:
        count = write_rows(rows, file)
    logger.info(f"Wrote {count} result rows to {path}")
    return count


def write_trace(result: RunResult, directory) -> None:
    """
    Write ``sectors.csv`` and ``users.csv`` with one row per round.

    Domains appear in ascending id order, each with its rounds in order.
    """
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, 'sectors.csv'), 'w', encoding='utf-8', newline='') as file:
        writer = _writer(file)
        writer.writerow(SECTOR_TRACE_COLUMNS)
        for domain in result.domains:
            for record in domain.trace:
                for sector in record.sectors:
                    writer.writerow([format_value(v) for v in (
                        record.round, record.domain, sector.sector, sector.W, sector.R_l,
                        sector.p_l, sector.bids_stable, record.damping,
                    )])
    with open(os.path.join(directory, 'users.csv'), 'w', encoding='utf-8', newline='') as file:
        writer = _writer(file)
        writer.writerow(USER_TRACE_COLUMNS)
        for domain in result.domains:
            for record in domain.trace:
                for user in record.users:
                    writer.writerow([format_value(v) for v in (record.round, user.user, user.bid, user.rate)])
    logger.info(f"Wrote round traces of {len(result.domains)} domains to {directory}")
