"""
Centralized reference solver.

At the fair optimum every sector of an MME domain quotes the same price, so
the pooled problem ``max sum log U_i(r_i) s.t. sum r_i = R`` is solved by a
single price ``p*`` at which the users' demands exhaust ``R``. Aggregate
demand is continuous and strictly decreasing in the price, so ``p*`` is
found by bisection.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import bisect

from .exceptions import InvalidParameterError, SolverFailureError
from .optimizer import DEFAULT_SOLVER, SolverConfig, optimal_rate
from .protocol import EngineConfig, RunResult, build_domains, run
from .utility import UtilitySpec, log_utility

logger = logging.getLogger(__name__)

PRICE_FLOOR = 1e-9
BUDGET_TOLERANCE = 1e-6
MAX_PRICE_DOUBLINGS = 200
IMPROVEMENT_TOLERANCE = 1e-8
TRANSFER_RANGE = (1e-4, 1e-2)


def aggregate_demand(users: Sequence[UtilitySpec], price: float,
                     solver: SolverConfig = DEFAULT_SOLVER) -> float:
    """Total rate requested by ``users`` at a common ``price``."""
    return math.fsum(optimal_rate(spec, price, solver) for spec in users)


def clearing_price(users: Sequence[UtilitySpec], total_rate: float,
                   solver: SolverConfig = DEFAULT_SOLVER) -> float:
    """
    Price at which the pooled demand of ``users`` equals ``total_rate``.

    Raises:
        InvalidParameterError: If there are no users or ``total_rate`` is not positive
        SolverFailureError: If the price cannot be bracketed or the budget is missed
    """
    if not users:
        raise InvalidParameterError("centralized allocation needs at least one user")
    if not math.isfinite(total_rate) or total_rate <= 0:
        raise InvalidParameterError(f"total rate must be finite and > 0, got {total_rate!r}")

    def excess(price):
        return aggregate_demand(users, price, solver) - total_rate

    if excess(PRICE_FLOOR) <= 0:
        raise SolverFailureError(
            f"demand at price {PRICE_FLOOR:g} does not exceed R={total_rate:g} "
            f"(every user is at its rate cap)"
        )
    p_hi = 1.0
    doublings = 0
    while excess(p_hi) >= 0:
        if doublings >= MAX_PRICE_DOUBLINGS:
            raise SolverFailureError(f"no upper price bracket for R={total_rate:g}")
        p_hi *= 2.0
        doublings += 1

    try:
        price = bisect(excess, PRICE_FLOOR, p_hi, xtol=PRICE_FLOOR * 1e-15,
                       rtol=4 * np.finfo(float).eps, maxiter=400)
    except (ValueError, RuntimeError) as e:
        raise SolverFailureError(f"price bisection failed for R={total_rate:g}: {e}")

    miss = abs(excess(price))
    if miss > BUDGET_TOLERANCE * total_rate:
        raise SolverFailureError(
            f"pooled demand misses R={total_rate:g} by {miss:.3g} at price {price:.9g}"
        )
    return price


def centralized_allocate(users: Sequence[UtilitySpec], total_rate: float,
                         solver: SolverConfig = DEFAULT_SOLVER) -> np.ndarray:
    """
    Solve the pooled utility-proportional-fair problem.

    Args:
        users (Sequence[UtilitySpec]): Utilities of every user sharing ``total_rate``
        total_rate (float): ``R``
        solver (SolverConfig): Tolerances of the per-user solver

    Returns:
        np.ndarray: Rate per user, in input order
    """
    price = clearing_price(users, total_rate, solver)
    logger.debug(f"Clearing price for {len(users)} users at R={total_rate:g}: {price:.9g}")
    return np.array([optimal_rate(spec, price, solver) for spec in users])


def objective(users: Sequence[UtilitySpec], rates: Sequence[float]) -> float:
    """``sum log U_i(r_i)``; ``-inf`` as soon as one rate is zero."""
    rates = np.asarray(rates, dtype=float)
    if np.any(rates <= 0):
        return -math.inf
    return math.fsum(log_utility(spec, r) for spec, r in zip(users, rates))


def certify(users: Sequence[UtilitySpec], rates: Sequence[float], total_rate: float,
            trials: int = 1000, seed: int = 0) -> bool:
    """
    Perturbation check of optimality.

    Moves ``eps`` in ``[1e-4, 1e-2] * total_rate`` from one random user to
    another ``trials`` times and fails if any move raises the objective by
    more than 1e-8. A move larger than the source user's rate is infeasible
    and is skipped.

    Raises:
        InvalidParameterError: If a rate is negative or the rates overrun
            ``total_rate`` by more than the budget tolerance
    """
    rates = np.asarray(rates, dtype=float)
    if np.any(rates < 0):
        raise InvalidParameterError(f"rates must be non-negative, got {rates.min()!r}")
    spent = math.fsum(rates)
    if spent > total_rate * (1 + BUDGET_TOLERANCE):
        raise InvalidParameterError(f"rates sum to {spent:.6g}, over the total rate {total_rate:.6g}")
    if len(rates) < 2 or trials <= 0:
        return True
    rng = np.random.default_rng(seed)
    base = objective(users, rates)
    low, high = TRANSFER_RANGE
    skipped = 0
    for _ in range(trials):
        src, dst = rng.choice(len(rates), size=2, replace=False)
        eps = rng.uniform(low, high) * total_rate
        if eps >= rates[src]:
            skipped += 1
            continue
        moved = rates.copy()
        moved[src] -= eps
        moved[dst] += eps
        gain = objective(users, moved) - base
        if gain > IMPROVEMENT_TOLERANCE:
            logger.info(
                f"Transfer of {eps:.4g} from user #{src} to #{dst} improves the objective by {gain:.3g}"
            )
            return False
    if skipped:
        logger.debug(f"certify skipped {skipped}/{trials} infeasible transfers")
    return True


@dataclass(frozen=True)
class UserComparison:
    user: str
    domain: str
    distributed: float
    centralized: float

    @property
    def difference(self) -> float:
        return abs(self.distributed - self.centralized)


@dataclass
class VerificationReport:
    """Distributed versus centralized rates of one run."""
    tolerance: float
    rows: List[UserComparison] = field(default_factory=list)
    certified: Dict[str, bool] = field(default_factory=dict)
    converged: bool = True

    @property
    def max_difference(self) -> float:
        return max((row.difference for row in self.rows), default=0.0)

    @property
    def within_tolerance(self) -> bool:
        return all(row.difference <= self.tolerance for row in self.rows)

    @property
    def passed(self) -> bool:
        return self.converged and self.within_tolerance and all(self.certified.values())


def verify(scenario, cfg: EngineConfig = EngineConfig(), solver: SolverConfig = DEFAULT_SOLVER,
           trials: int = 1000, tolerance: Optional[float] = None, seed: int = 0,
           result: Optional[RunResult] = None) -> VerificationReport:
    """
    Compare a distributed run against the pooled oracle of every domain.

    Args:
        scenario (Scenario): Scenario to verify
        cfg (EngineConfig): Protocol parameters for the distributed run
        solver (SolverConfig): Per-user solver tolerances
        trials (int): Perturbations per domain for :func:`certify`
        tolerance (float): Allowed per-user rate gap, default ``max(1e-2, 10 * delta)``
        seed (int): Seed of the perturbation sampler
        result (RunResult): Already computed distributed run, if any

    Returns:
        VerificationReport: Per-user comparison and per-domain certify verdicts
    """
    if tolerance is None:
        tolerance = max(1e-2, 10 * cfg.delta)
    if result is None:
        result = run(scenario, cfg, solver)
    report = VerificationReport(tolerance=tolerance, converged=result.converged)
    distributed = {row.user: row.rate for row in result.users}

    for domain in build_domains(scenario):
        users = domain.users
        specs = [user.utility for user in users]
        rates = centralized_allocate(specs, domain.total_rate, solver)
        report.certified[domain.id] = certify(specs, rates, domain.total_rate, trials, seed)
        for user, rate in zip(users, rates):
            report.rows.append(UserComparison(user.id, domain.id, distributed[user.id], float(rate)))

    report.rows.sort(key=lambda row: row.user)
    logger.info(
        f"Verified {scenario.name!r}: max |distributed - centralized| = {report.max_difference:.3g} "
        f"(tolerance {tolerance:.3g}), certified={report.certified}"
    )
    return report
