"""
Distributed bidding protocol among UEs, sector base stations and the MME.

Each MME domain runs synchronous rounds:

1. every UE sends a bid (the initial bid in round one, afterwards the bid
   for its optimal rate at the last quoted price),
2. every sector sums its members' bids and reports the aggregate,
3. the MME stops if no aggregate moved by ``delta`` or more, and splits the
   domain's total rate among sectors in proportion to their aggregates,
4. every sector prices its share (``p = W / R``) and broadcasts the price.

On the stop round each user is allocated ``bid / price``.

With damping below one the stop test looks at the undamped aggregates
(``sum p * r*``), so a damped round only stops at the fixed point.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

from .exceptions import DegenerateDomainError, DegenerateSectorError, InvalidParameterError, ProtocolError
from .optimizer import DEFAULT_SOLVER, SolverConfig, allocated_rate, make_bid, optimal_rate
from .utility import UtilitySpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EngineConfig:
    """
    Protocol parameters.

    Attributes:
        delta (float): Convergence threshold on round-to-round aggregate bids
        max_rounds (int): Rounds before a run is reported as not converged
        damping (float): Weight of the fresh bid, in (0, 1]
        initial_bid (float): Bid every UE sends in round one
        adaptive_damping (bool): Halve the damping whenever the undamped step of the domain's
            total bid changes sign
        min_damping (float): Floor for the adaptive damping. Around p = a the demand of a
            steep sigmoid user is so price-sensitive that stable rounds need damping near 1e-8
    """
    delta: float = 1e-3
    max_rounds: int = 10000
    damping: float = 1.0
    initial_bid: float = 1.0
    adaptive_damping: bool = False
    min_damping: float = 2.0 ** -36

    def __post_init__(self):
        if not math.isfinite(self.delta) or self.delta <= 0:
            raise InvalidParameterError(f"delta must be finite and > 0, got {self.delta!r}")
        if int(self.max_rounds) != self.max_rounds or self.max_rounds < 1:
            raise InvalidParameterError(f"max_rounds must be a positive integer, got {self.max_rounds!r}")
        if not 0 < self.damping <= 1:
            raise InvalidParameterError(f"damping must lie in (0, 1], got {self.damping!r}")
        if not math.isfinite(self.initial_bid) or self.initial_bid <= 0:
            raise InvalidParameterError(f"initial_bid must be finite and > 0, got {self.initial_bid!r}")
        if not 0 < self.min_damping <= 1:
            raise InvalidParameterError(f"min_damping must lie in (0, 1], got {self.min_damping!r}")


# Messages


def _check_payload(kind: str, value: float, positive: bool = False) -> None:
    if not math.isfinite(value) or value < 0 or (positive and value == 0):
        raise ProtocolError(f"{kind} carries invalid payload {value!r}")


@dataclass(frozen=True)
class BidMsg:
    user: str
    w: float

    def __post_init__(self):
        _check_payload('BidMsg', self.w)


@dataclass(frozen=True)
class AggregateMsg:
    sector: str
    W: float

    def __post_init__(self):
        _check_payload('AggregateMsg', self.W)


@dataclass(frozen=True)
class SectorRateMsg:
    sector: str
    rate_share: float

    def __post_init__(self):
        _check_payload('SectorRateMsg', self.rate_share)


@dataclass(frozen=True)
class PriceMsg:
    sector: str
    price: float

    def __post_init__(self):
        _check_payload('PriceMsg', self.price, positive=True)


@dataclass(frozen=True)
class StopMsg:
    pass


Message = Union[BidMsg, AggregateMsg, SectorRateMsg, PriceMsg, StopMsg]


# Role state


@dataclass
class User:
    """
    UE state.

    Attributes:
        id (str): Unique user id
        sector_id (str): The one sector serving this user
        utility (UtilitySpec): Application model
        bid (float): Current bid ``w_i``
        rate (float): Current rate ``r_i``
    """
    id: str
    sector_id: str
    utility: UtilitySpec
    bid: float = 0.0
    rate: float = 0.0


@dataclass
class Sector:
    """
    Sector base-station state.

    Attributes:
        id (str): Unique sector id
        domain_id (str): Owning MME domain
        users (List[User]): Members, in ascending id order
        rate_share (float): ``R^l`` assigned by the MME
        aggregate_bid (float): ``W^l``, sum of member bids
        price (float | None): ``p_l``; None until priced or while excluded
        prev_bids (Dict[str, float]): Member bids of the previous round
    """
    id: str
    domain_id: str
    users: List[User] = field(default_factory=list)
    rate_share: float = 0.0
    aggregate_bid: float = 0.0
    price: Optional[float] = None
    prev_bids: Dict[str, float] = field(default_factory=dict)


@dataclass
class MmeDomain:
    """
    MME state for one group of sectors sharing a total rate.

    Attributes:
        id (str): Domain id
        sectors (List[Sector]): Members, in ascending id order
        total_rate (float): ``R``, split among the sectors
        prev_aggregates (Dict[str, float]): Aggregates of the previous round (zero before round one)
    """
    id: str
    sectors: List[Sector]
    total_rate: float
    prev_aggregates: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.total_rate) or self.total_rate <= 0:
            raise InvalidParameterError(f"domain {self.id!r} needs a total rate > 0, got {self.total_rate!r}")
        for sector in self.sectors:
            self.prev_aggregates.setdefault(sector.id, 0.0)

    @property
    def users(self) -> List[User]:
        return [user for sector in self.sectors for user in sector.users]


# Trace records


@dataclass(frozen=True)
class UserTrace:
    user: str
    bid: float
    rate: float


@dataclass(frozen=True)
class SectorTrace:
    sector: str
    W: float
    R_l: float
    p_l: Optional[float]
    bids_stable: bool


@dataclass(frozen=True)
class RoundTrace:
    """Snapshot of one domain after a round."""
    round: int
    domain: str
    users: Tuple[UserTrace, ...]
    sectors: Tuple[SectorTrace, ...]
    converged: bool
    damping: float


# Operations


def ue_step(user: User, price: float, damping: float = 1.0,
            solver: SolverConfig = DEFAULT_SOLVER) -> float:
    """
    Update a UE's bid for the price its sector quoted.

    The fresh bid ``p * r*(p)`` is blended with the previous bid:
    ``w' = damping * p * r* + (1 - damping) * w``.

    Returns:
        float: The new bid (also stored on ``user``)

    Raises:
        SolverFailureError: Propagated from the rate solver
    """
    rate = optimal_rate(user.utility, price, solver)
    target = make_bid(price, rate)
    user.rate = rate
    user.bid = damping * target + (1.0 - damping) * user.bid
    return user.bid


def sector_aggregate(sector: Sector) -> float:
    """Sum the members' bids into ``sector.aggregate_bid``."""
    sector.aggregate_bid = math.fsum(user.bid for user in sector.users)
    return sector.aggregate_bid


def sector_price(sector: Sector) -> float:
    """
    Shadow price ``p_l = W^l / R^l``.

    Raises:
        DegenerateSectorError: If the rate share or the aggregate bid is zero
    """
    if sector.rate_share <= 0 or sector.aggregate_bid <= 0:
        raise DegenerateSectorError(
            f"sector {sector.id!r} cannot be priced "
            f"(W={sector.aggregate_bid!r}, R_l={sector.rate_share!r})"
        )
    sector.price = sector.aggregate_bid / sector.rate_share
    return sector.price


def mme_reallocate(domain: MmeDomain) -> Dict[str, float]:
    """
    Split the domain's total rate in proportion to the aggregate bids.

    Returns:
        Dict[str, float]: ``R^l`` per sector id

    Raises:
        DegenerateDomainError: If every aggregate bid is zero
    """
    total_bid = math.fsum(sector.aggregate_bid for sector in domain.sectors)
    if total_bid <= 0:
        raise DegenerateDomainError(f"domain {domain.id!r} has no positive aggregate bid")
    shares = {}
    for sector in domain.sectors:
        sector.rate_share = sector.aggregate_bid / total_bid * domain.total_rate
        shares[sector.id] = sector.rate_share
    return shares


def mme_converged(domain: MmeDomain, delta: float, proposed: Optional[Dict[str, float]] = None) -> bool:
    """
    True iff no sector's aggregate bid moved by ``delta`` or more since the previous round.

    ``proposed`` replaces the sectors' current aggregates in the test; the
    engine passes the undamped aggregates of the round.
    """
    current = proposed if proposed is not None else {s.id: s.aggregate_bid for s in domain.sectors}
    return all(
        abs(current[sector.id] - domain.prev_aggregates.get(sector.id, 0.0)) < delta
        for sector in domain.sectors
    )


# Engine


@dataclass(frozen=True)
class UserAllocation:
    user: str
    domain: str
    sector: str
    kind: str
    rate: float
    bid: float
    price: Optional[float]


@dataclass(frozen=True)
class SectorAllocation:
    sector: str
    domain: str
    W: float
    R_l: float
    p_l: Optional[float]


@dataclass
class DomainResult:
    domain: str
    total_rate: float
    converged: bool
    rounds: int
    users: List[UserAllocation]
    sectors: List[SectorAllocation]
    trace: List[RoundTrace]


@dataclass(frozen=True)
class _Snapshot:
    round: int
    bids: Dict[str, float]
    sectors: Dict[str, Tuple[float, float, Optional[float]]]


class DomainEngine:
    """
    Runs the protocol for one MME domain.

    The engine owns the domain's mutable state; one engine is never shared
    between threads, distinct engines are independent.

    ``last_step`` is the largest undamped aggregate move of the latest round,
    the quantity the stop test compares with ``delta``.
    """

    def __init__(self, domain: MmeDomain, cfg: EngineConfig = EngineConfig(),
                 solver: SolverConfig = DEFAULT_SOLVER):
        self.domain = domain
        self.cfg = cfg
        self.solver = solver
        self.damping = cfg.damping
        self.round_index = 0
        self.converged = False
        self.trace: List[RoundTrace] = []
        self.last_step: Optional[float] = None
        self._total_step = 0.0
        self._last_total_step: Optional[float] = None
        self._snapshot: Optional[_Snapshot] = None
        self._best: Optional[Tuple[float, _Snapshot]] = None

    # Role handlers

    def _ue_phase(self) -> Tuple[List[BidMsg], Dict[str, float]]:
        bids = []
        undamped = {}
        for sector in self.domain.sectors:
            targets = []
            for user in sector.users:
                if self.round_index == 1:
                    user.bid = self.cfg.initial_bid
                    targets.append(user.bid)
                elif sector.price is not None:
                    ue_step(user, sector.price, self.damping, self.solver)
                    targets.append(make_bid(sector.price, user.rate))
                else:
                    targets.append(user.bid)
                bids.append(BidMsg(user.id, user.bid))
            undamped[sector.id] = math.fsum(targets)
        return bids, undamped

    def _sector_aggregate_phase(self, bids: List[BidMsg]) -> Tuple[List[AggregateMsg], Dict[str, bool]]:
        received = {msg.user: msg.w for msg in bids}
        aggregates = []
        stable = {}
        for sector in self.domain.sectors:
            # Sector-side stopping test; recorded only, the MME decides termination.
            stable[sector.id] = all(
                abs(received[user.id] - sector.prev_bids.get(user.id, 0.0)) < self.cfg.delta
                for user in sector.users
            )
            sector.prev_bids = {user.id: received[user.id] for user in sector.users}
            aggregates.append(AggregateMsg(sector.id, sector_aggregate(sector)))
        return aggregates, stable

    def _mme_phase(self, aggregates: List[AggregateMsg], undamped: Dict[str, float]) -> List[Message]:
        prev = self.domain.prev_aggregates
        steps = [undamped[sector.id] - prev.get(sector.id, 0.0) for sector in self.domain.sectors]
        self.last_step = max((abs(step) for step in steps), default=0.0)
        self._total_step = math.fsum(steps)
        converged = mme_converged(self.domain, self.cfg.delta, undamped)

        self.domain.prev_aggregates = {msg.sector: msg.W for msg in aggregates}
        shares = mme_reallocate(self.domain)
        outbox: List[Message] = [SectorRateMsg(sector_id, share) for sector_id, share in shares.items()]
        if converged:
            outbox.append(StopMsg())
        return outbox

    def _sector_price_phase(self, outbox: List[Message]) -> List[PriceMsg]:
        prices = []
        by_id = {sector.id: sector for sector in self.domain.sectors}
        for msg in outbox:
            if not isinstance(msg, SectorRateMsg):
                continue
            sector = by_id[msg.sector]
            if sector.aggregate_bid <= 0:
                # Nobody to serve: excluded from pricing this round.
                sector.rate_share = 0.0
                sector.price = None
                continue
            prices.append(PriceMsg(sector.id, sector_price(sector)))
        return prices

    def _adapt_damping(self, total_step: float) -> None:
        """Halve the damping when the undamped step of the total bid changes sign."""
        if self._last_total_step is not None and total_step * self._last_total_step < 0:
            damping = max(self.damping / 2.0, self.cfg.min_damping)
            if damping < self.damping:
                logger.debug(
                    f"Domain {self.domain.id}: total bid overshoots at round "
                    f"{self.round_index}, damping {self.damping:.4g} -> {damping:.4g}"
                )
                self.damping = damping
        self._last_total_step = total_step

    # Best state

    def _capture(self) -> _Snapshot:
        return _Snapshot(
            round=self.round_index,
            bids={user.id: user.bid for user in self.domain.users},
            sectors={s.id: (s.aggregate_bid, s.rate_share, s.price) for s in self.domain.sectors},
        )

    def _restore(self, snapshot: _Snapshot) -> None:
        for sector in self.domain.sectors:
            sector.aggregate_bid, sector.rate_share, sector.price = snapshot.sectors[sector.id]
            for user in sector.users:
                user.bid = snapshot.bids[user.id]

    def _remember_best(self) -> None:
        # The step of round n rates the state left by round n - 1.
        if self._snapshot is None:
            return
        if self._best is None or self.last_step < self._best[0]:
            self._best = (self.last_step, self._snapshot)

    def step(self) -> RoundTrace:
        """Execute one synchronous round and return its trace record."""
        self.round_index += 1
        bids, undamped = self._ue_phase()
        aggregates, stable = self._sector_aggregate_phase(bids)
        outbox = self._mme_phase(aggregates, undamped)
        self._remember_best()
        self._sector_price_phase(outbox)

        stop = any(isinstance(msg, StopMsg) for msg in outbox)
        if stop:
            self.converged = True
            self._allocate()
        elif self.cfg.adaptive_damping and self.round_index > 1:
            self._adapt_damping(self._total_step)

        record = RoundTrace(
            round=self.round_index,
            domain=self.domain.id,
            users=tuple(
                UserTrace(user.id, user.bid, self._allocated(sector, user))
                for sector in self.domain.sectors for user in sector.users
            ),
            sectors=tuple(
                SectorTrace(sector.id, sector.aggregate_bid, sector.rate_share,
                            sector.price, stable[sector.id])
                for sector in self.domain.sectors
            ),
            converged=stop,
            damping=self.damping,
        )
        self.trace.append(record)
        self._snapshot = self._capture()
        return record

    @staticmethod
    def _allocated(sector: Sector, user: User) -> float:
        if sector.price is None:
            return 0.0
        return allocated_rate(user.bid, sector.price)

    def _allocate(self) -> None:
        for sector in self.domain.sectors:
            for user in sector.users:
                user.rate = self._allocated(sector, user)

    def run(self) -> DomainResult:
        """
        Run rounds until the MME stops or ``max_rounds`` is reached.

        Without convergence the state with the smallest undamped step is
        restored and allocated.
        """
        logger.debug(
            f"Domain {self.domain.id}: R={self.domain.total_rate:.6g}, "
            f"{len(self.domain.sectors)} sectors, {len(self.domain.users)} users"
        )
        while not self.converged and self.round_index < self.cfg.max_rounds:
            self.step()

        if self.converged:
            logger.debug(f"Domain {self.domain.id} converged after {self.round_index} rounds")
        else:
            logger.warning(
                f"Domain {self.domain.id} did not converge within {self.cfg.max_rounds} rounds "
                f"(R={self.domain.total_rate:.6g}, damping={self.damping:.4g})"
            )
            if self._best is not None:
                step, snapshot = self._best
                logger.info(f"Domain {self.domain.id}: keeping round {snapshot.round} (undamped step {step:.3g})")
                self._restore(snapshot)
            self._allocate()
        return self.result()

    def result(self) -> DomainResult:
        return DomainResult(
            domain=self.domain.id,
            total_rate=self.domain.total_rate,
            converged=self.converged,
            rounds=self.round_index,
            users=[
                UserAllocation(user.id, self.domain.id, sector.id, user.utility.kind,
                               user.rate, user.bid, sector.price)
                for sector in self.domain.sectors for user in sector.users
            ],
            sectors=[
                SectorAllocation(sector.id, self.domain.id, sector.aggregate_bid,
                                 sector.rate_share, sector.price)
                for sector in self.domain.sectors
            ],
            trace=self.trace,
        )


@dataclass
class RunResult:
    """Outcome of running every domain of a scenario once."""
    scenario: str
    domains: List[DomainResult]

    @property
    def converged(self) -> bool:
        return all(domain.converged for domain in self.domains)

    @property
    def users(self) -> List[UserAllocation]:
        return sorted((u for d in self.domains for u in d.users), key=lambda u: u.user)

    @property
    def sectors(self) -> List[SectorAllocation]:
        return sorted((s for d in self.domains for s in d.sectors), key=lambda s: s.sector)

    @property
    def traces(self) -> Dict[str, List[RoundTrace]]:
        return {domain.domain: domain.trace for domain in self.domains}

    def domain(self, domain_id: str) -> DomainResult:
        for domain in self.domains:
            if domain.domain == domain_id:
                return domain
        raise KeyError(domain_id)


def build_domains(scenario) -> List[MmeDomain]:
    """
    Instantiate role state for every domain of ``scenario``.

    Domains, sectors and users are ordered by ascending id.
    """
    users_by_sector: Dict[str, List[User]] = {}
    for spec in sorted(scenario.user, key=lambda u: u.id):
        users_by_sector.setdefault(spec.sector, []).append(
            User(id=spec.id, sector_id=spec.sector, utility=spec.utility())
        )
    sectors_by_domain: Dict[str, List[Sector]] = {}
    for spec in sorted(scenario.sector, key=lambda s: s.id):
        sectors_by_domain.setdefault(spec.domain, []).append(
            Sector(id=spec.id, domain_id=spec.domain, users=users_by_sector.get(spec.id, []))
        )
    return [
        MmeDomain(id=spec.id, sectors=sectors_by_domain.get(spec.id, []), total_rate=spec.rate)
        for spec in sorted(scenario.domain, key=lambda d: d.id)
    ]


def run(scenario, cfg: EngineConfig = EngineConfig(), solver: SolverConfig = DEFAULT_SOLVER) -> RunResult:
    """
    Run the protocol on every domain of ``scenario``.

    Args:
        scenario (Scenario): Validated scenario
        cfg (EngineConfig): Protocol parameters
        solver (SolverConfig): UE solver tolerances

    Returns:
        RunResult: Final allocations, sector states, traces and convergence flags.
        Non-convergence is reported through ``converged``, never raised.

    Raises:
        DegenerateDomainError: If a domain has no positive aggregate bid
        SolverFailureError: Propagated from a UE step
    """
    logger.info(f"Running scenario {scenario.name!r} ({len(scenario.domain)} domains)")
    results = [DomainEngine(domain, cfg, solver).run() for domain in build_domains(scenario)]
    outcome = RunResult(scenario=scenario.name, domains=results)
    rounds = ', '.join(f"{d.domain}={d.rounds}" for d in results)
    logger.info(f"Scenario {scenario.name!r} finished, converged={outcome.converged}, rounds: {rounds}")
    return outcome
