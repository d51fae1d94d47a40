"""
Per-user subproblem of the bidding protocol.

At a quoted shadow price ``p`` a UE asks for the rate maximizing
``log U(r) - p r``. The log-utility is strictly concave with slope going
from ``+inf`` at zero to zero at infinity, so the maximizer is the unique
root of ``slope(r) = p`` (or the rate cap when the slope still exceeds the
price there).
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .exceptions import InvalidParameterError, InvalidPriceError, RateDomainError, SolverFailureError
from .utility import UtilitySpec

logger = logging.getLogger(__name__)

# Lower end of the initial bracket, as a fraction of the rate cap.
_LOWER_FRACTION = 1e-12
_RTOL = 4 * np.finfo(float).eps
_MAX_ITER = 200


@dataclass(frozen=True)
class SolverConfig:
    """
    Tolerances of the UE rate solver.

    Attributes:
        foc_tolerance (float): Allowed relative residual ``|slope(r*) - p| / p``
        rate_cap_multiplier (float): Demand is capped at this multiple of ``b`` / ``r_max``
        max_bracket_doublings (int): How often the lower bracket may be halved
    """
    foc_tolerance: float = 1e-9
    rate_cap_multiplier: float = 10.0
    max_bracket_doublings: int = 60

    def __post_init__(self):
        for name in ('foc_tolerance', 'rate_cap_multiplier', 'max_bracket_doublings'):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise InvalidParameterError(f"SolverConfig.{name} must be finite and > 0, got {value!r}")


DEFAULT_SOLVER = SolverConfig()


def _check_price(price) -> float:
    try:
        price = float(price)
    except (TypeError, ValueError):
        raise InvalidPriceError(f"price must be a number, got {price!r}")
    if not math.isfinite(price) or price <= 0:
        raise InvalidPriceError(f"price must be finite and > 0, got {price!r}")
    return price


def rate_cap(spec: UtilitySpec, cfg: SolverConfig = DEFAULT_SOLVER) -> float:
    """Upper end of the feasible demand interval for ``spec``."""
    return cfg.rate_cap_multiplier * spec.rate_scale


def optimal_rate(spec: UtilitySpec, price: float, cfg: SolverConfig = DEFAULT_SOLVER) -> float:
    """
    Rate a UE requests at shadow price ``price``.

    Args:
        spec (UtilitySpec): The user's utility
        price (float): Shadow price quoted by the sector
        cfg (SolverConfig): Solver tolerances

    Returns:
        float: ``argmax_{0 <= r <= r_cap} log U(r) - price * r``

    Raises:
        InvalidPriceError: If ``price`` is not finite and positive
        SolverFailureError: If no sign change can be bracketed or the
            first-order residual exceeds ``cfg.foc_tolerance``
    """
    price = _check_price(price)
    cap = rate_cap(spec, cfg)

    def excess(r):
        return float(spec._slope(r)) / price - 1.0

    # Objective still increasing at the cap.
    if excess(cap) >= 0:
        return cap

    lo = _LOWER_FRACTION * cap
    halvings = 0
    while excess(lo) <= 0:
        if halvings >= cfg.max_bracket_doublings:
            logger.error(f"No bracket for {spec!r} at price {price:.6g} down to r={lo:.3g}")
            raise SolverFailureError(
                f"could not bracket the optimal rate of {spec!r} at price {price!r}"
            )
        lo /= 2.0
        halvings += 1

    try:
        root = brentq(excess, lo, cap, xtol=lo * _RTOL, rtol=_RTOL, maxiter=_MAX_ITER)
    except (ValueError, RuntimeError) as e:
        logger.error(f"Root search failed for {spec!r} at price {price:.6g}: {e}")
        raise SolverFailureError(f"root search failed for {spec!r} at price {price!r}: {e}")

    residual = abs(excess(root))
    if residual > cfg.foc_tolerance:
        raise SolverFailureError(
            f"first-order residual {residual:.3g} exceeds {cfg.foc_tolerance:.3g} "
            f"for {spec!r} at price {price!r}"
        )
    return root


def make_bid(price: float, rate: float) -> float:
    """
    Bid ``w = p * r`` a UE sends for ``rate`` at ``price``.

    Raises:
        InvalidPriceError: If ``price`` is not finite and positive
        RateDomainError: If ``rate`` is negative or not finite
    """
    price = _check_price(price)
    if not math.isfinite(rate) or rate < 0:
        raise RateDomainError(f"rate must be finite and >= 0, got {rate!r}")
    return price * rate


def allocated_rate(bid: float, price: float) -> float:
    """
    Rate bought by ``bid`` at ``price`` (``r = w / p``).

    Raises:
        InvalidPriceError: If ``price`` is not finite and positive
    """
    price = _check_price(price)
    return bid / price
