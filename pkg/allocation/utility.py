"""
Normalized application utilities.

Inelastic (real-time) traffic is modelled by a sigmoid in the allocated
rate, elastic (delay-tolerant) traffic by a logarithm normalized to one at
``r_max``. Both families vanish at zero rate and have strictly concave
logarithms, which is what makes the product-of-utilities objective a
convex problem.

Every function accepts a float or a numpy array of rates and returns the
same shape back.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import ClassVar, Tuple, Union

import numpy as np
from scipy.special import expit, log_expit

from .exceptions import InvalidParameterError, RateDomainError

Rates = Union[float, np.ndarray]
_SMALLEST_POSITIVE = float(np.nextafter(0.0, 1.0))


def _positive_parameter(name: str, value) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise InvalidParameterError(f"{name} must be a number, got {value!r}")
    if not math.isfinite(value) or value <= 0:
        raise InvalidParameterError(f"{name} must be finite and > 0, got {value!r}")
    return value


def _checked_rates(r: Rates, strict: bool) -> np.ndarray:
    rates = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(rates)):
        raise RateDomainError(f"rate must be finite, got {r!r}")
    if strict and np.any(rates <= 0):
        raise RateDomainError(f"rate must be > 0, got {r!r}")
    if np.any(rates < 0):
        raise RateDomainError(f"rate must be >= 0, got {r!r}")
    return rates


def _unwrap(values: np.ndarray) -> Rates:
    values = np.asarray(values)
    return float(values) if values.ndim == 0 else values


def derive_constants(a: float, b: float) -> Tuple[float, float]:
    """
    Normalizer ``c`` and offset ``d`` of the sigmoid utility.

    ``c = (1 + e^(ab)) / e^(ab)`` and ``d = 1 / (1 + e^(ab))``, written in
    terms of ``e^(-ab)`` so that large ``a*b`` degrades to the asymptotic
    values ``c -> 1``, ``d -> e^(-ab)`` instead of overflowing. Past
    ``a*b ~ 745`` ``e^(-ab)`` underflows and ``d`` stays at the smallest
    positive float.

    Args:
        a (float): Steepness, per unit rate
        b (float): Inflection rate

    Returns:
        Tuple[float, float]: ``(c, d)`` with ``c * (1 - d) == 1``

    Raises:
        InvalidParameterError: If either input is non-finite or non-positive
    """
    a = _positive_parameter('a', a)
    b = _positive_parameter('b', b)
    x = a * b
    c = 1.0 + math.exp(-x)
    d = max(float(expit(-x)), _SMALLEST_POSITIVE)
    return c, d


class UtilitySpec(ABC):
    """Common interface of the two utility families."""

    kind: ClassVar[str]

    @property
    @abstractmethod
    def rate_scale(self) -> float:
        """Characteristic rate (``b`` or ``r_max``) used to size solver brackets."""

    @abstractmethod
    def _evaluate(self, r):
        ...

    @abstractmethod
    def _log_utility(self, r):
        ...

    @abstractmethod
    def _slope(self, r):
        ...

    @abstractmethod
    def parameters(self) -> dict:
        """Scenario-file parameters of this utility, ``kind`` included."""


@dataclass(frozen=True)
class SigmoidUtility(UtilitySpec):
    """
    ``U(r) = c * (1 / (1 + e^(-a(r - b))) - d)``.

    Attributes:
        a (float): Steepness, per unit rate
        b (float): Inflection rate, roughly the application's required rate
        c (float): Derived normalizer
        d (float): Derived offset
    """
    kind: ClassVar[str] = 'sigmoid'

    a: float
    b: float
    c: float = field(init=False, repr=False)
    d: float = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'a', _positive_parameter('a', self.a))
        object.__setattr__(self, 'b', _positive_parameter('b', self.b))
        c, d = derive_constants(self.a, self.b)
        object.__setattr__(self, 'c', c)
        object.__setattr__(self, 'd', d)

    @property
    def rate_scale(self) -> float:
        return self.b

    # c * (S - d) simplifies to (1 - e^(-ar)) * S, which keeps full relative
    # precision near r = 0 and never forms e^(ab).
    def _evaluate(self, r):
        return -np.expm1(-self.a * r) * expit(self.a * (r - self.b))

    def _log_utility(self, r):
        return np.log(-np.expm1(-self.a * r)) + log_expit(self.a * (r - self.b))

    def _slope(self, r):
        a = self.a
        return a * np.exp(-a * r) / -np.expm1(-a * r) + a * expit(a * (self.b - r))

    def parameters(self) -> dict:
        return {'kind': self.kind, 'a': self.a, 'b': self.b}


@dataclass(frozen=True)
class LogarithmicUtility(UtilitySpec):
    """
    ``U(r) = log(1 + k r) / log(1 + k r_max)``.

    Values above one for ``r > r_max`` are left as they are; the optimizer's
    rate cap bounds demand instead.

    Attributes:
        k (float): Rate of increase, per unit rate
        r_max (float): Rate at which the utility reaches 100%
    """
    kind: ClassVar[str] = 'log'

    k: float
    r_max: float

    def __post_init__(self):
        object.__setattr__(self, 'k', _positive_parameter('k', self.k))
        object.__setattr__(self, 'r_max', _positive_parameter('r_max', self.r_max))

    @property
    def rate_scale(self) -> float:
        return self.r_max

    @property
    def _norm(self) -> float:
        return math.log1p(self.k * self.r_max)

    def _evaluate(self, r):
        return np.log1p(self.k * r) / self._norm

    def _log_utility(self, r):
        return np.log(np.log1p(self.k * r)) - math.log(self._norm)

    def _slope(self, r):
        kr = self.k * r
        return self.k / ((1.0 + kr) * np.log1p(kr))

    def parameters(self) -> dict:
        return {'kind': self.kind, 'k': self.k, 'r_max': self.r_max}


def evaluate(spec: UtilitySpec, r: Rates) -> Rates:
    """
    Utility of rate ``r``.

    Raises:
        RateDomainError: If ``r`` is negative or not finite
    """
    return _unwrap(spec._evaluate(_checked_rates(r, strict=False)))


def log_utility(spec: UtilitySpec, r: Rates) -> Rates:
    """
    Natural log of the utility; strictly concave in ``r``.

    Callers treat ``r = 0`` as ``-inf`` without calling.

    Raises:
        RateDomainError: If ``r`` is not strictly positive and finite
    """
    return _unwrap(spec._log_utility(_checked_rates(r, strict=True)))


def log_utility_slope(spec: UtilitySpec, r: Rates) -> Rates:
    """
    Derivative of :func:`log_utility` with respect to the rate.

    Strictly positive and strictly decreasing; tends to ``+inf`` as
    ``r -> 0`` and to zero as ``r -> inf``.

    Raises:
        RateDomainError: If ``r`` is not strictly positive and finite
    """
    return _unwrap(spec._slope(_checked_rates(r, strict=True)))


def utility_from_parameters(kind: str, **params) -> UtilitySpec:
    """
    Build a utility from its scenario-file parameters.

    Raises:
        InvalidParameterError: For an unknown ``kind`` or bad parameters
    """
    if kind == SigmoidUtility.kind:
        return SigmoidUtility(a=params['a'], b=params['b'])
    if kind == LogarithmicUtility.kind:
        return LogarithmicUtility(k=params['k'], r_max=params['r_max'])
    raise InvalidParameterError(f"unknown utility kind {kind!r}")
