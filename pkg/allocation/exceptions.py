"""
Custom exceptions for the allocation application.

This module defines domain-specific exceptions so that the CLI can map
input problems and numerical failures to distinct exit codes.
"""


class AllocationError(Exception):
    """Base exception for all allocation errors."""
    pass


class InvalidParameterError(AllocationError):
    """Raised when a utility or configuration parameter is non-finite or non-positive."""
    pass


class RateDomainError(AllocationError):
    """Raised when a rate lies outside the domain of a utility function."""
    pass


class InvalidPriceError(AllocationError):
    """Raised when a shadow price is not a finite positive number."""
    pass


class SolverFailureError(AllocationError):
    """Raised when a root bracket cannot be established or a solve does not meet its tolerance."""
    pass


class ProtocolError(AllocationError):
    """Raised when a protocol message carries an invalid payload."""
    pass


class DegenerateSectorError(AllocationError):
    """Raised when a sector cannot be priced (zero rate share or zero aggregate bid)."""
    pass


class DegenerateDomainError(AllocationError):
    """Raised when every sector of an MME domain has a zero aggregate bid."""
    pass


class ScenarioError(AllocationError):
    """
    Base class for scenario file problems.

    Attributes:
        entry (str | None): Id or section of the offending entry
        line (int | None): 1-based line number in the scenario file
    """

    def __init__(self, message, entry=None, line=None):
        super().__init__(message)
        self.entry = entry
        self.line = line


class ScenarioParseError(ScenarioError):
    """Raised when a scenario file cannot be read or is not valid YAML."""
    pass


class ScenarioValidationError(ScenarioError):
    """Raised when a parsed scenario violates the schema or referential integrity."""
    pass
