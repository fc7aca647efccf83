"""
Exception hierarchy for the set-indexed regularity toolkit.

Usage errors also derive from ValueError so that callers which only know
about the builtin still catch them. The CLI maps the two families onto exit
codes: usage errors -> 2, numeric/statistical failures -> 1.
"""


class SetIndexError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SetIndexError, ValueError):
    """An argument lies outside the domain of an operation."""


class EmptySetError(DomainError):
    """An operation that needs a non-empty set received the empty set."""


class CapExceededError(DomainError):
    """An enumeration or matrix size exceeds its configured hard limit."""

    def __init__(self, what: str, size: int, cap: int):
        self.what = what
        self.size = size
        self.cap = cap
        super().__init__(f"{what}: size {size} exceeds cap {cap}")


class MissingSetError(SetIndexError, KeyError):
    """A sample path does not carry a set needed by an increment."""

    def __init__(self, rect):
        self.rect = rect
        super().__init__(f"set {rect} is not registered in the sample path")

    def __str__(self) -> str:
        return self.args[0]


class DegenerateEstimateError(SetIndexError, ArithmeticError):
    """A log-log regression has too few usable points."""


class FactorizationError(SetIndexError, ArithmeticError):
    """A covariance matrix could not be factorized even after repair."""


USAGE_ERRORS = (DomainError, MissingSetError)
NUMERIC_ERRORS = (DegenerateEstimateError, FactorizationError)
