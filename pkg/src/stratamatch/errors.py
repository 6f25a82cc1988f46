"""Exception and warning types shared across the package."""

from __future__ import annotations


class StrataMatchError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(StrataMatchError):
    """A configuration value or combination of values is invalid."""


class NamedColumnAbsent(StrataMatchError):
    """A column requested by name is not present in the input table."""

    def __init__(self, column: str, available: tuple[str, ...] = ()):
        self.column = column
        self.available = tuple(available)
        msg = f"column {column!r} not found in input"
        if available:
            msg += f" (available: {', '.join(available)})"
        super().__init__(msg)


class ParseFailure(StrataMatchError):
    """A cell could not be parsed as a finite number.

    Carries the 1-based file line and the column name of the offending cell.
    """

    def __init__(self, row: int, col: str, value: str = ""):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(f"line {row}, column {col!r}: cannot parse {value!r} as a finite number")


class PositivityViolation(StrataMatchError):
    """The dataset lacks at least one treated or one control unit."""


class EmptyInput(StrataMatchError):
    """An operation received an empty vector or matrix."""


class InsufficientDegreesOfFreedom(StrataMatchError):
    """Too few observations for the requested statistic (needs n > p + 1)."""


class DegenerateSplit(StrataMatchError):
    """A candidate split would leave one side of the partition empty."""


class NoCandidates(StrataMatchError):
    """No control candidates are available for a treated unit."""


class OracleTooLarge(StrataMatchError):
    """The exhaustive oracle was asked to enumerate more than 2^20 subsets."""


class StrategyRequiresBinary(StrataMatchError):
    """The 1:1 strategy estimator is defined for binary outcomes only."""


class EstimationImpossible(StrataMatchError):
    """Every treated unit was skipped, so no estimate can be formed."""


class InvalidSample(StrataMatchError):
    """A requested subsample size exceeds the available units."""


class AuditNotFound(StrataMatchError):
    """The per-unit audit log for a completed run could not be read."""


class HierarchyBoundWarning(UserWarning):
    """The configured big-M multiplier is below the bound that guarantees
    deviation-sum minimization takes strict priority over the per-unit cap."""
