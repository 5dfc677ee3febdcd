"""Exception and warning types raised across the package."""


class StratPermError(Exception):
    """Base class for all package errors."""


class DegenerateVariance(StratPermError):
    """The statistic has zero variance, so it cannot be standardized."""


class DegenerateLayout(StratPermError):
    """Every stratum has a single unit; no within-stratum swap exists."""


class DomainError(StratPermError, ValueError):
    pass


class ZeroStratumRatio(StratPermError):
    """Some stratum contributes no variance but the method divides by its share."""


class StratumTooLarge(StratPermError):
    pass


class BudgetExceeded(StratPermError):
    """Exact enumeration would visit more outcomes than the configured budget."""


class CountMismatch(StratPermError, ValueError):
    pass


class EventUnreachable(StratPermError):
    """Rejection sampling never hit the conditioning event within the retry cap."""


class LayoutMismatch(StratPermError, ValueError):
    pass


class SingularCovariance(StratPermError):
    pass


class NotStandardized(StratPermError):
    """Components violate the orthonormality condition under the stratified inner product."""


class InvariantViolation(StratPermError, ValueError):
    def __init__(self, invariant, message=None):
        self.invariant = invariant
        super().__init__(message or invariant)


class ParseError(StratPermError, ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)


class DegenerateScores(UserWarning):
    """Permutation reference distribution is a point mass; the p-value is set to 1."""


class EmptyInterval(UserWarning):
    """No grid point was accepted when inverting a test."""
