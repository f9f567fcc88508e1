"""Exception types shared across the package."""


class CircleTrailsError(Exception):
    """Base class for numeric failures (CLI exit code 1)."""


class DigitsExhausted(CircleTrailsError):
    """A finite digit list was asked for a digit it does not have."""


class BranchAmbiguity(CircleTrailsError):
    """An error enclosure straddles a branch point, so the next step is undefined."""


class PrecisionExceeded(CircleTrailsError):
    """A propagated error bound passed the configured ceiling."""


class BudgetExhausted(CircleTrailsError):
    """An iteration budget ran out before the requested tolerance was reached."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class MonotonicityError(CircleTrailsError):
    """A parameter bracket does not enclose the target rotation number."""


class RotationMismatch(CircleTrailsError):
    """Two maps do not share the combinatorics needed for the requested depth."""


class EndpointAmbiguity(CircleTrailsError):
    """A point lies too close to a partition endpoint to be located reliably."""


class NotAdmissible(CircleTrailsError):
    """A word of Markov atoms is not admissible."""
