"""Exception types shared across the package."""


class ActionsegError(Exception):
    """Base class for all domain errors raised by this package."""


class InvalidDataError(ActionsegError):
    """Malformed or non-finite input data (files, features, labels)."""


class DegenerateStatisticsError(ActionsegError):
    """Weighted statistics with zero total mass, nothing to estimate."""


class InconsistentPriorError(ActionsegError):
    """A state has zero prior but positive posterior mass somewhere."""


class MissingModelError(ActionsegError):
    """A transcript references a label with no fitted model."""


class InfeasibleAlignmentError(ActionsegError):
    """Sequence too short to give every required state at least one frame."""


class NoValidPathError(ActionsegError):
    """Decoding lattice admits no path with probability greater than zero."""


class EmptyCorpusError(ActionsegError):
    """No usable videos remain after feasibility filtering."""
