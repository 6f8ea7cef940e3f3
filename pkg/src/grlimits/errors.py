"""Exception types shared across the package."""


class GRLimitsError(ValueError):
    """Base class for domain errors raised by this package."""


class EmptyCorpusError(GRLimitsError):
    """The sampled downstream corpus carries no relevance mass (Z = 0)."""


class EmptySupportError(GRLimitsError):
    """A constraint mask leaves no valid token with positive probability."""


class AbsoluteContinuityError(GRLimitsError):
    """KL(P || Q) is infinite because P puts mass where Q has none."""


class FeasibilityError(GRLimitsError):
    """An exact computation would exceed its configured size cap."""


class LyapunovError(GRLimitsError):
    """The normal approximation is not licensed for some branches."""

    def __init__(self, message, offending=()):
        super().__init__(message)
        self.offending = tuple(offending)
