"""Exception types shared across the package.

Every error raised on purpose derives from ResdensError so callers can
catch the package's failures without also swallowing programming bugs.
"""


class ResdensError(Exception):
    """Base class for all errors raised by resdens."""


class InvalidOrder(ResdensError):
    """Derivative order outside the supported range 0..3."""


class DimensionError(ResdensError):
    """Input dimension does not match the object's dimension."""


class InvalidBandwidth(ResdensError):
    """Bandwidth is not a finite positive number."""


class QuadratureError(ResdensError):
    """Quadrature failed to converge to the requested tolerance.

    Carries the last observed deviation in ``deviation``.
    """

    def __init__(self, message: str, deviation: float):
        super().__init__(f"{message} (last deviation {deviation:.3e})")
        self.deviation = deviation


class AllTrimmed(ResdensError):
    """Every observation fell outside the trimming region."""


class GridError(ResdensError):
    """Evaluation grid is too coarse or does not cover the needed mass."""


class InsufficientReplications(ResdensError):
    """Replication count too small for the requested statistic."""


class ConfigError(ResdensError):
    """Malformed or inconsistent experiment configuration."""


class LogDomainError(ResdensError):
    """Nonpositive value where a logarithm is required."""


class DegenerateDenominator(ResdensError):
    """Kept observation with zero leave-one-out local mass."""


class DegenerateReplications(ResdensError):
    """Too large a fraction of replications was degenerate.

    Carries ``count`` and ``total``.
    """

    def __init__(self, count: int, total: int):
        super().__init__(
            f"{count} of {total} replications degenerate (> 10% budget)"
        )
        self.count = count
        self.total = total
