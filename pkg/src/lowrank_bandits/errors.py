"""Exception types shared across the package."""


class BanditError(Exception):
    """Base class for all package-specific errors."""


class InvalidInstanceError(BanditError):
    """A bandit instance violates its declared rank/norm/spectrum contract."""


class DimensionMismatchError(BanditError):
    """An arm, parameter, or rotation has incompatible dimensions."""


class NetTooLargeError(BanditError):
    """Building the covering net would exceed the configured element cap."""

    def __init__(self, message: str, estimated_size: float):
        super().__init__(message)
        self.estimated_size = estimated_size


class NetCoverageError(BanditError):
    """The constructed net failed its statistical covering self-check."""


class DivergenceError(BanditError):
    """An iterative solver produced a non-finite or increasing objective."""


class ConfigError(BanditError):
    """An experiment configuration is invalid or inconsistent."""


class InfeasibleScaleError(BanditError):
    """A requested algorithm cannot run at the configured problem scale."""
