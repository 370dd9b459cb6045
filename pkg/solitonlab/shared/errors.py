# Soliton Lab - Errors
# Exception hierarchy shared by the physics modules and the CLI

EXIT_OK = 0
EXIT_HYPOTHESIS_FAILED = 2
EXIT_NUMERICAL_FAILURE = 3
EXIT_CONFIG_ERROR = 4


class SolitonLabError(Exception):
    """Base class for all errors raised by the package."""
    exit_code = EXIT_NUMERICAL_FAILURE


class ConfigError(SolitonLabError):
    """Invalid, incomplete or unreadable run configuration."""
    exit_code = EXIT_CONFIG_ERROR


class StaleArtifactError(SolitonLabError):
    """An upstream artifact was produced with a different config or grid."""
    exit_code = EXIT_CONFIG_ERROR


class NumericalError(SolitonLabError):
    """A numerical procedure failed to deliver a trustworthy result."""


class GridMismatchError(NumericalError):
    pass


class NoGroundStateError(NumericalError):
    pass


class NonConvergenceError(NumericalError):
    pass


class EigensolverError(NumericalError):
    pass


class ResonantRatioError(NumericalError):
    pass


class ProjectionError(NumericalError):
    pass


class ResolventSingularError(NumericalError):
    pass


class ChannelError(NumericalError):
    pass


class LimitingAbsorptionError(NumericalError):
    pass


class NearResonanceError(NumericalError):
    pass


class TubeExitError(NumericalError):
    """The solution left the neighbourhood where the modulation decomposition exists."""

    def __init__(self, message: str, time: float = float("nan")):
        super().__init__(message)
        self.time = time


class FitUnreliableError(NumericalError):
    pass


class BlowUpError(NumericalError):
    """The solution concentrated past what the time step can follow; finite-time blow-up is likely."""

    def __init__(self, message: str, time: float = float("nan")):
        super().__init__(message)
        self.time = time
