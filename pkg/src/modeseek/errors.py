"""Exception types raised by modeseek."""


class ModeseekError(Exception):
    """Base class for all library errors."""


class DimensionError(ModeseekError, ValueError):
    """A point does not match the dimension of the model or point set."""


class NearCriticalError(ModeseekError):
    """The gradient is too small for the normalized gradient to be defined."""


class IsolatedQueryError(ModeseekError):
    """No sample point lies inside the kernel window of the query."""


class IntegrationError(ModeseekError):
    """The flow integrator met a non-finite value."""


class SolverError(ModeseekError):
    """An inner maximization failed to find an improving point away from a critical point."""


class StepUndefinedError(ModeseekError):
    """A step-modulation function is singular at the current density value."""


class LevelTooHighError(ModeseekError):
    """No grid point reaches the requested density level."""


class ConfigError(ModeseekError):
    """Invalid experiment or model configuration."""
